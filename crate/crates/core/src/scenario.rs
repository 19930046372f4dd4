//! Problem instances: radio parameters, ground users and their demands.
//!
//! A scenario is read from a TOML file with three sections:
//!
//! ```toml
//! [radio]
//! altitude_m = 50.0
//! v_max_mps = 50.0
//! bandwidth_hz = 1.0e7
//! noise_psd_dbm_per_hz = -169.0   # or noise_psd_w_per_hz
//! ref_gain_db = -50.0             # or ref_gain_linear
//! uav_power_w = 0.01              # or uav_power_dbm
//!
//! [requirements]
//! rate_bps = 2.0e6                # default average rate (periodic)
//! throughput_bits = 3.0e8         # default throughput (one-time)
//!
//! [[requirements.per_user]]       # optional overrides
//! id = 4
//! rate_bps = 1.0e6
//!
//! [[users]]
//! id = 1
//! x = 120.0
//! y = 3400.0
//! role = "relay_source"           # relay_destination | uplink_source | downlink_destination
//! pair_id = 1
//! uplink_power_w = 0.01           # sources only; or uplink_power_dbm
//! ```
//!
//! Linear units are canonical; the dB variants are converted on load.

use crate::error::{Error, Result};
use crate::geometry::Point;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Periodic,
    #[serde(rename = "onetime")]
    OneTime,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Periodic => "periodic",
            Mode::OneTime => "onetime",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Mode::Periodic),
            "onetime" | "one-time" => Ok(Mode::OneTime),
            other => Err(Error::Parse(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    RelaySource,
    RelayDestination,
    UplinkSource,
    DownlinkDestination,
}

impl Role {
    pub fn is_source(self) -> bool {
        matches!(self, Role::RelaySource | Role::UplinkSource)
    }

    pub fn is_relay(self) -> bool {
        matches!(self, Role::RelaySource | Role::RelayDestination)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub altitude_m: f64,
    pub v_max_mps: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    pub ref_gain_linear: f64,
    pub uav_power_w: f64,
}

impl RadioParams {
    /// Default radio parameters: H = 50 m,
    /// 50 m/s, 10 MHz, -169 dBm/Hz noise, -50 dB reference gain, 10 mW.
    pub fn standard() -> Self {
        Self {
            altitude_m: 50.0,
            v_max_mps: 50.0,
            bandwidth_hz: 1.0e7,
            noise_psd_w_per_hz: dbm_to_watts(-169.0),
            ref_gain_linear: db_to_linear(-50.0),
            uav_power_w: 0.01,
        }
    }

    /// Reference SNR at 1 m, `lambda0 / (B N0)`.
    pub fn gamma0(&self) -> f64 {
        self.ref_gain_linear / (self.bandwidth_hz * self.noise_psd_w_per_hz)
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("altitude_m", self.altitude_m),
            ("v_max_mps", self.v_max_mps),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_psd", self.noise_psd_w_per_hz),
            ("ref_gain", self.ref_gain_linear),
            ("uav_power", self.uav_power_w),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("radio.{name} must be positive and finite, got {v}")));
            }
        }
        let g = self.gamma0();
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::Validation(format!("reference SNR gamma0 = {g} is not positive")));
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundUser {
    pub id: u32,
    pub position: Point,
    pub role: Role,
    pub uplink_power_w: Option<f64>,
    pub pair_id: Option<u32>,
    pub rate_bps: Option<f64>,
    pub throughput_bits: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// One information flow, i.e. one entry of the combined user index set.
/// Sources come first, relay sources leading; destinations follow with
/// relay destinations leading, so relay pair `k` is flows `k` and `U + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub user: usize,
    pub direction: Direction,
    pub position: Point,
    /// Fixed source power for uplink flows.
    pub uplink_power_w: Option<f64>,
    /// Relay pair index (0-based) if the flow belongs to a relay pair.
    pub pair: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub radio: RadioParams,
    pub users: Vec<GroundUser>,
    flows: Vec<Flow>,
    n_sources: usize,
    k1: usize,
    k2: usize,
    k3: usize,
    gamma0: f64,
}

impl Scenario {
    pub fn new(radio: RadioParams, users: Vec<GroundUser>) -> Result<Self> {
        radio.validate()?;
        if users.is_empty() {
            return Err(Error::Validation("scenario has no users".into()));
        }
        let mut ids = HashSet::new();
        let mut positions: HashSet<(u64, u64)> = HashSet::new();
        for u in &users {
            if !ids.insert(u.id) {
                return Err(Error::Validation(format!("duplicate user id {}", u.id)));
            }
            if !(u.position.x.is_finite() && u.position.y.is_finite()) {
                return Err(Error::Validation(format!("user {} has a non-finite position", u.id)));
            }
            if !positions.insert((u.position.x.to_bits(), u.position.y.to_bits())) {
                log::warn!("user {} shares its position with another user", u.id);
            }
            match (u.role.is_source(), u.uplink_power_w) {
                (true, Some(p)) if p.is_finite() && p > 0.0 => {}
                (true, Some(p)) => {
                    return Err(Error::Validation(format!("user {}: uplink_power must be positive, got {p}", u.id)))
                }
                (true, None) => return Err(Error::Validation(format!("source user {} has no uplink_power", u.id))),
                (false, Some(_)) => {
                    return Err(Error::Validation(format!("destination user {} must not set uplink_power", u.id)))
                }
                (false, None) => {}
            }
            match (u.role.is_relay(), u.pair_id) {
                (true, None) => return Err(Error::Validation(format!("relay user {} has no pair_id", u.id))),
                (false, Some(p)) => {
                    return Err(Error::Validation(format!("user {} is not a relay but sets pair_id {p}", u.id)))
                }
                _ => {}
            }
            for (name, v) in [("rate_bps", u.rate_bps), ("throughput_bits", u.throughput_bits)] {
                if let Some(v) = v {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::Validation(format!("user {}: {name} must be positive, got {v}", u.id)));
                    }
                }
            }
        }

        // Relay pairs: exactly one source and one destination per pair_id.
        let mut pairs: BTreeMap<u32, (Option<usize>, Option<usize>)> = BTreeMap::new();
        for (idx, u) in users.iter().enumerate() {
            if let Some(pid) = u.pair_id {
                let entry = pairs.entry(pid).or_default();
                let slot = if u.role == Role::RelaySource { &mut entry.0 } else { &mut entry.1 };
                if slot.is_some() {
                    return Err(Error::Validation(format!("pair_id {pid} has more than one {:?}", u.role)));
                }
                *slot = Some(idx);
            }
        }
        let mut relay = Vec::new();
        for (pid, (s, d)) in &pairs {
            match (s, d) {
                (Some(s), Some(d)) => relay.push((*s, *d)),
                (Some(_), None) => {
                    return Err(Error::Validation(format!("pair_id {pid}: relay source has no paired destination")))
                }
                (None, Some(_)) => {
                    return Err(Error::Validation(format!("pair_id {pid}: relay destination has no paired source")))
                }
                (None, None) => unreachable!(),
            }
        }
        for &(s, d) in &relay {
            let (us, ud) = (&users[s], &users[d]);
            if us.rate_bps != ud.rate_bps || us.throughput_bits != ud.throughput_bits {
                return Err(Error::Validation(format!(
                    "pair_id {}: relay source and destination requirements must be equal",
                    us.pair_id.unwrap_or_default()
                )));
            }
        }

        let mut flows = Vec::with_capacity(users.len());
        let flow = |idx: usize, dir: Direction, pair: Option<usize>| Flow {
            user: idx,
            direction: dir,
            position: users[idx].position,
            uplink_power_w: users[idx].uplink_power_w,
            pair,
        };
        for (k, &(s, _)) in relay.iter().enumerate() {
            flows.push(flow(s, Direction::Uplink, Some(k)));
        }
        for (idx, u) in users.iter().enumerate() {
            if u.role == Role::UplinkSource {
                flows.push(flow(idx, Direction::Uplink, None));
            }
        }
        let n_sources = flows.len();
        for (k, &(_, d)) in relay.iter().enumerate() {
            flows.push(flow(d, Direction::Downlink, Some(k)));
        }
        for (idx, u) in users.iter().enumerate() {
            if u.role == Role::DownlinkDestination {
                flows.push(flow(idx, Direction::Downlink, None));
            }
        }
        let k3 = relay.len();
        let scn = Scenario {
            gamma0: radio.gamma0(),
            radio,
            k1: n_sources - k3,
            k2: flows.len() - n_sources - k3,
            k3,
            n_sources,
            flows,
            users,
        };
        debug_assert_eq!(scn.k1 + scn.k2 + 2 * scn.k3, scn.users.len());
        Ok(scn)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Flows in combined index order (sources, then destinations).
    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    /// Number of source flows `U`.
    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    /// Number of destination flows `V`.
    pub fn n_destinations(&self) -> usize {
        self.flows.len() - self.n_sources
    }

    pub fn n_flows(&self) -> usize {
        self.flows.len()
    }

    /// (K1, K2, K3): uplink-only, downlink-only and relay-pair counts.
    pub fn group_counts(&self) -> (usize, usize, usize) {
        (self.k1, self.k2, self.k3)
    }

    pub fn n_pairs(&self) -> usize {
        self.k3
    }

    pub fn flow_positions(&self) -> Vec<Point> {
        self.flows.iter().map(|f| f.position).collect()
    }

    /// Relay pairs as (source flow, destination flow) indices.
    pub fn relay_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.k3).map(|k| (k, self.n_sources + k)).collect()
    }

    /// Transmit power of a flow at full bandwidth: `P^u` for uplink, `P^v` for downlink.
    pub fn flow_power(&self, f: usize) -> f64 {
        match self.flows[f].direction {
            Direction::Uplink => self.flows[f].uplink_power_w.expect("validated"),
            Direction::Downlink => self.radio.uav_power_w,
        }
    }

    /// Requirement of flow `f`: average rate (bps) for periodic mode,
    /// throughput (bits) for one-time mode.
    pub fn requirement(&self, mode: Mode, f: usize) -> Option<f64> {
        let u = &self.users[self.flows[f].user];
        match mode {
            Mode::Periodic => u.rate_bps,
            Mode::OneTime => u.throughput_bits,
        }
    }

    /// All requirements for `mode`, or a validation error naming the first
    /// user that lacks one.
    pub fn requirements(&self, mode: Mode) -> Result<Vec<f64>> {
        (0..self.n_flows())
            .map(|f| {
                self.requirement(mode, f).ok_or_else(|| {
                    let what = match mode {
                        Mode::Periodic => "rate_bps",
                        Mode::OneTime => "throughput_bits",
                    };
                    Error::Validation(format!("user {} has no {what} requirement", self.users[self.flows[f].user].id))
                })
            })
            .collect()
    }

    /// Copy with every requirement multiplied by `factor`.
    pub fn scaled_requirements(&self, factor: f64) -> Scenario {
        let mut s = self.clone();
        for u in &mut s.users {
            u.rate_bps = u.rate_bps.map(|v| v * factor);
            u.throughput_bits = u.throughput_bits.map(|v| v * factor);
        }
        s
    }

    /// Copy with every requirement of `mode` set to `value`.
    pub fn with_uniform_requirement(&self, mode: Mode, value: f64) -> Scenario {
        let mut s = self.clone();
        for u in &mut s.users {
            match mode {
                Mode::Periodic => u.rate_bps = Some(value),
                Mode::OneTime => u.throughput_bits = Some(value),
            }
        }
        s
    }

    pub fn user_id_of_flow(&self, f: usize) -> u32 {
        self.users[self.flows[f].user].id
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_scenario()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML text: linear units, every requirement spelled out per user.
    pub fn to_toml_string(&self) -> String {
        let file = ScenarioFile {
            radio: RadioSection {
                altitude_m: self.radio.altitude_m,
                v_max_mps: self.radio.v_max_mps,
                bandwidth_hz: self.radio.bandwidth_hz,
                noise_psd_w_per_hz: Some(self.radio.noise_psd_w_per_hz),
                noise_psd_dbm_per_hz: None,
                ref_gain_linear: Some(self.radio.ref_gain_linear),
                ref_gain_db: None,
                uav_power_w: Some(self.radio.uav_power_w),
                uav_power_dbm: None,
            },
            requirements: Some(RequirementsSection {
                rate_bps: None,
                throughput_bits: None,
                per_user: self
                    .users
                    .iter()
                    .filter(|u| u.rate_bps.is_some() || u.throughput_bits.is_some())
                    .map(|u| UserRequirement { id: u.id, rate_bps: u.rate_bps, throughput_bits: u.throughput_bits })
                    .collect(),
            }),
            users: self
                .users
                .iter()
                .map(|u| UserEntry {
                    id: u.id,
                    x: u.position.x,
                    y: u.position.y,
                    role: u.role,
                    pair_id: u.pair_id,
                    uplink_power_w: u.uplink_power_w,
                    uplink_power_dbm: None,
                })
                .collect(),
        };
        toml::to_string(&file).expect("scenario serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    radio: RadioSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    requirements: Option<RequirementsSection>,
    users: Vec<UserEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadioSection {
    altitude_m: f64,
    v_max_mps: f64,
    bandwidth_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_psd_w_per_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_psd_dbm_per_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_gain_linear: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_gain_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uav_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uav_power_dbm: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequirementsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    throughput_bits: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    per_user: Vec<UserRequirement>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserRequirement {
    id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    throughput_bits: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserEntry {
    id: u32,
    x: f64,
    y: f64,
    role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uplink_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uplink_power_dbm: Option<f64>,
}

fn one_of(name: &str, linear: Option<f64>, log: Option<f64>, convert: fn(f64) -> f64) -> Result<f64> {
    match (linear, log) {
        (Some(v), None) => Ok(v),
        (None, Some(v)) => Ok(convert(v)),
        (Some(_), Some(_)) => Err(Error::Validation(format!("{name}: give either the linear or the dB value, not both"))),
        (None, None) => Err(Error::Validation(format!("{name} is missing"))),
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let r = &self.radio;
        let radio = RadioParams {
            altitude_m: r.altitude_m,
            v_max_mps: r.v_max_mps,
            bandwidth_hz: r.bandwidth_hz,
            noise_psd_w_per_hz: one_of("radio.noise_psd", r.noise_psd_w_per_hz, r.noise_psd_dbm_per_hz, dbm_to_watts)?,
            ref_gain_linear: one_of("radio.ref_gain", r.ref_gain_linear, r.ref_gain_db, db_to_linear)?,
            uav_power_w: one_of("radio.uav_power", r.uav_power_w, r.uav_power_dbm, dbm_to_watts)?,
        };
        let req = self.requirements.unwrap_or_default();
        let known: HashSet<u32> = self.users.iter().map(|u| u.id).collect();
        let mut overrides: BTreeMap<u32, &UserRequirement> = BTreeMap::new();
        for o in &req.per_user {
            if !known.contains(&o.id) {
                return Err(Error::Validation(format!("requirement override for unknown user id {}", o.id)));
            }
            if overrides.insert(o.id, o).is_some() {
                return Err(Error::Validation(format!("duplicate requirement override for user id {}", o.id)));
            }
        }
        let mut users = Vec::with_capacity(self.users.len());
        for u in &self.users {
            let power = if u.uplink_power_w.is_some() || u.uplink_power_dbm.is_some() {
                Some(one_of(&format!("user {} uplink_power", u.id), u.uplink_power_w, u.uplink_power_dbm, dbm_to_watts)?)
            } else {
                None
            };
            let o = overrides.get(&u.id);
            users.push(GroundUser {
                id: u.id,
                position: Point::new(u.x, u.y),
                role: u.role,
                uplink_power_w: power,
                pair_id: u.pair_id,
                rate_bps: o.and_then(|o| o.rate_bps).or(req.rate_bps),
                throughput_bits: o.and_then(|o| o.throughput_bits).or(req.throughput_bits),
            });
        }
        Scenario::new(radio, users)
    }
}
