//! Seeded random scenarios: users placed uniformly in a square, radio
//! parameters at their defaults.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scenario::{GroundUser, RadioParams, Role, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uplink transmit power of generated sources (W).
pub const DEFAULT_UPLINK_POWER_W: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub seed: u64,
    pub n_users: usize,
    pub box_side_m: f64,
    /// Uplink-only users.
    pub uplink: usize,
    /// Downlink-only users.
    pub downlink: usize,
    /// Relay pairs (two users each).
    pub pairs: usize,
    pub rate_bps: Option<f64>,
    pub throughput_bits: Option<f64>,
}

impl GenerateConfig {
    /// All users in relay pairs, plus one uplink user if the count is odd.
    pub fn relay_only(seed: u64, n_users: usize, box_side_m: f64) -> Self {
        Self {
            seed,
            n_users,
            box_side_m,
            uplink: n_users % 2,
            downlink: 0,
            pairs: n_users / 2,
            rate_bps: None,
            throughput_bits: None,
        }
    }
}

pub fn generate_scenario(cfg: &GenerateConfig) -> Result<Scenario> {
    if cfg.n_users == 0 {
        return Err(Error::Validation("n_users must be at least 1".into()));
    }
    let counted = cfg.uplink + cfg.downlink + 2 * cfg.pairs;
    if counted != cfg.n_users {
        return Err(Error::Validation(format!(
            "mode counts give {counted} users ({} uplink + {} downlink + 2 x {} pairs) but n_users = {}",
            cfg.uplink, cfg.downlink, cfg.pairs, cfg.n_users
        )));
    }
    if !(cfg.box_side_m.is_finite() && cfg.box_side_m > 0.0) {
        return Err(Error::Validation(format!("box side must be positive, got {}", cfg.box_side_m)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut users = Vec::with_capacity(cfg.n_users);
    let mut next_id = 1u32;
    let mut add = |rng: &mut ChaCha8Rng, role: Role, pair_id: Option<u32>| {
        let position = Point::new(rng.gen::<f64>() * cfg.box_side_m, rng.gen::<f64>() * cfg.box_side_m);
        users.push(GroundUser {
            id: next_id,
            position,
            role,
            uplink_power_w: role.is_source().then_some(DEFAULT_UPLINK_POWER_W),
            pair_id,
            rate_bps: cfg.rate_bps,
            throughput_bits: cfg.throughput_bits,
        });
        next_id += 1;
    };
    for k in 0..cfg.pairs {
        let pid = Some(k as u32 + 1);
        add(&mut rng, Role::RelaySource, pid);
        add(&mut rng, Role::RelayDestination, pid);
    }
    for _ in 0..cfg.uplink {
        add(&mut rng, Role::UplinkSource, None);
    }
    for _ in 0..cfg.downlink {
        add(&mut rng, Role::DownlinkDestination, None);
    }
    Scenario::new(RadioParams::standard(), users)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        let cfg = GenerateConfig::relay_only(7, 6, 6000.0);
        let a = generate_scenario(&cfg).unwrap().to_toml_string();
        let b = generate_scenario(&cfg).unwrap().to_toml_string();
        assert_eq!(a, b);
    }

    #[test]
    fn counts_must_add_up() {
        let mut cfg = GenerateConfig::relay_only(1, 6, 6000.0);
        cfg.uplink = 1;
        assert!(matches!(generate_scenario(&cfg), Err(Error::Validation(_))));
        cfg = GenerateConfig::relay_only(1, 0, 6000.0);
        assert!(generate_scenario(&cfg).is_err());
    }

    #[test]
    fn three_pairs_in_box() {
        let s = generate_scenario(&GenerateConfig::relay_only(3, 6, 6000.0)).unwrap();
        assert_eq!(s.group_counts(), (0, 0, 3));
        assert!(s.flow_positions().iter().all(|p| (0.0..=6000.0).contains(&p.x) && (0.0..=6000.0).contains(&p.y)));
    }
}
