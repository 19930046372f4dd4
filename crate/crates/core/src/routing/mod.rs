//! Initial trajectories: a visiting order over the users (TSP, or PDP with
//! relay precedence), hover times when the period is long enough, disks
//! around the users when it is not, and a circular benchmark.

pub mod tsp;
mod waypoints;

pub use tsp::{solve_pdp, solve_tsp, tour_length, Tour, EXACT_LIMIT};
pub use waypoints::{optimize_waypoints_fixed_order, radius_bisection, RADIUS_TOLERANCE};

use crate::channel;
use crate::error::{Error, Result};
use crate::geometry::{centroid, Point};
use crate::scenario::{Mode, Scenario};
use serde::Serialize;
use std::f64::consts::TAU;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    Tsp,
    Pdp,
    Circle,
}

impl InitScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            InitScheme::Tsp => "tsp",
            InitScheme::Pdp => "pdp",
            InitScheme::Circle => "circle",
        }
    }

    /// Default scheme of a mode: closed TSP for periodic, PDP for one-time.
    pub fn default_for(mode: Mode) -> Self {
        match mode {
            Mode::Periodic => InitScheme::Tsp,
            Mode::OneTime => InitScheme::Pdp,
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsp" => Ok(InitScheme::Tsp),
            "pdp" => Ok(InitScheme::Pdp),
            "circle" => Ok(InitScheme::Circle),
            other => Err(Error::Validation(format!("unknown init scheme '{other}' (expected tsp, pdp or circle)"))),
        }
    }
}

/// Visiting order over the flows of `scn`. Periodic routes are closed; a
/// PDP request in periodic mode falls back to TSP.
pub fn plan_route(scn: &Scenario, mode: Mode, scheme: InitScheme) -> Result<(InitScheme, Tour)> {
    let pts = scn.flow_positions();
    let scheme = match (mode, scheme) {
        (Mode::Periodic, InitScheme::Pdp) => {
            log::warn!("pdp initialisation needs an open route; using tsp for periodic operation");
            InitScheme::Tsp
        }
        (_, InitScheme::Circle) => InitScheme::default_for(mode),
        (_, s) => s,
    };
    if pts.len() == 1 {
        let tour = Tour { order: vec![0], length: 0.0, closed: mode == Mode::Periodic, exact: true };
        return Ok((scheme, tour));
    }
    let tour = match (mode, scheme) {
        (Mode::Periodic, _) => solve_tsp(&pts, true)?,
        (Mode::OneTime, InitScheme::Pdp) => solve_pdp(&pts, &scn.relay_pairs())?,
        (Mode::OneTime, _) => solve_tsp(&pts, false)?,
    };
    Ok((scheme, tour))
}

/// Flight time of the mode's default route at full speed.
pub fn route_time(scn: &Scenario, mode: Mode) -> Result<f64> {
    let (_, tour) = plan_route(scn, mode, InitScheme::default_for(mode))?;
    Ok(tour.length / scn.radio.v_max_mps)
}

/// Hover seconds per flow: proportional to the time each flow would need at
/// its zenith to meet its requirement, scaled to `t - travel` in total.
/// One-time requirements are read as the average rate `C / t`.
pub fn hover_allocation(scn: &Scenario, mode: Mode, t: f64, travel: f64) -> Result<Vec<f64>> {
    if !(t >= travel) {
        return Err(Error::Validation(format!("period {t} s is shorter than the travel time {travel} s")));
    }
    let req = scn.requirements(mode)?;
    let (g0, h, b) = (scn.gamma0(), scn.radio.altitude_m, scn.radio.bandwidth_hz);
    let need: Vec<f64> = (0..scn.n_flows())
        .map(|f| {
            let rbar = match mode {
                Mode::Periodic => req[f],
                Mode::OneTime => req[f] / t,
            };
            t * rbar / (b * channel::zenith_rate(scn.flow_power(f), g0, h))
        })
        .collect();
    let total: f64 = need.iter().sum();
    let spare = t - travel;
    let mut out: Vec<f64> = need.iter().map(|x| x * spare / total).collect();
    let n = out.len();
    let head: f64 = out[..n - 1].iter().sum();
    out[n - 1] = (spare - head).max(0.0);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct InitialTrajectory {
    pub q: Vec<Point>,
    /// Scheme actually used.
    pub scheme: InitScheme,
    /// Flow indices in visiting order (empty for the circle).
    pub order: Vec<usize>,
    /// Waypoint per flow index.
    pub waypoints: Vec<Point>,
    /// Hover seconds per flow index.
    pub hover: Vec<f64>,
    pub route_length: f64,
    pub route_time: f64,
    /// 1: hover at the users, 2: disk waypoints, 0: circle.
    pub case: u8,
    pub r_star: f64,
    /// True when the visiting order came from the heuristic.
    pub heuristic: bool,
}

/// Samples of a continuous path that hovers at each waypoint and then flies
/// to the next at `speed`.
fn sample_path(points: &[Point], hover: &[f64], closed: bool, speed: f64, n_slots: usize, dt: f64) -> Vec<Point> {
    // (start, duration, from, to)
    let mut segs: Vec<(f64, f64, Point, Point)> = Vec::new();
    let mut t = 0.0;
    let m = points.len();
    for k in 0..m {
        let p = points[k];
        if hover[k] > 0.0 {
            segs.push((t, hover[k], p, p));
            t += hover[k];
        }
        let next = if k + 1 < m {
            points[k + 1]
        } else if closed {
            points[0]
        } else {
            continue;
        };
        let dur = p.dist(next) / speed;
        if dur > 0.0 {
            segs.push((t, dur, p, next));
            t += dur;
        }
    }
    let end = if closed { points[0] } else { points[m - 1] };
    let mut q = Vec::with_capacity(n_slots);
    let mut s = 0;
    for i in 0..n_slots {
        let ti = i as f64 * dt;
        while s < segs.len() && ti >= segs[s].0 + segs[s].1 {
            s += 1;
        }
        q.push(match segs.get(s) {
            Some(&(start, dur, a, b)) => a.lerp(b, ((ti - start) / dur).clamp(0.0, 1.0)),
            None => end,
        });
    }
    if closed {
        q[n_slots - 1] = q[0];
    }
    q
}

/// Rounds hover times to whole slots with largest-remainder apportionment;
/// the sub-slot remainder of the total stays at the first waypoint.
fn round_hover(hover: &[f64], dt: f64) -> Vec<f64> {
    let total: f64 = hover.iter().sum();
    let whole = (total / dt + 1e-9).floor();
    let exact: Vec<f64> = hover.iter().map(|h| h / dt).collect();
    let mut slots: Vec<f64> = exact.iter().map(|x| x.floor()).collect();
    let mut left = (whole - slots.iter().sum::<f64>()).max(0.0) as usize;
    let mut idx: Vec<usize> = (0..hover.len()).collect();
    idx.sort_by(|&a, &b| (exact[b] - slots[b]).total_cmp(&(exact[a] - slots[a])).then(a.cmp(&b)));
    for &i in idx.iter().cycle() {
        if left == 0 {
            break;
        }
        slots[i] += 1.0;
        left -= 1;
    }
    let mut out: Vec<f64> = slots.iter().map(|s| s * dt).collect();
    if let Some(first) = out.first_mut() {
        *first += (total - whole * dt).max(0.0);
    }
    out
}

/// Initial trajectory with `n_slots` samples spaced `dt` apart.
pub fn build_initial_trajectory(
    scn: &Scenario,
    mode: Mode,
    scheme: InitScheme,
    n_slots: usize,
    dt: f64,
) -> Result<InitialTrajectory> {
    if n_slots < 2 {
        return Err(Error::Validation(format!("need at least 2 slots, got {n_slots}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("time step must be positive, got {dt}")));
    }
    let v = scn.radio.v_max_mps;
    let avail = (n_slots - 1) as f64 * dt;
    let centers = scn.flow_positions();
    let closed = mode == Mode::Periodic;

    if scheme == InitScheme::Circle {
        let (lo, hi) = centers.iter().fold(
            (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
            |(lo, hi), p| (Point::new(lo.x.min(p.x), lo.y.min(p.y)), Point::new(hi.x.max(p.x), hi.y.max(p.y))),
        );
        let c = centroid(&centers);
        let radius = (0.5 * lo.dist(hi)).min(v * avail / TAU);
        let mut q: Vec<Point> = (0..n_slots)
            .map(|i| {
                let th = TAU * i as f64 / (n_slots - 1) as f64;
                c + Point::new(th.cos(), th.sin()) * radius
            })
            .collect();
        q[n_slots - 1] = q[0];
        return Ok(InitialTrajectory {
            q,
            scheme,
            order: Vec::new(),
            waypoints: Vec::new(),
            hover: Vec::new(),
            route_length: TAU * radius,
            route_time: TAU * radius / v,
            case: 0,
            r_star: 0.0,
            heuristic: false,
        });
    }

    let (scheme, tour) = plan_route(scn, mode, scheme)?;
    let travel = tour.length / v;
    let (case, r_star, waypoints, length) = if travel <= avail {
        (1, 0.0, centers.clone(), tour.length)
    } else {
        let (r, g, l) = radius_bisection(&centers, &tour.order, avail, v, closed)?;
        (2, r, g, l)
    };
    let hover = hover_allocation(scn, mode, avail, (length / v).min(avail))?;
    let in_order = |x: &[f64]| -> Vec<f64> { tour.order.iter().map(|&w| x[w]).collect() };
    let rounded = round_hover(&in_order(&hover), dt);
    let pts: Vec<Point> = tour.order.iter().map(|&w| waypoints[w]).collect();
    let q = sample_path(&pts, &rounded, closed, v, n_slots, dt);
    Ok(InitialTrajectory {
        q,
        scheme,
        order: tour.order.clone(),
        waypoints,
        hover,
        route_length: tour.length,
        route_time: travel,
        case,
        r_star,
        heuristic: !tour.exact,
    })
}

/// Whether every relay source comes before its destination in `order`.
pub fn precedence_respected(scn: &Scenario, order: &[usize]) -> bool {
    let pos = |f: usize| order.iter().position(|&x| x == f);
    scn.relay_pairs().iter().all(|&(s, d)| match (pos(s), pos(d)) {
        (Some(a), Some(b)) => a < b,
        _ => false,
    })
}
