//! The two convex blocks of the alternating scheme: bandwidth/power
//! allocation for a fixed trajectory, and a trajectory step against the
//! concave rate surrogate for a fixed allocation. Both modes share the code;
//! one-time operation adds slot windows and relay causality.

mod alloc;
mod traj;

pub use alloc::{solve_alloc, solve_alloc_onetime, solve_alloc_periodic, trim_to_buffer, zenith_ceiling, AllocResult};
pub use traj::{solve_traj, solve_traj_onetime, solve_traj_periodic, TrajResult};

use crate::channel;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scenario::{Direction, Mode, Scenario};

/// Shares below this are treated as switched off after a solve.
pub const SHARE_FLOOR: f64 = 1e-6;

/// Per-slot bandwidth fractions and downlink powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `alpha[i][n]`, source flows.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[j][n]`, destination flows.
    pub beta: Vec<Vec<f64>>,
    /// `p[j][n]` in watts.
    pub power: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn zeros(u: usize, v: usize, n: usize) -> Self {
        Self { alpha: vec![vec![0.0; n]; u], beta: vec![vec![0.0; n]; v], power: vec![vec![0.0; n]; v] }
    }

    pub fn n_slots(&self) -> usize {
        self.alpha.first().or(self.beta.first()).map_or(0, Vec::len)
    }

    /// Bandwidth share of flow `f` (combined index) in slot `n`.
    pub fn share(&self, f: usize, n: usize) -> f64 {
        let u = self.alpha.len();
        if f < u {
            self.alpha[f][n]
        } else {
            self.beta[f - u][n]
        }
    }

    fn share_mut(&mut self, f: usize, n: usize) -> &mut f64 {
        let u = self.alpha.len();
        if f < u {
            &mut self.alpha[f][n]
        } else {
            &mut self.beta[f - u][n]
        }
    }

    /// Transmit power behind flow `f` in slot `n`.
    pub fn power_of(&self, scn: &Scenario, f: usize, n: usize) -> f64 {
        let u = self.alpha.len();
        if f < u {
            scn.flow_power(f)
        } else {
            self.power[f - u][n]
        }
    }

    /// Every counted flow gets an equal share of the band and of the UAV power.
    pub fn equal_split(prob: &Problem, n_slots: usize) -> Self {
        let scn = prob.scn;
        let (u, v) = (scn.n_sources(), scn.n_destinations());
        let mut a = Allocation::zeros(u, v, n_slots);
        for n in 0..n_slots {
            let active: Vec<usize> = (0..scn.n_flows()).filter(|&f| prob.counted(f, n, n_slots)).collect();
            let down = active.iter().filter(|&&f| f >= u).count();
            for &f in &active {
                *a.share_mut(f, n) = 1.0 / active.len() as f64;
                if f >= u {
                    a.power[f - u][n] = scn.radio.uav_power_w / down as f64;
                }
            }
        }
        a
    }
}

/// A trajectory with its allocation and achieved min-ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlan {
    pub mode: Mode,
    pub delta_t: f64,
    pub q: Vec<Point>,
    pub alloc: Allocation,
    pub eta: f64,
}

impl DiscretePlan {
    pub fn n_slots(&self) -> usize {
        self.q.len()
    }

    pub fn duration(&self) -> f64 {
        self.q.len() as f64 * self.delta_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub objective_eta: f64,
    pub iterations: u32,
    pub converged: bool,
    pub max_constraint_violation: f64,
}

/// Scenario, operating mode and time step, with the matching requirements.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub scn: &'a Scenario,
    pub mode: Mode,
    pub delta_t: f64,
    req: Vec<f64>,
    req_max: f64,
}

impl<'a> Problem<'a> {
    pub fn new(scn: &'a Scenario, mode: Mode, delta_t: f64) -> Result<Self> {
        if !(delta_t.is_finite() && delta_t > 0.0) {
            return Err(Error::Validation(format!("time step must be positive, got {delta_t}")));
        }
        let req = scn.requirements(mode)?;
        let req_max = req.iter().cloned().fold(0.0, f64::max);
        Ok(Self { scn, mode, delta_t, req, req_max })
    }

    pub fn requirement(&self, f: usize) -> f64 {
        self.req[f]
    }

    /// Requirement relative to the largest one, so solver data do not depend
    /// on the overall requirement scale.
    pub fn weight(&self, f: usize) -> f64 {
        self.req[f] / self.req_max
    }

    /// Whether slot `n` of `n_slots` contributes to flow `f`. One-time uplink
    /// sums skip the last slot and downlink sums skip the first.
    pub fn counted(&self, f: usize, n: usize, n_slots: usize) -> bool {
        match (self.mode, self.scn.flows()[f].direction) {
            (Mode::Periodic, _) => true,
            (Mode::OneTime, Direction::Uplink) => n + 1 < n_slots,
            (Mode::OneTime, Direction::Downlink) => n >= 1,
        }
    }

    pub fn max_step(&self) -> f64 {
        self.scn.radio.v_max_mps * self.delta_t
    }

    /// Converts a per-slot mean (periodic) or sum (one-time) of nats, divided
    /// by the normalised weight, into the min-ratio scale.
    fn eta_scale(&self, n_slots: usize) -> f64 {
        let b = self.scn.radio.bandwidth_hz;
        match self.mode {
            Mode::Periodic => b / (std::f64::consts::LN_2 * self.req_max),
            Mode::OneTime => b * self.delta_t * n_slots as f64 / (std::f64::consts::LN_2 * self.req_max),
        }
    }

    /// Exact per-slot spectral efficiencies `[flow][slot]`.
    pub fn slot_rates(&self, q: &[Point], alloc: &Allocation) -> Vec<Vec<f64>> {
        let scn = self.scn;
        let (g0, h) = (scn.gamma0(), scn.radio.altitude_m);
        (0..scn.n_flows())
            .map(|f| {
                let pos = scn.flows()[f].position;
                (0..q.len())
                    .map(|n| channel::rate_at(q[n], pos, alloc.share(f, n), alloc.power_of(scn, f, n), g0, h))
                    .collect()
            })
            .collect()
    }

    /// Achieved average rate (bps, periodic) or throughput (bits, one-time)
    /// per flow. Relay destinations in one-time mode count only what the
    /// buffer allows them to receive.
    pub fn flow_metrics(&self, q: &[Point], alloc: &Allocation) -> Vec<f64> {
        let rates = self.slot_rates(q, alloc);
        self.metrics_from_rates(&rates)
    }

    pub fn metrics_from_rates(&self, rates: &[Vec<f64>]) -> Vec<f64> {
        let scn = self.scn;
        let n_slots = rates.first().map_or(0, Vec::len);
        let b = scn.radio.bandwidth_hz;
        let u = scn.n_sources();
        (0..scn.n_flows())
            .map(|f| match self.mode {
                Mode::Periodic => b * rates[f].iter().sum::<f64>() / n_slots as f64,
                Mode::OneTime => {
                    let total: f64 = match scn.flows()[f].pair {
                        Some(k) if f >= u => greedy_delivery(&rates[k], &rates[f]).iter().sum(),
                        _ => (0..n_slots).filter(|&n| self.counted(f, n, n_slots)).map(|n| rates[f][n]).sum(),
                    };
                    b * self.delta_t * total
                }
            })
            .collect()
    }

    /// Exact min-ratio of a plan.
    pub fn eta(&self, q: &[Point], alloc: &Allocation) -> f64 {
        self.flow_metrics(q, alloc)
            .iter()
            .enumerate()
            .map(|(f, m)| m / self.req[f])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_trajectory(&self, q: &[Point]) -> Result<()> {
        if q.len() < 2 {
            return Err(Error::Validation(format!("trajectory needs at least 2 slots, got {}", q.len())));
        }
        let d = self.max_step();
        for n in 0..q.len() - 1 {
            let step = q[n].dist(q[n + 1]);
            if step > d + 1e-6 {
                return Err(Error::Validation(format!(
                    "trajectory violates the speed limit between slots {} and {} ({step} m > {d} m)",
                    n + 1,
                    n + 2
                )));
            }
        }
        if self.mode == Mode::Periodic && q[0] != q[q.len() - 1] {
            return Err(Error::Validation(format!("periodic trajectory is not closed at slot {}", q.len())));
        }
        Ok(())
    }
}

/// Greedy relay forwarding: in each slot deliver as much as the link and the
/// buffer allow. Uplink slot `n - 1` feeds downlink slot `n`; slot 0 delivers
/// nothing. This maximises every cumulative delivered amount.
pub fn greedy_delivery(uplink: &[f64], downlink: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; downlink.len()];
    let mut buffer = 0.0;
    for n in 1..downlink.len() {
        buffer += uplink[n - 1];
        let d = downlink[n].min(buffer).max(0.0);
        out[n] = d;
        buffer -= d;
    }
    out
}

/// Largest per-slot excess of bandwidth or power sums.
pub fn allocation_violation(scn: &Scenario, alloc: &Allocation) -> f64 {
    let pv = scn.radio.uav_power_w;
    let mut worst = 0.0f64;
    for n in 0..alloc.n_slots() {
        let bw: f64 = alloc.alpha.iter().map(|a| a[n]).sum::<f64>() + alloc.beta.iter().map(|b| b[n]).sum::<f64>();
        let pw: f64 = alloc.power.iter().map(|p| p[n]).sum();
        worst = worst.max(bw - 1.0).max((pw - pv) / pv);
        for v in alloc.alpha.iter().chain(&alloc.beta).chain(&alloc.power) {
            worst = worst.max(-v[n]);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_respects_buffer() {
        let up = [1.0, 0.0, 2.0, 0.0];
        let down = [5.0, 0.5, 3.0, 3.0];
        let d = greedy_delivery(&up, &down);
        assert_eq!(d, vec![0.0, 0.5, 0.5, 2.0]);
    }
}
