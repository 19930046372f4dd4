//! Alternating allocation/trajectory optimisation at a fixed duration, and
//! the search for the shortest duration that meets every requirement.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::routing::{self, InitScheme, InitialTrajectory};
use crate::scenario::{Mode, Scenario};
use crate::subproblems::{solve_alloc, solve_traj, trim_to_buffer, zenith_ceiling, Allocation, DiscretePlan, Problem};
use serde::Serialize;

/// Feasibility margin on the periodic ceiling.
const CEILING_SLACK: f64 = 1e-6;
/// Trust-region retries after a rejected trajectory step.
const TRUST_RETRIES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcdConfig {
    /// Stop when the relative gain of one iteration drops below this.
    pub eta_tolerance: f64,
    pub max_iterations: usize,
    pub delta_t: f64,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self { eta_tolerance: 1e-3, max_iterations: 100, delta_t: 1.0 }
    }
}

impl BcdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_tolerance > 0.0) {
            return Err(Error::Validation(format!("eta tolerance must be positive, got {}", self.eta_tolerance)));
        }
        if self.max_iterations < 1 {
            return Err(Error::Validation("max iterations must be at least 1".into()));
        }
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(Error::Validation(format!("time step must be positive, got {}", self.delta_t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionConfig {
    pub t_tolerance: f64,
    /// Defaults to two slots.
    pub t_lower: Option<f64>,
    /// `None` doubles from the route time up to 64 times that.
    pub t_upper: Option<f64>,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self { t_tolerance: 1.0, t_lower: None, t_upper: None }
    }
}

impl BisectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_tolerance > 0.0) {
            return Err(Error::Validation(format!("T tolerance must be positive, got {}", self.t_tolerance)));
        }
        if let (Some(lo), Some(hi)) = (self.t_lower, self.t_upper) {
            if !(lo < hi) {
                return Err(Error::Validation(format!("T bounds out of order: {lo} >= {hi}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BcdOutcome {
    pub plan: DiscretePlan,
    /// Exact min-ratio after the first allocation and after each iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Alternates allocation and trajectory steps from `q0`.
pub fn bcd_fixed_t(prob: &Problem, q0: &[Point], cfg: &BcdConfig) -> Result<BcdOutcome> {
    cfg.validate()?;
    prob.check_trajectory(q0)?;
    let first = solve_alloc(prob, q0)?;
    let mut st = BcdState::new(q0.to_vec(), first.alloc, first.eta);
    st.iterate(prob, cfg, None)?;
    Ok(st.into_outcome(prob))
}

/// As [`bcd_fixed_t`], starting from a complete plan.
pub fn bcd_warm_start(prob: &Problem, q0: &[Point], alloc: &Allocation, cfg: &BcdConfig) -> Result<BcdOutcome> {
    cfg.validate()?;
    prob.check_trajectory(q0)?;
    let eta = prob.eta(q0, alloc);
    let fresh = solve_alloc(prob, q0)?;
    let mut st = if fresh.eta > eta {
        BcdState::new(q0.to_vec(), fresh.alloc, fresh.eta)
    } else {
        BcdState::new(q0.to_vec(), alloc.clone(), eta)
    };
    st.iterate(prob, cfg, None)?;
    Ok(st.into_outcome(prob))
}

/// BCD loop state. The allocation keeps relay power the buffer cannot use;
/// it is dropped only in [`BcdState::into_outcome`], so that the trajectory
/// step still sees a gradient toward those destinations.
#[derive(Debug, Clone)]
struct BcdState {
    q: Vec<Point>,
    alloc: Allocation,
    eta: f64,
    trace: Vec<f64>,
    converged: bool,
    steps: usize,
    trust: Option<f64>,
    retries: usize,
}

impl BcdState {
    fn new(q: Vec<Point>, alloc: Allocation, eta: f64) -> Self {
        Self { q, alloc, eta, trace: vec![eta], converged: false, steps: 0, trust: None, retries: 0 }
    }

    /// Runs until convergence, the iteration cap, or (when given) the first
    /// accepted iterate with min-ratio >= `stop_at`. Resuming a stopped state
    /// continues exactly as an uninterrupted run would.
    fn iterate(&mut self, prob: &Problem, cfg: &BcdConfig, stop_at: Option<f64>) -> Result<()> {
        if stop_at.is_some_and(|s| self.eta >= s) {
            return Ok(());
        }
        while !self.converged && self.steps < cfg.max_iterations {
            self.steps += 1;
            let step = solve_traj(prob, &self.q, &self.alloc, self.trust)?;
            if step.q == self.q {
                if self.retries < TRUST_RETRIES && !step.report.converged {
                    self.shrink(prob);
                    continue;
                }
                self.converged = true;
                break;
            }
            let fresh = match solve_alloc(prob, &step.q) {
                Ok(r) => Some(r),
                Err(e @ Error::SolverFailure(_)) => {
                    log::debug!("bcd iteration {}: keeping the previous allocation ({e})", self.steps);
                    None
                }
                Err(e) => return Err(e),
            };
            let (next_alloc, next_eta) = match fresh {
                Some(f) if f.eta >= step.eta => (f.alloc, f.eta),
                _ => (self.alloc.clone(), step.eta),
            };
            if next_eta < self.eta {
                // Only reachable through round-off; shrink the step and retry.
                if self.retries < TRUST_RETRIES {
                    self.shrink(prob);
                    continue;
                }
                self.converged = true;
                break;
            }
            let gain = next_eta - self.eta;
            self.grow(prob);
            self.q = step.q;
            self.alloc = next_alloc;
            self.eta = next_eta;
            self.trace.push(next_eta);
            log::debug!("bcd iteration {}: eta = {next_eta:.9}", self.steps);
            if gain <= cfg.eta_tolerance * next_eta.abs().max(1e-12) {
                self.converged = true;
            } else if stop_at.is_some_and(|s| next_eta >= s) {
                break;
            }
        }
        Ok(())
    }

    fn shrink(&mut self, prob: &Problem) {
        self.retries += 1;
        self.trust = Some(self.trust.unwrap_or(prob.max_step()) * 0.5);
    }

    /// After an accepted step the radius doubles; once it exceeds one slot's
    /// reach it is dropped.
    fn grow(&mut self, prob: &Problem) {
        self.retries = 0;
        self.trust = self.trust.map(|r| 2.0 * r).filter(|&r| r <= prob.max_step());
    }

    fn into_outcome(self, prob: &Problem) -> BcdOutcome {
        let alloc = trim_to_buffer(prob, &self.q, &self.alloc);
        let plan = DiscretePlan { mode: prob.mode, delta_t: prob.delta_t, q: self.q, alloc, eta: self.eta };
        BcdOutcome { plan, trace: self.trace, converged: self.converged }
    }
}

/// One evaluated duration of the outer search.
#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub t: f64,
    pub n_slots: usize,
    /// Min-ratio when the probe stopped. Feasible probes stop at the first
    /// iterate reaching 1, so this is a lower bound on their converged value.
    pub eta: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct TimeSearch {
    pub t_star: f64,
    pub plan: DiscretePlan,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub init: InitialTrajectory,
    pub probes: Vec<Probe>,
}

/// Slot count used for duration `t`.
pub fn slots_for(t: f64, dt: f64) -> usize {
    ((t / dt).round() as usize).max(2)
}

/// Builds the initial trajectory for `n_slots` and runs BCD on it.
pub fn solve_at(
    scn: &Scenario,
    mode: Mode,
    scheme: InitScheme,
    n_slots: usize,
    cfg: &BcdConfig,
) -> Result<(BcdOutcome, InitialTrajectory)> {
    let prob = Problem::new(scn, mode, cfg.delta_t)?;
    let init = routing::build_initial_trajectory(scn, mode, scheme, n_slots, cfg.delta_t)?;
    let out = bcd_fixed_t(&prob, &init.q, cfg)?;
    Ok((out, init))
}

/// Shortest period meeting every average-rate requirement.
pub fn minimize_period(scn: &Scenario, bis: &BisectionConfig, bcd: &BcdConfig) -> Result<TimeSearch> {
    minimize_time(scn, Mode::Periodic, InitScheme::Tsp, bis, bcd)
}

/// Shortest one-time mission meeting every throughput requirement.
pub fn minimize_completion_time(scn: &Scenario, bis: &BisectionConfig, bcd: &BcdConfig) -> Result<TimeSearch> {
    minimize_time(scn, Mode::OneTime, InitScheme::Pdp, bis, bcd)
}

/// Bracket-and-bisect over the slot count. Any probe with min-ratio >= 1
/// counts as feasible and the smallest feasible one is returned, after its
/// BCD run is carried on to convergence.
pub fn minimize_time(
    scn: &Scenario,
    mode: Mode,
    scheme: InitScheme,
    bis: &BisectionConfig,
    bcd: &BcdConfig,
) -> Result<TimeSearch> {
    bis.validate()?;
    bcd.validate()?;
    let dt = bcd.delta_t;
    let prob = Problem::new(scn, mode, dt)?;
    if mode == Mode::Periodic {
        let ceiling = zenith_ceiling(scn)?;
        if ceiling < 1.0 - CEILING_SLACK {
            return Err(Error::Infeasible(format!(
                "requirements exceed the zenith ceiling for any period: best min-ratio {ceiling:.6} < 1"
            )));
        }
    }

    let mut probes = Vec::new();
    // BCD never lowers the min-ratio, so stopping at 1 decides feasibility
    // exactly as a converged run would.
    let run = |n: usize, probes: &mut Vec<Probe>| -> Result<(BcdState, InitialTrajectory)> {
        let init = routing::build_initial_trajectory(scn, mode, scheme, n, dt)?;
        let first = solve_alloc(&prob, &init.q)?;
        let mut st = BcdState::new(init.q.clone(), first.alloc, first.eta);
        st.iterate(&prob, bcd, Some(1.0))?;
        log::info!("probe T = {} s ({n} slots): eta = {:.6}", n as f64 * dt, st.eta);
        probes.push(Probe { t: n as f64 * dt, n_slots: n, eta: st.eta, iterations: st.steps });
        Ok((st, init))
    };
    let finish = |(mut st, init): (BcdState, InitialTrajectory), probes: Vec<Probe>| -> Result<TimeSearch> {
        st.iterate(&prob, bcd, None)?;
        let out = st.into_outcome(&prob);
        Ok(TimeSearch {
            t_star: out.plan.duration(),
            plan: out.plan,
            trace: out.trace,
            converged: out.converged,
            init,
            probes,
        })
    };

    let t_lower = bis.t_lower.unwrap_or(2.0 * dt);
    let mut lo = slots_for(t_lower, dt);
    let first = run(lo, &mut probes)?;
    if first.0.eta >= 1.0 {
        return finish(first, probes);
    }

    let mut best;
    let mut hi;
    match bis.t_upper {
        Some(t_upper) => {
            hi = slots_for(t_upper, dt);
            let r = run(hi, &mut probes)?;
            if r.0.eta < 1.0 {
                return Err(Error::Infeasible(format!(
                    "no feasible plan at the upper bound T = {} s (min-ratio {:.6})",
                    hi as f64 * dt,
                    r.0.eta
                )));
            }
            best = r;
        }
        None => {
            let t_start = routing::route_time(scn, mode)?.max(2.0 * t_lower);
            let cap = 64.0 * t_start;
            let mut t = t_start;
            loop {
                let n = slots_for(t, dt);
                let r = run(n, &mut probes)?;
                if r.0.eta >= 1.0 {
                    hi = n;
                    best = r;
                    break;
                }
                lo = lo.max(n);
                if t >= cap {
                    return Err(Error::Infeasible(format!(
                        "no feasible plan up to the cap T = {} s (min-ratio {:.6})",
                        n as f64 * dt,
                        r.0.eta
                    )));
                }
                t = (2.0 * t).min(cap);
            }
        }
    }

    let gap = ((bis.t_tolerance / dt).floor() as usize).max(1);
    while hi.saturating_sub(lo) > gap {
        let mid = lo + (hi - lo) / 2;
        let r = run(mid, &mut probes)?;
        if r.0.eta >= 1.0 {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
    }
    finish(best, probes)
}

/// Repeats every slot `k` times: a plan for `k` times the duration with the
/// same trajectory shape. Periodic plans stay closed.
pub fn stretch_plan(plan: &DiscretePlan, k: usize) -> DiscretePlan {
    let rep = |v: &[f64]| -> Vec<f64> { v.iter().flat_map(|&x| std::iter::repeat(x).take(k)).collect() };
    let q: Vec<Point> = plan.q.iter().flat_map(|&p| std::iter::repeat(p).take(k)).collect();
    let alloc = Allocation {
        alpha: plan.alloc.alpha.iter().map(|a| rep(a)).collect(),
        beta: plan.alloc.beta.iter().map(|b| rep(b)).collect(),
        power: plan.alloc.power.iter().map(|p| rep(p)).collect(),
    };
    DiscretePlan { mode: plan.mode, delta_t: plan.delta_t, q, alloc, eta: plan.eta }
}

/// Min-ratio of a plan played back in continuous time over `T + eps`
/// instead of `T`: every slot lasts `dt (T + eps) / T` and keeps its rates.
/// Rates are integrated exactly over the stretched pieces.
pub fn continuous_stretch_eta(prob: &Problem, plan: &DiscretePlan, eps: f64) -> f64 {
    let n = plan.n_slots();
    let t = plan.duration();
    let piece = plan.delta_t * (t + eps) / t;
    let rates = prob.slot_rates(&plan.q, &plan.alloc);
    let b = prob.scn.radio.bandwidth_hz;
    let u = prob.scn.n_sources();
    (0..prob.scn.n_flows())
        .map(|f| {
            let achieved = match prob.mode {
                Mode::Periodic => b * rates[f].iter().map(|r| r * piece).sum::<f64>() / (t + eps),
                Mode::OneTime => {
                    let counted: Vec<f64> = (0..n).map(|m| if prob.counted(f, m, n) { rates[f][m] } else { 0.0 }).collect();
                    let bits: f64 = match prob.scn.flows()[f].pair {
                        Some(k) if f >= u => {
                            let up: Vec<f64> = (0..n).map(|m| if prob.counted(k, m, n) { rates[k][m] } else { 0.0 }).collect();
                            crate::subproblems::greedy_delivery(&up, &counted).iter().sum::<f64>()
                        }
                        _ => counted.iter().sum(),
                    };
                    b * bits * piece
                }
            };
            achieved / prob.requirement(f)
        })
        .fold(f64::INFINITY, f64::min)
}
