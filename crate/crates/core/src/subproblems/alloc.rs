//! Bandwidth and power allocation for a fixed trajectory.
//!
//! Each counted (flow, slot) gets a share `s`, a rate epigraph `t` in nats
//! and, for downlink, a power fraction `p'` of the UAV budget:
//!
//! ```text
//! (t, s, s + P*gamma)     in K_exp   uplink
//! (t, s, s + Pv*gamma*p') in K_exp   downlink
//! ```
//!
//! which is `t <= s ln(1 + P gamma / s)`. The min-ratio is maximised in the
//! epigraph form; one-time relays add buffer variables that encode
//! cumulative causality as a linear recurrence.

use super::{allocation_violation, greedy_delivery, Allocation, Problem, SolveReport, SHARE_FLOOR};
use crate::channel;
use crate::conic::{Affine, Program, Tolerances};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scenario::{Direction, Mode, Scenario};

#[derive(Debug, Clone)]
pub struct AllocResult {
    pub alloc: Allocation,
    pub eta: f64,
    /// Delivered relay spectral efficiency `[pair][slot]` (one-time mode;
    /// equals the downlink rate after the no-waste pass).
    pub relay_delivered: Vec<Vec<f64>>,
    pub report: SolveReport,
}

const SOLVER_FLOOR: f64 = 1e-9;

pub fn solve_alloc_periodic(scn: &Scenario, q: &[Point]) -> Result<AllocResult> {
    solve_alloc(&Problem::new(scn, Mode::Periodic, 1.0)?, q)
}

pub fn solve_alloc_onetime(scn: &Scenario, q: &[Point], delta_t: f64) -> Result<AllocResult> {
    solve_alloc(&Problem::new(scn, Mode::OneTime, delta_t)?, q)
}

pub fn solve_alloc(prob: &Problem, q: &[Point]) -> Result<AllocResult> {
    if q.is_empty() {
        return Err(Error::Infeasible("allocation needs at least one slot".into()));
    }
    let scn = prob.scn;
    let (g0, h) = (scn.gamma0(), scn.radio.altitude_m);
    let ratios: Vec<Vec<f64>> = scn
        .flows()
        .iter()
        .map(|fl| q.iter().map(|&p| channel::channel_to_noise(p, fl.position, g0, h)).collect())
        .collect();
    let (raw, iterations, converged) = solve_conic(prob, &ratios)?;
    let (alloc, relay_delivered) = finalize(prob, &ratios, raw);
    let eta = prob.eta(q, &alloc);
    let report = SolveReport {
        objective_eta: eta,
        iterations,
        converged,
        max_constraint_violation: allocation_violation(scn, &alloc).max(0.0),
    };
    Ok(AllocResult { alloc, eta, relay_delivered, report })
}

/// Upper bound on the periodic min-ratio for any period: one slot in which
/// every user sees its zenith channel at once. Any time average of
/// achievable rate vectors is dominated by this single-slot region.
pub fn zenith_ceiling(scn: &Scenario) -> Result<f64> {
    let prob = Problem::new(scn, Mode::Periodic, 1.0)?;
    let h = scn.radio.altitude_m;
    let z = scn.gamma0() / (h * h);
    let ratios = vec![vec![z]; scn.n_flows()];
    let (raw, _, _) = solve_conic(&prob, &ratios)?;
    let (alloc, _) = finalize(&prob, &ratios, raw);
    let rates = rates_from_ratios(scn, &alloc, &ratios);
    let metrics = prob.metrics_from_rates(&rates);
    Ok(metrics.iter().enumerate().map(|(f, m)| m / prob.requirement(f)).fold(f64::INFINITY, f64::min))
}

fn rates_from_ratios(scn: &Scenario, alloc: &Allocation, ratios: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..scn.n_flows())
        .map(|f| {
            (0..ratios[f].len())
                .map(|n| channel::rate(alloc.share(f, n), alloc.power_of(scn, f, n), ratios[f][n]))
                .collect()
        })
        .collect()
}

/// Equivalent formulations tried in turn when the interior-point method stalls.
#[derive(Debug, Clone, Copy)]
struct Attempt {
    normalize_rows: bool,
    backtrack: f64,
}

const ATTEMPTS: [Attempt; 3] = [
    Attempt { normalize_rows: false, backtrack: 0.8 },
    Attempt { normalize_rows: true, backtrack: 0.8 },
    Attempt { normalize_rows: false, backtrack: 0.5 },
];

fn solve_conic(prob: &Problem, ratios: &[Vec<f64>]) -> Result<(Allocation, u32, bool)> {
    let mut last = None;
    for attempt in ATTEMPTS {
        match solve_conic_with(prob, ratios, attempt) {
            Ok(r) => return Ok(r),
            Err(e) => {
                log::debug!("allocation solve failed with {attempt:?}: {e}");
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

fn solve_conic_with(prob: &Problem, ratios: &[Vec<f64>], attempt: Attempt) -> Result<(Allocation, u32, bool)> {
    let scn = prob.scn;
    let (u, v) = (scn.n_sources(), scn.n_destinations());
    let n_slots = ratios[0].len();
    let pv = scn.radio.uav_power_w;

    let mut p = Program::new();
    let eta = p.var();
    p.minimize_term(eta, -1.0);

    let mut share = vec![vec![None; n_slots]; u + v];
    let mut power = vec![vec![None; n_slots]; v];
    let mut epi = vec![vec![None; n_slots]; u + v];

    for n in 0..n_slots {
        let mut bw = Affine::constant(1.0);
        let mut pw = Affine::constant(1.0);
        let mut any_down = false;
        for f in 0..u + v {
            if !prob.counted(f, n, n_slots) {
                continue;
            }
            let s = p.var();
            let t = p.var();
            share[f][n] = Some(s);
            epi[f][n] = Some(t);
            p.nonneg(Affine::var(s).plus(-SOLVER_FLOOR));
            bw = bw.add(s, -1.0);
            let c = scn.flow_power(f) * ratios[f][n];
            let z = match scn.flows()[f].direction {
                Direction::Uplink => Affine::var(s).plus(c),
                Direction::Downlink => {
                    let pw_var = p.var();
                    power[f - u][n] = Some(pw_var);
                    p.nonneg(Affine::var(pw_var));
                    pw = pw.add(pw_var, -1.0);
                    any_down = true;
                    Affine::var(s).add(pw_var, c)
                }
            };
            // t <= s ln(1 + c p / s) written as (t - s ln c, s, z / c), which
            // keeps every cone row of order one.
            p.exp_cone(Affine::var(t).add(s, -c.ln()), Affine::var(s), z.scaled(1.0 / c));
        }
        p.nonneg(bw);
        if any_down {
            p.nonneg(pw);
        }
    }

    for f in 0..u + v {
        let k = if attempt.normalize_rows { 1.0 / n_slots as f64 } else { 1.0 };
        let mut e = Affine::default().add(eta, -(n_slots as f64) * prob.weight(f) * k);
        for t in epi[f].iter().flatten() {
            e = e.add(*t, k);
        }
        p.nonneg(e);
    }

    if prob.mode == Mode::OneTime {
        for (src, dst) in scn.relay_pairs() {
            let mut prev: Option<usize> = None;
            for n in 1..n_slots {
                let b = p.var();
                p.nonneg(Affine::var(b));
                let mut rec = Affine::var(b);
                if let Some(pb) = prev {
                    rec = rec.add(pb, -1.0);
                }
                if let Some(tu) = epi[src][n - 1] {
                    rec = rec.add(tu, -1.0);
                }
                if let Some(tv) = epi[dst][n] {
                    rec = rec.add(tv, 1.0);
                }
                p.zero(rec);
                prev = Some(b);
            }
        }
    }

    let sol = p.solve(Tolerances { backtrack: attempt.backtrack, ..Tolerances::default() })?;
    let mut alloc = Allocation::zeros(u, v, n_slots);
    for f in 0..u + v {
        for n in 0..n_slots {
            if let Some(s) = share[f][n] {
                *alloc.share_mut(f, n) = sol.x[s];
            }
        }
    }
    for j in 0..v {
        for n in 0..n_slots {
            if let Some(pw) = power[j][n] {
                alloc.power[j][n] = sol.x[pw] * pv;
            }
        }
    }
    let converged = matches!(sol.status, clarabel::solver::SolverStatus::Solved);
    Ok((alloc, sol.iterations, converged))
}

/// Turns a raw solver point into a clean allocation: clip, drop negligible
/// shares, hand leftover band and power to counted flows in proportion to
/// their requirements, and in one-time mode trim relay downlink power to
/// exactly what the buffer can forward.
fn finalize(prob: &Problem, ratios: &[Vec<f64>], mut a: Allocation) -> (Allocation, Vec<Vec<f64>>) {
    let scn = prob.scn;
    let (u, nf) = (scn.n_sources(), scn.n_flows());
    let n_slots = ratios[0].len();
    let pv = scn.radio.uav_power_w;

    for n in 0..n_slots {
        for f in 0..nf {
            let s = a.share_mut(f, n);
            *s = s.clamp(0.0, 1.0);
        }
        for pj in a.power.iter_mut() {
            pj[n] = pj[n].clamp(0.0, pv);
        }
        let bw: f64 = (0..nf).map(|f| a.share(f, n)).sum();
        if bw > 1.0 {
            for f in 0..nf {
                *a.share_mut(f, n) /= bw;
            }
        }
        let pw: f64 = a.power.iter().map(|p| p[n]).sum();
        if pw > pv {
            for pj in a.power.iter_mut() {
                pj[n] *= pv / pw;
            }
        }
        for f in 0..nf {
            if a.share(f, n) < SHARE_FLOOR {
                *a.share_mut(f, n) = 0.0;
                if f >= u {
                    a.power[f - u][n] = 0.0;
                }
            }
        }

        let counted: Vec<usize> = (0..nf).filter(|&f| prob.counted(f, n, n_slots)).collect();
        let wsum: f64 = counted.iter().map(|&f| prob.weight(f)).sum();
        let left = 1.0 - (0..nf).map(|f| a.share(f, n)).sum::<f64>();
        if left > 0.0 && wsum > 0.0 {
            for &f in &counted {
                *a.share_mut(f, n) += left * prob.weight(f) / wsum;
            }
        }
        let down: Vec<usize> = counted.iter().cloned().filter(|&f| f >= u).collect();
        let dsum: f64 = down.iter().map(|&f| prob.weight(f)).sum();
        let pleft = pv - a.power.iter().map(|p| p[n]).sum::<f64>();
        if pleft > 0.0 && dsum > 0.0 {
            for &f in &down {
                a.power[f - u][n] += pleft * prob.weight(f) / dsum;
            }
        }
    }

    let delivered = trim_relays(prob, ratios, &mut a);
    (a, delivered)
}

/// One-time relays: lowers each destination's power so that it receives
/// exactly what the buffer can forward, slot by slot. Returns the
/// delivered efficiency `[pair][slot]`.
fn trim_relays(prob: &Problem, ratios: &[Vec<f64>], a: &mut Allocation) -> Vec<Vec<f64>> {
    let scn = prob.scn;
    let u = scn.n_sources();
    let n_slots = ratios[0].len();
    let mut delivered = Vec::new();
    if prob.mode != Mode::OneTime {
        return delivered;
    }
    let rates = rates_from_ratios(scn, a, ratios);
    for (src, dst) in scn.relay_pairs() {
        let d = greedy_delivery(&rates[src], &rates[dst]);
        let j = dst - u;
        for n in 0..n_slots {
            if d[n] >= rates[dst][n] * (1.0 - 1e-12) {
                continue;
            }
            if d[n] <= 1e-12 {
                a.beta[j][n] = 0.0;
                a.power[j][n] = 0.0;
            } else {
                let beta = a.beta[j][n];
                a.power[j][n] = beta * (d[n] * std::f64::consts::LN_2 / beta).exp_m1() / ratios[dst][n];
            }
        }
        let rates_now: Vec<f64> =
            (0..n_slots).map(|n| channel::rate(a.beta[j][n], a.power[j][n], ratios[dst][n])).collect();
        delivered.push(greedy_delivery(&rates[src], &rates_now));
    }
    delivered
}

/// Applies the relay no-waste pass to an allocation used on trajectory `q`
/// (a no-op in periodic mode). The min-ratio is unchanged.
pub fn trim_to_buffer(prob: &Problem, q: &[Point], alloc: &Allocation) -> Allocation {
    let scn = prob.scn;
    let (g0, h) = (scn.gamma0(), scn.radio.altitude_m);
    let ratios: Vec<Vec<f64>> = scn
        .flows()
        .iter()
        .map(|fl| q.iter().map(|&p| channel::channel_to_noise(p, fl.position, g0, h)).collect())
        .collect();
    let mut a = alloc.clone();
    trim_relays(prob, &ratios, &mut a);
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{GroundUser, RadioParams, Role};

    fn user(id: u32, x: f64, role: Role, pair: Option<u32>) -> GroundUser {
        GroundUser {
            id,
            position: Point::new(x, 0.0),
            role,
            uplink_power_w: role.is_source().then_some(0.01),
            pair_id: pair,
            rate_bps: Some(1e6),
            throughput_bits: Some(1e7),
        }
    }

    #[test]
    fn single_uplink_takes_whole_band() {
        let scn = Scenario::new(RadioParams::standard(), vec![user(1, 0.0, Role::UplinkSource, None)]).unwrap();
        let q: Vec<Point> = (0..5).map(|k| Point::new(100.0 * k as f64, 0.0)).collect();
        let r = solve_alloc_periodic(&scn, &q).unwrap();
        for n in 0..5 {
            assert!((r.alloc.alpha[0][n] - 1.0).abs() < 1e-12);
        }
        let g0 = scn.gamma0();
        let expect: f64 = q
            .iter()
            .map(|p| channel::rate_at(*p, Point::default(), 1.0, 0.01, g0, 50.0))
            .sum::<f64>()
            * 1e7
            / (5.0 * 1e6);
        assert!((r.eta - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn relay_causality_holds_after_cleanup() {
        let scn = Scenario::new(
            RadioParams::standard(),
            vec![user(1, -500.0, Role::RelaySource, Some(1)), user(2, 500.0, Role::RelayDestination, Some(1))],
        )
        .unwrap();
        let q: Vec<Point> = (0..8).map(|_| Point::default()).collect();
        let r = solve_alloc_onetime(&scn, &q, 1.0).unwrap();
        let prob = Problem::new(&scn, Mode::OneTime, 1.0).unwrap();
        let rates = prob.slot_rates(&q, &r.alloc);
        let (mut cu, mut cd) = (0.0, 0.0);
        for n in 1..8 {
            cu += rates[0][n - 1];
            cd += rates[1][n];
            assert!(cd <= cu + 1e-9, "slot {n}: {cd} > {cu}");
        }
    }
}
