//! Trajectory step for a fixed allocation.
//!
//! Every active (flow, slot) contributes an epigraph `t <= a - phi (|q-u|^2 - d0^2)`
//! written as the rotated cone `|sqrt(phi) (q - u)|^2 <= a + phi d0^2 - t`.
//! Positions are in km and rates in nats inside the program.

use super::{Allocation, Problem, SolveReport};
use crate::channel;
use crate::conic::{Affine, Program, Tolerances};
use crate::error::Result;
use crate::geometry::Point;
use crate::scenario::{Mode, Scenario};
use std::f64::consts::LN_2;

const KM: f64 = 1000.0;
/// Relative margin on the per-slot step so solver round-off stays inside the limit.
const SPEED_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct TrajResult {
    pub q: Vec<Point>,
    /// Optimal value of the surrogate program.
    pub surrogate_eta: f64,
    /// Exact min-ratio of the returned trajectory with the given allocation.
    pub eta: f64,
    pub report: SolveReport,
}

pub fn solve_traj_periodic(scn: &Scenario, q_local: &[Point], alloc: &Allocation, delta_t: f64) -> Result<TrajResult> {
    solve_traj(&Problem::new(scn, Mode::Periodic, delta_t)?, q_local, alloc, None)
}

pub fn solve_traj_onetime(scn: &Scenario, q_local: &[Point], alloc: &Allocation, delta_t: f64) -> Result<TrajResult> {
    solve_traj(&Problem::new(scn, Mode::OneTime, delta_t)?, q_local, alloc, None)
}

/// One surrogate step from `q_local`. `trust` bounds every slot's move (m).
/// Never returns a trajectory whose exact min-ratio is below that of
/// `q_local` under the same allocation.
pub fn solve_traj(prob: &Problem, q_local: &[Point], alloc: &Allocation, trust: Option<f64>) -> Result<TrajResult> {
    prob.check_trajectory(q_local)?;
    let scn = prob.scn;
    let n_slots = q_local.len();
    let eta_local = prob.eta(q_local, alloc);
    let fallback = |iterations: u32, converged: bool, surrogate: f64| TrajResult {
        q: q_local.to_vec(),
        surrogate_eta: surrogate,
        eta: eta_local,
        report: SolveReport { objective_eta: eta_local, iterations, converged, max_constraint_violation: 0.0 },
    };

    let (g0, h) = (scn.gamma0(), scn.radio.altitude_m);
    let nf = scn.n_flows();
    let mut coef = vec![vec![None; n_slots]; nf];
    for f in 0..nf {
        let pos = scn.flows()[f].position;
        for n in 0..n_slots {
            if !prob.counted(f, n, n_slots) {
                continue;
            }
            let (s, pw) = (alloc.share(f, n), alloc.power_of(scn, f, n));
            if s > 0.0 && pw > 0.0 {
                let c = channel::sca_coefficients(q_local[n], pos, s, pw, g0, h);
                if c.slope > 0.0 || c.base_rate > 0.0 {
                    coef[f][n] = Some(c);
                }
            }
        }
        if coef[f].iter().all(Option::is_none) {
            // This flow gets nothing whatever the trajectory does.
            return Ok(fallback(0, true, 0.0));
        }
    }

    let mut p = Program::new();
    let eta = p.var();
    p.minimize_term(eta, -1.0);
    let distinct = match prob.mode {
        Mode::Periodic => n_slots - 1,
        Mode::OneTime => n_slots,
    };
    let xs = p.vars(distinct);
    let ys = p.vars(distinct);
    let slot = |n: usize| n % distinct;

    let mut epi = vec![vec![None; n_slots]; nf];
    for f in 0..nf {
        let u = scn.flows()[f].position;
        let (ux, uy) = (u.x / KM, u.y / KM);
        for n in 0..n_slots {
            let Some(c) = coef[f][n] else { continue };
            let t = p.var();
            epi[f][n] = Some(t);
            let a = c.base_rate * LN_2;
            let phi = c.slope * LN_2 * KM * KM;
            let d0 = c.ref_sq_dist / (KM * KM);
            let k = slot(n);
            let w = Affine::var(t).scaled(-1.0).plus(a + phi * d0);
            if phi > 0.0 {
                let r = phi.sqrt();
                p.sq_norm_le(w, &[Affine::term(xs[k], r).plus(-r * ux), Affine::term(ys[k], r).plus(-r * uy)]);
            } else {
                p.nonneg(w);
            }
        }
        let mut e = Affine::default().add(eta, -(n_slots as f64) * prob.weight(f));
        for t in epi[f].iter().flatten() {
            e = e.add(*t, 1.0);
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

    let d = prob.max_step() * (1.0 - SPEED_MARGIN) / KM;
    for n in 0..n_slots - 1 {
        let (a, b) = (slot(n), slot(n + 1));
        if a == b {
            continue;
        }
        p.soc(Affine::constant(d), &[Affine::var(xs[b]).add(xs[a], -1.0), Affine::var(ys[b]).add(ys[a], -1.0)]);
    }
    if let Some(rho) = trust {
        for n in 0..distinct {
            p.soc(
                Affine::constant(rho / KM),
                &[Affine::var(xs[n]).plus(-q_local[n].x / KM), Affine::var(ys[n]).plus(-q_local[n].y / KM)],
            );
        }
    }

    let sol = match p.solve(Tolerances::default()) {
        Ok(s) => s,
        Err(e) => {
            log::debug!("trajectory step failed: {e}");
            return Ok(fallback(0, false, eta_local));
        }
    };
    let surrogate_eta = sol.x[eta] * prob.eta_scale(n_slots);
    let mut q: Vec<Point> = (0..n_slots).map(|n| Point::new(sol.x[xs[slot(n)]] * KM, sol.x[ys[slot(n)]] * KM)).collect();
    repair_speed(&mut q, q_local, prob.max_step());

    let eta_new = prob.eta(&q, alloc);
    let converged = matches!(sol.status, clarabel::solver::SolverStatus::Solved);
    if eta_new < eta_local {
        return Ok(fallback(sol.iterations, converged, surrogate_eta));
    }
    Ok(TrajResult {
        q,
        surrogate_eta,
        eta: eta_new,
        report: SolveReport { objective_eta: eta_new, iterations: sol.iterations, converged, max_constraint_violation: 0.0 },
    })
}

fn max_step(q: &[Point]) -> f64 {
    q.windows(2).map(|w| w[0].dist(w[1])).fold(0.0, f64::max)
}

/// Pulls `q` back toward the feasible `q_local` until every step fits.
fn repair_speed(q: &mut [Point], q_local: &[Point], d: f64) {
    if max_step(q) <= d {
        return;
    }
    let blend = |lam: f64| -> Vec<Point> { q_local.iter().zip(q.iter()).map(|(a, b)| a.lerp(*b, lam)).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if max_step(&blend(mid)) <= d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let out = blend(lo);
    q.copy_from_slice(&out);
}
