//! Independent plan checker. Rates are recomputed here from the raw
//! positions and allocations with a separate implementation of the LoS
//! model, so a solver bug cannot hide behind shared code.

use crate::scenario::{Direction, Mode, Scenario};
use crate::subproblems::DiscretePlan;
use std::fmt::Write;

pub const BANDWIDTH_TOL: f64 = 1e-9;
pub const POWER_TOL: f64 = 1e-9;
pub const SPEED_TOL_M: f64 = 1e-6;
pub const REQUIREMENT_TOL: f64 = 1e-3;
pub const CAUSALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub checks: Vec<Check>,
    /// Achieved bps (periodic) or bits (one-time) per flow.
    pub achieved: Vec<f64>,
    /// Smallest normalised causality slack over relay pairs and slots.
    pub min_causality_slack: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(s, "VERDICT {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

/// Spectral efficiency from first principles: SNR at full band is
/// `P lambda0 / (N0 B (H^2 + d^2))`; a fraction `a` of the band sees `SNR / a`.
fn efficiency(scn: &Scenario, q: (f64, f64), user: (f64, f64), a: f64, p: f64) -> f64 {
    if a <= 0.0 || p <= 0.0 {
        return 0.0;
    }
    let r = &scn.radio;
    let d2 = (q.0 - user.0).powi(2) + (q.1 - user.1).powi(2);
    let snr = p * r.ref_gain_linear / (r.noise_psd_w_per_hz * r.bandwidth_hz * (r.altitude_m.powi(2) + d2));
    a * (snr / a).ln_1p() / std::f64::consts::LN_2
}

pub fn audit(scn: &Scenario, plan: &DiscretePlan) -> AuditReport {
    let n = plan.q.len();
    let (u, v) = (scn.n_sources(), scn.n_destinations());
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| checks.push(Check { name: name.into(), passed, detail });

    let shape_ok = plan.alloc.alpha.len() == u
        && plan.alloc.beta.len() == v
        && plan.alloc.power.len() == v
        && plan.alloc.alpha.iter().chain(&plan.alloc.beta).chain(&plan.alloc.power).all(|r| r.len() == n)
        && n >= 2;
    push("shape", shape_ok, format!("{n} slots, {u} sources, {v} destinations"));
    if !shape_ok {
        return AuditReport { checks, achieved: Vec::new(), min_causality_slack: f64::NEG_INFINITY };
    }
    let a = &plan.alloc;

    let mut worst_bw = f64::NEG_INFINITY;
    let mut worst_pw = f64::NEG_INFINITY;
    let mut negative = 0usize;
    for m in 0..n {
        let bw: f64 = a.alpha.iter().map(|x| x[m]).sum::<f64>() + a.beta.iter().map(|x| x[m]).sum::<f64>();
        let pw: f64 = a.power.iter().map(|x| x[m]).sum();
        worst_bw = worst_bw.max(bw);
        worst_pw = worst_pw.max(pw);
        negative += a.alpha.iter().chain(&a.beta).chain(&a.power).filter(|x| !(x[m] >= 0.0)).count();
    }
    let pv = scn.radio.uav_power_w;
    push("bandwidth", worst_bw <= 1.0 + BANDWIDTH_TOL, format!("max per-slot share sum {worst_bw:.12}"));
    push("power", worst_pw <= pv * (1.0 + POWER_TOL), format!("max per-slot power {worst_pw:.12} W of {pv} W"));
    push("nonnegative", negative == 0, format!("{negative} negative entries"));

    let dmax = scn.radio.v_max_mps * plan.delta_t;
    let (mut worst_step, mut worst_at) = (0.0f64, 0usize);
    for m in 0..n - 1 {
        let step = ((plan.q[m + 1].x - plan.q[m].x).powi(2) + (plan.q[m + 1].y - plan.q[m].y).powi(2)).sqrt();
        if step > worst_step {
            worst_step = step;
            worst_at = m + 1;
        }
    }
    push(
        "speed",
        worst_step <= dmax + SPEED_TOL_M,
        format!("max step {worst_step:.9} m (slot {worst_at}) vs {dmax} m"),
    );
    if plan.mode == Mode::Periodic {
        let closed = plan.q[0].x == plan.q[n - 1].x && plan.q[0].y == plan.q[n - 1].y;
        push("closure", closed, format!("first ({}, {}) last ({}, {})", plan.q[0].x, plan.q[0].y, plan.q[n - 1].x, plan.q[n - 1].y));
    }

    let rates: Vec<Vec<f64>> = scn
        .flows()
        .iter()
        .enumerate()
        .map(|(f, fl)| {
            let user = (fl.position.x, fl.position.y);
            (0..n)
                .map(|m| {
                    let q = (plan.q[m].x, plan.q[m].y);
                    match fl.direction {
                        Direction::Uplink => efficiency(scn, q, user, a.alpha[f][m], fl.uplink_power_w.unwrap_or(0.0)),
                        Direction::Downlink => efficiency(scn, q, user, a.beta[f - u][m], a.power[f - u][m]),
                    }
                })
                .collect()
        })
        .collect();

    let b = scn.radio.bandwidth_hz;
    let achieved: Vec<f64> = scn
        .flows()
        .iter()
        .enumerate()
        .map(|(f, fl)| match plan.mode {
            Mode::Periodic => b * rates[f].iter().sum::<f64>() / n as f64,
            Mode::OneTime => {
                let range = match fl.direction {
                    Direction::Uplink => 0..n - 1,
                    Direction::Downlink => 1..n,
                };
                b * plan.delta_t * rates[f][range].iter().sum::<f64>()
            }
        })
        .collect();

    let mut worst_ratio = f64::INFINITY;
    let mut worst_flow = 0;
    let mut missing = false;
    for f in 0..scn.n_flows() {
        match scn.requirement(plan.mode, f) {
            Some(req) => {
                let ratio = achieved[f] / req;
                if ratio < worst_ratio {
                    worst_ratio = ratio;
                    worst_flow = f;
                }
            }
            None => missing = true,
        }
    }
    push(
        "requirements",
        !missing && worst_ratio >= 1.0 - REQUIREMENT_TOL,
        if missing {
            "scenario lacks requirements for this mode".into()
        } else {
            format!("min achieved/required {worst_ratio:.9} (user {})", scn.user_id_of_flow(worst_flow))
        },
    );

    let mut min_slack = f64::INFINITY;
    if plan.mode == Mode::OneTime {
        for (src, dst) in scn.relay_pairs() {
            let c = scn.requirement(Mode::OneTime, src).unwrap_or(1.0);
            let (mut up, mut down) = (0.0, 0.0);
            for m in 1..n {
                up += rates[src][m - 1];
                down += rates[dst][m];
                min_slack = min_slack.min((up - down) * b * plan.delta_t / c);
            }
        }
        push(
            "causality",
            !(min_slack < -CAUSALITY_TOL),
            if min_slack.is_finite() {
                format!("min cumulative slack {min_slack:.3e} of the pair throughput")
            } else {
                "no relay pairs".into()
            },
        );
    }
    AuditReport { checks, achieved, min_causality_slack: min_slack }
}
