mod common;

use common::{eff, gamma0, gu, scenario, with_requirements, B, H};
use std::f64::consts::LOG2_E;
use uavran::scenario::Role;
use uavran::subproblems::{solve_traj, Allocation, Problem};
use uavran::{Mode, Point, Scenario};

/// `coef * (base - phi * (|q_k - u|^2 - d0))` summed over the terms.
#[derive(Clone, Default)]
struct Piece {
    terms: Vec<(usize, f64, f64, f64, f64, Point)>,
}

impl Piece {
    fn value(&self, x: &[Point]) -> f64 {
        self.terms.iter().map(|&(k, c, base, phi, d0, u)| c * (base - phi * (x[k].dist_sq(u) - d0))).sum()
    }

    fn add_grad(&self, x: &[Point], w: f64, g: &mut [Point]) {
        for &(k, c, _, phi, _, u) in &self.terms {
            g[k] = g[k] + (x[k] - u) * (-2.0 * phi * c * w);
        }
    }
}

/// Surrogate min-ratio written out independently: one piece per plain flow,
/// one per cut for relay destinations in one-time mode.
struct Surrogate {
    pieces: Vec<Piece>,
    distinct: usize,
    closed: bool,
}

impl Surrogate {
    fn new(scn: &Scenario, mode: Mode, q_local: &[Point], alloc: &Allocation, dt: f64) -> Self {
        let n = q_local.len();
        let u = scn.n_sources();
        let (distinct, closed) = match mode {
            Mode::Periodic => (n - 1, true),
            Mode::OneTime => (n, false),
        };
        let term = |f: usize, s: usize, c: f64| -> Option<(usize, f64, f64, f64, f64, Point)> {
            let share = alloc.share(f, s);
            let p = alloc.power_of(scn, f, s);
            if share <= 0.0 || p <= 0.0 {
                return None;
            }
            let pos = scn.flows()[f].position;
            let d0 = q_local[s].dist_sq(pos);
            let tau = H * H + d0;
            let e = p * gamma0() / share;
            let phi = share * LOG2_E * e / (tau * (tau + e));
            Some((s % distinct, c, eff(share, p, d0), phi, d0, pos))
        };
        let mut pieces = Vec::new();
        for f in 0..scn.n_flows() {
            let up = f < u;
            match mode {
                Mode::Periodic => {
                    let c = B / (n as f64 * scn.requirement(mode, f).unwrap());
                    pieces.push(Piece { terms: (0..n).filter_map(|s| term(f, s, c)).collect() });
                }
                Mode::OneTime => {
                    let c = B * dt / scn.requirement(mode, f).unwrap();
                    match scn.flows()[f].pair {
                        Some(k) if !up => {
                            for m in 0..n {
                                let mut terms: Vec<_> = (0..m).filter_map(|s| term(k, s, c)).collect();
                                terms.extend((m + 1..n).filter_map(|s| term(f, s, c)));
                                pieces.push(Piece { terms });
                            }
                        }
                        _ => {
                            let slots = if up { 0..n - 1 } else { 1..n };
                            pieces.push(Piece { terms: slots.filter_map(|s| term(f, s, c)).collect() });
                        }
                    }
                }
            }
        }
        Surrogate { pieces, distinct, closed }
    }

    fn min_value(&self, x: &[Point]) -> f64 {
        self.pieces.iter().map(|p| p.value(x)).fold(f64::INFINITY, f64::min)
    }

    fn soft(&self, x: &[Point], mu: f64) -> (f64, Vec<Point>) {
        let v: Vec<f64> = self.pieces.iter().map(|p| p.value(x)).collect();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = v.iter().map(|&vi| (-(vi - lo) / mu).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut g = vec![Point::default(); x.len()];
        for (p, wi) in self.pieces.iter().zip(&w) {
            p.add_grad(x, wi / z, &mut g);
        }
        (lo - mu * z.ln(), g)
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = (0..self.distinct - 1).map(|k| (k, k + 1)).collect();
        if self.closed {
            e.push((self.distinct - 1, 0));
        }
        e
    }
}

/// Dykstra's alternating projection onto `|x_i - x_j| <= d` for every edge.
fn project(y: &[Point], edges: &[(usize, usize)], d: f64) -> Vec<Point> {
    let mut x = y.to_vec();
    let mut inc = vec![(Point::default(), Point::default()); edges.len()];
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for (e, &(i, j)) in edges.iter().enumerate() {
            let (a, b) = (x[i] + inc[e].0, x[j] + inc[e].1);
            let dist = a.dist(b);
            let (pa, pb) = if dist > d {
                let shift = (b - a) * (0.5 * (dist - d) / dist);
                (a + shift, b - shift)
            } else {
                (a, b)
            };
            inc[e] = (a - pa, b - pb);
            moved = moved.max(x[i].dist(pa)).max(x[j].dist(pb));
            x[i] = pa;
            x[j] = pb;
        }
        if moved < 1e-12 {
            break;
        }
    }
    x
}

/// Projected gradient ascent on a soft-min with shrinking temperature.
fn oracle(s: &Surrogate, start: &[Point], d: f64) -> Vec<Point> {
    let edges = s.edges();
    let mut x = start[..s.distinct].to_vec();
    let mut step = 1e3;
    for mu in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7] {
        for _ in 0..3000 {
            let (f, g) = s.soft(&x, mu);
            loop {
                let y: Vec<Point> = x.iter().zip(&g).map(|(&a, &b)| a + b * step).collect();
                let xn = project(&y, &edges, d);
                let lin: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a.x - b.x) * gi.x + (a.y - b.y) * gi.y).sum();
                let sq: f64 = xn.iter().zip(&x).map(|(a, b)| a.dist_sq(*b)).sum();
                if s.soft(&xn, mu).0 >= f + lin - sq / (2.0 * step) || step < 1e-6 {
                    x = xn;
                    break;
                }
                step *= 0.5;
            }
            step *= 1.5;
        }
    }
    x
}

fn distinct_of(q: &[Point], s: &Surrogate) -> Vec<Point> {
    q[..s.distinct].to_vec()
}

fn check_against_oracle(scn: &Scenario, mode: Mode, q_local: Vec<Point>) {
    let prob = Problem::new(scn, mode, 1.0).unwrap();
    let alloc = Allocation::equal_split(&prob, q_local.len());
    let res = solve_traj(&prob, &q_local, &alloc, None).unwrap();
    let s = Surrogate::new(scn, mode, &q_local, &alloc, 1.0);

    let at_local = s.min_value(&distinct_of(&q_local, &s));
    assert!((at_local - prob.eta(&q_local, &alloc)).abs() <= 1e-9 * at_local, "surrogate not tight at the anchor");

    let x = oracle(&s, &q_local, prob.max_step());
    let worst = s.edges().iter().map(|&(i, j)| x[i].dist(x[j])).fold(0.0, f64::max);
    assert!(worst <= prob.max_step() + 1e-6, "oracle infeasible: {worst}");
    let best = s.min_value(&x);
    assert!(best > at_local, "oracle made no progress");

    let rel = (res.surrogate_eta - best) / best;
    assert!(rel.abs() <= 1e-4, "{mode:?}: solver surrogate {} vs oracle {best}", res.surrogate_eta);
    let mine = s.min_value(&distinct_of(&res.q, &s));
    assert!((mine - res.surrogate_eta).abs() <= 1e-4 * best, "returned q scores {mine}, reported {}", res.surrogate_eta);
    assert!(res.eta >= mine - 1e-9, "exact rate below its lower bound");
}

#[test]
fn periodic_two_users_matches_oracle() {
    let scn = scenario(vec![
        gu(1, 0.0, 0.0, Role::UplinkSource, None),
        gu(2, 300.0, 0.0, Role::DownlinkDestination, None),
    ]);
    let q: Vec<Point> = (0..8)
        .map(|n| {
            let t = (n % 7) as f64 / 7.0 * std::f64::consts::TAU;
            Point::new(150.0 + 30.0 * t.cos(), 120.0 + 30.0 * t.sin())
        })
        .collect();
    check_against_oracle(&scn, Mode::Periodic, q);
}

#[test]
fn onetime_relay_matches_oracle() {
    let scn = scenario(with_requirements(
        vec![gu(1, 0.0, 0.0, Role::RelaySource, Some(1)), gu(2, 300.0, 0.0, Role::RelayDestination, Some(1))],
        2.0e6,
        1.0e8,
    ));
    let q: Vec<Point> = (0..8).map(|n| Point::new(300.0 * n as f64 / 7.0, 80.0)).collect();
    check_against_oracle(&scn, Mode::OneTime, q);
}

#[test]
fn step_never_lowers_eta_and_moves_toward_user() {
    let u = Point::new(0.0, 0.0);
    let scn = scenario(vec![gu(1, u.x, u.y, Role::UplinkSource, None)]);
    let prob = Problem::new(&scn, Mode::Periodic, 1.0).unwrap();
    let q: Vec<Point> = (0..10)
        .map(|n| {
            let t = (n % 9) as f64 / 9.0 * std::f64::consts::TAU;
            Point::new(600.0 + 40.0 * t.cos(), 400.0 + 40.0 * t.sin())
        })
        .collect();
    let alloc = Allocation::equal_split(&prob, q.len());
    let res = solve_traj(&prob, &q, &alloc, None).unwrap();
    let before: f64 = q.iter().map(|p| p.dist(u)).sum();
    let after: f64 = res.q.iter().map(|p| p.dist(u)).sum();
    assert!(after < before - 100.0, "{after} vs {before}");
    assert!(res.eta > prob.eta(&q, &alloc));
    assert!(res.surrogate_eta >= prob.eta(&q, &alloc) - 1e-9);
    prob.check_trajectory(&res.q).unwrap();
    assert_eq!(res.q[0], res.q[9]);

    // A trust radius caps every move.
    let capped = solve_traj(&prob, &q, &alloc, Some(5.0)).unwrap();
    for (a, b) in capped.q.iter().zip(&q) {
        assert!(a.dist(*b) <= 5.0 + 1e-6);
    }
    assert!(capped.eta >= prob.eta(&q, &alloc));
}

#[test]
fn hovering_above_single_user_is_a_fixed_point() {
    let u = Point::new(200.0, -50.0);
    let scn = scenario(vec![gu(1, u.x, u.y, Role::DownlinkDestination, None)]);
    let prob = Problem::new(&scn, Mode::Periodic, 1.0).unwrap();
    let q = vec![u; 6];
    let alloc = Allocation::equal_split(&prob, q.len());
    let res = solve_traj(&prob, &q, &alloc, None).unwrap();
    for p in &res.q {
        assert!(p.dist(u) <= 1e-3, "{p:?}");
    }
    assert!((res.eta - prob.eta(&q, &alloc)).abs() <= 1e-9 * res.eta);
}
