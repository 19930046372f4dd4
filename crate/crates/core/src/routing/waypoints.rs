//! Shortest route through disks in a fixed visiting order, and the search
//! for the smallest disk radius that fits a time budget.

use super::tsp::tour_length;
use crate::conic::{Affine, Program, Tolerances};
use crate::error::{Error, Result};
use crate::geometry::{diameter, Point};

const KM: f64 = 1000.0;
/// Radius search stops once the bracket is this narrow (m).
pub const RADIUS_TOLERANCE: f64 = 1.0;

/// Waypoints `g[w]` (indexed like `centers`) minimising the route length
/// through disks of radius `r` visited in `order`. Returns the waypoints
/// and the route length.
pub fn optimize_waypoints_fixed_order(centers: &[Point], order: &[usize], r: f64, closed: bool) -> (Vec<Point>, f64) {
    let base_len = tour_length(centers, order, closed);
    if r <= 0.0 || order.len() < 2 {
        return (centers.to_vec(), base_len);
    }
    let mut g = match socp_waypoints(centers, order, r, closed) {
        Ok(g) => g,
        Err(e) => {
            log::debug!("waypoint program failed ({e}); falling back to coordinate descent");
            centers.to_vec()
        }
    };
    for (w, c) in centers.iter().enumerate() {
        g[w] = project_to_disk(g[w], *c, r);
    }
    polish(&mut g, centers, order, r, closed);
    let len = tour_length(&g, order, closed);
    if len <= base_len {
        (g, len)
    } else {
        (centers.to_vec(), base_len)
    }
}

fn socp_waypoints(centers: &[Point], order: &[usize], r: f64, closed: bool) -> Result<Vec<Point>> {
    let n = centers.len();
    let mut p = Program::new();
    let xs = p.vars(n);
    let ys = p.vars(n);
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    if closed {
        edges.push((order[order.len() - 1], order[0]));
    }
    for &(a, b) in &edges {
        let l = p.var();
        p.minimize_term(l, 1.0);
        p.soc(Affine::var(l), &[Affine::var(xs[b]).add(xs[a], -1.0), Affine::var(ys[b]).add(ys[a], -1.0)]);
    }
    for &w in order {
        let c = centers[w];
        p.soc(Affine::constant(r / KM), &[Affine::var(xs[w]).plus(-c.x / KM), Affine::var(ys[w]).plus(-c.y / KM)]);
    }
    let sol = p.solve(Tolerances { gap: 1e-10, feas: 1e-10, ..Tolerances::default() })?;
    Ok((0..n).map(|w| Point::new(sol.x[xs[w]] * KM, sol.x[ys[w]] * KM)).collect())
}

fn project_to_disk(p: Point, c: Point, r: f64) -> Point {
    let d = p.dist(c);
    if d <= r {
        p
    } else {
        c + (p - c) * (r / d)
    }
}

/// Best point of the disk for the two-anchor cost `|g - a| + |g - b|`.
fn best_between(c: Point, r: f64, a: Point, b: Point) -> Point {
    // If the segment a-b meets the disk, its entry point is optimal.
    let ab = b - a;
    let l2 = ab.norm_sq();
    if l2 > 0.0 {
        let ac = a - c;
        // |a + s ab - c|^2 = r^2
        let (qa, qb, qc) = (l2, 2.0 * (ac.x * ab.x + ac.y * ab.y), ac.norm_sq() - r * r);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let (s1, s2) = ((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa));
            if s2 >= 0.0 && s1 <= 1.0 {
                return project_to_disk(a.lerp(b, s1.max(0.0)), c, r);
            }
        }
    } else if a.dist(c) <= r {
        return a;
    }
    let cost = |th: f64| {
        let g = c + Point::new(th.cos(), th.sin()) * r;
        g.dist(a) + g.dist(b)
    };
    let samples = 64;
    let step = std::f64::consts::TAU / samples as f64;
    let k = (0..samples).min_by(|&i, &j| cost(i as f64 * step).total_cmp(&cost(j as f64 * step))).unwrap();
    let (mut lo, mut hi) = ((k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if cost(m1) <= cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let th = 0.5 * (lo + hi);
    c + Point::new(th.cos(), th.sin()) * r
}

/// Cyclic coordinate descent over the waypoints; each update is the exact
/// minimiser for fixed neighbours and is kept only if it helps.
fn polish(g: &mut [Point], centers: &[Point], order: &[usize], r: f64, closed: bool) {
    let m = order.len();
    for _ in 0..200 {
        let before = tour_length(g, order, closed);
        for k in 0..m {
            let w = order[k];
            let prev = if k > 0 { Some(order[k - 1]) } else if closed { Some(order[m - 1]) } else { None };
            let next = if k + 1 < m { Some(order[k + 1]) } else if closed { Some(order[0]) } else { None };
            let local = |p: Point| prev.map_or(0.0, |a| p.dist(g[a])) + next.map_or(0.0, |b| p.dist(g[b]));
            let cand = match (prev, next) {
                (Some(a), Some(b)) => best_between(centers[w], r, g[a], g[b]),
                (Some(a), None) | (None, Some(a)) => project_to_disk(g[a], centers[w], r),
                (None, None) => g[w],
            };
            if local(cand) < local(g[w]) {
                g[w] = cand;
            }
        }
        let after = tour_length(g, order, closed);
        if before - after <= 1e-12 * before.max(1.0) {
            break;
        }
    }
}

/// Smallest radius (to within [`RADIUS_TOLERANCE`]) whose optimised route
/// takes at most `t_budget` at speed `v_max`. Returns radius, waypoints and length.
pub fn radius_bisection(
    centers: &[Point],
    order: &[usize],
    t_budget: f64,
    v_max: f64,
    closed: bool,
) -> Result<(f64, Vec<Point>, f64)> {
    if !(t_budget > 0.0) {
        return Err(Error::Validation(format!("time budget must be positive, got {t_budget}")));
    }
    if !(v_max > 0.0) {
        return Err(Error::Validation(format!("speed must be positive, got {v_max}")));
    }
    let base = tour_length(centers, order, closed);
    if base / v_max <= t_budget {
        return Ok((0.0, centers.to_vec(), base));
    }
    let (mut r1, mut r2) = (0.0, diameter(centers));
    // Every disk of radius = diameter holds every center, so the route can shrink to a point.
    let (mut g2, mut l2) = optimize_waypoints_fixed_order(centers, order, r2, closed);
    while r2 - r1 > RADIUS_TOLERANCE {
        let r = 0.5 * (r1 + r2);
        let (g, l) = optimize_waypoints_fixed_order(centers, order, r, closed);
        if l / v_max > t_budget {
            r1 = r;
        } else {
            r2 = r;
            g2 = g;
            l2 = l;
        }
    }
    Ok((r2, g2, l2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_keeps_centers() {
        let c = [Point::new(0.0, 0.0), Point::new(1000.0, 0.0), Point::new(0.0, 1000.0)];
        let (g, l) = optimize_waypoints_fixed_order(&c, &[0, 1, 2], 0.0, true);
        assert_eq!(g, c.to_vec());
        assert_eq!(l, tour_length(&c, &[0, 1, 2], true));
    }

    #[test]
    fn overlapping_disks_collapse() {
        let c = [Point::new(0.0, 0.0), Point::new(1000.0, 0.0), Point::new(500.0, 800.0)];
        let (_, l) = optimize_waypoints_fixed_order(&c, &[0, 1, 2], 1000.0, true);
        assert!(l < 1e-4, "{l}");
    }

    #[test]
    fn two_disks_closed() {
        // closed route between two disks: twice the gap between them
        let c = [Point::new(0.0, 0.0), Point::new(1000.0, 0.0)];
        let (g, l) = optimize_waypoints_fixed_order(&c, &[0, 1], 300.0, true);
        assert!((l - 800.0).abs() < 1e-5, "{l}");
        assert!(g[0].dist(c[0]) <= 300.0 + 1e-6);
    }

    #[test]
    fn entry_point_on_crossing_segment() {
        let p = best_between(Point::new(0.0, 0.0), 1.0, Point::new(-3.0, 0.0), Point::new(3.0, 0.0));
        assert!((p.x + 1.0).abs() < 1e-12 && p.y.abs() < 1e-12);
    }

    #[test]
    fn bisection_meets_budget() {
        let c = [Point::new(0.0, 0.0), Point::new(3000.0, 0.0), Point::new(1500.0, 2500.0)];
        let order = [0, 1, 2];
        let full = tour_length(&c, &order, true) / 50.0;
        let (r, g, l) = radius_bisection(&c, &order, 0.5 * full, 50.0, true).unwrap();
        assert!(r > 0.0 && l / 50.0 <= 0.5 * full + 1e-9);
        for (w, p) in g.iter().enumerate() {
            assert!(p.dist(c[w]) <= r + 1e-6);
        }
        let (_, l_lo) = optimize_waypoints_fixed_order(&c, &order, r - RADIUS_TOLERANCE, true);
        assert!(l_lo / 50.0 > 0.5 * full - 1e-6);
    }
}
