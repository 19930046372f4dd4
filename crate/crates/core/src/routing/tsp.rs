//! Visiting orders: Held-Karp subset DP for closed tours and for open routes
//! with optional source-before-destination precedence.
//!
//! Open routes start and end anywhere, which is the same as a closed tour
//! through an extra node at distance zero from every point.

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Largest instance solved exactly.
pub const EXACT_LIMIT: usize = 18;

#[derive(Debug, Clone, PartialEq)]
pub struct Tour {
    /// Point indices in visiting order.
    pub order: Vec<usize>,
    pub length: f64,
    pub closed: bool,
    /// False when the instance exceeded [`EXACT_LIMIT`] and a local search was used.
    pub exact: bool,
}

/// Length of a tour. Edge lengths are summed in ascending order so that a
/// route and its reversal (or rotation) give bit-identical totals.
pub fn tour_length(points: &[Point], order: &[usize], closed: bool) -> f64 {
    let mut edges: Vec<f64> = order.windows(2).map(|w| points[w[0]].dist(points[w[1]])).collect();
    if closed && order.len() > 1 {
        edges.push(points[order[order.len() - 1]].dist(points[order[0]]));
    }
    edges.sort_by(f64::total_cmp);
    edges.iter().sum()
}

pub fn solve_tsp(points: &[Point], closed: bool) -> Result<Tour> {
    solve(points, &[], closed)
}

/// Open route in which every `(source, destination)` pair visits the source first.
pub fn solve_pdp(points: &[Point], pairs: &[(usize, usize)]) -> Result<Tour> {
    for &(s, d) in pairs {
        if s >= points.len() || d >= points.len() || s == d {
            return Err(Error::Validation(format!("invalid precedence pair ({s}, {d})")));
        }
    }
    solve(points, pairs, false)
}

fn solve(points: &[Point], pairs: &[(usize, usize)], closed: bool) -> Result<Tour> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Validation(format!("routing needs at least 2 points, got {n}")));
    }
    if n >= usize::BITS as usize {
        return Err(Error::Validation(format!("routing supports at most {} points", usize::BITS - 1)));
    }
    // required[j]: bitmask of nodes that must precede j
    let mut required = vec![0usize; n];
    for &(s, d) in pairs {
        required[d] |= 1 << s;
    }
    let (order, exact) = if n <= EXACT_LIMIT {
        (held_karp(points, &required, closed), true)
    } else {
        log::warn!("{n} points exceed the exact limit of {EXACT_LIMIT}; using nearest neighbour + 2-opt");
        (local_search(points, &required, closed), false)
    };
    let length = tour_length(points, &order, closed);
    Ok(Tour { order, length, closed, exact })
}

fn dist_matrix(points: &[Point]) -> Vec<Vec<f64>> {
    points.iter().map(|a| points.iter().map(|b| a.dist(*b)).collect()).collect()
}

fn held_karp(points: &[Point], required: &[usize], closed: bool) -> Vec<usize> {
    let n = points.len();
    let d = dist_matrix(points);
    let full = (1usize << n) - 1;
    // g[mask * n + last]: cheapest completion having visited `mask`, standing at `last`
    let mut g = vec![f64::INFINITY; (full + 1) * n];
    for last in 0..n {
        g[full * n + last] = if closed { d[last][0] } else { 0.0 };
    }
    for mask in (1..full).rev() {
        if closed && mask & 1 == 0 {
            continue;
        }
        for last in 0..n {
            if mask & (1 << last) == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            for j in 0..n {
                if mask & (1 << j) != 0 || required[j] & !mask != 0 {
                    continue;
                }
                let c = d[last][j] + g[(mask | 1 << j) * n + j];
                if c < best {
                    best = c;
                }
            }
            g[mask * n + last] = best;
        }
    }

    let tol = |v: f64| 1e-9 * (1.0 + v.abs());
    let mut order = Vec::with_capacity(n);
    let (mut mask, mut cur) = if closed {
        (1usize, 0usize)
    } else {
        let best = (0..n).filter(|&j| required[j] == 0).map(|j| g[(1 << j) * n + j]).fold(f64::INFINITY, f64::min);
        let first = (0..n)
            .find(|&j| required[j] == 0 && g[(1 << j) * n + j] <= best + tol(best))
            .expect("some node has no predecessor");
        (1 << first, first)
    };
    order.push(cur);
    while mask != full {
        let target = g[mask * n + cur];
        let next = (0..n)
            .filter(|&j| mask & (1 << j) == 0 && required[j] & !mask == 0)
            .find(|&j| d[cur][j] + g[(mask | 1 << j) * n + j] <= target + tol(target))
            .expect("cost-to-go table is consistent");
        mask |= 1 << next;
        cur = next;
        order.push(cur);
    }
    order
}

fn feasible(order: &[usize], required: &[usize]) -> bool {
    let mut seen = 0usize;
    for &v in order {
        if required[v] & !seen != 0 {
            return false;
        }
        seen |= 1 << v;
    }
    true
}

fn local_search(points: &[Point], required: &[usize], closed: bool) -> Vec<usize> {
    let n = points.len();
    let d = dist_matrix(points);
    let mut seen = 0usize;
    let mut cur = (0..n).find(|&j| required[j] == 0).expect("some node has no predecessor");
    let mut order = vec![cur];
    seen |= 1 << cur;
    while order.len() < n {
        let next = (0..n)
            .filter(|&j| seen & (1 << j) == 0 && required[j] & !seen == 0)
            .min_by(|&a, &b| d[cur][a].total_cmp(&d[cur][b]))
            .expect("precedence graph is acyclic");
        seen |= 1 << next;
        order.push(next);
        cur = next;
    }
    let cost = |o: &[usize]| -> f64 {
        let mut c: f64 = o.windows(2).map(|w| d[w[0]][w[1]]).sum();
        if closed {
            c += d[o[n - 1]][o[0]];
        }
        c
    };
    let mut best = cost(&order);
    loop {
        let mut improved = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let mut cand = order.clone();
                cand[i..=j].reverse();
                if !feasible(&cand, required) {
                    continue;
                }
                let c = cost(&cand);
                if c < best - 1e-9 {
                    best = c;
                    order = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_is_boundary_walk() {
        let pts = [Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0)];
        let t = solve_tsp(&pts, true).unwrap();
        assert_eq!(t.length, 4.0);
        assert_eq!(t.order, vec![0, 1, 3, 2]);
    }

    #[test]
    fn collinear_open_is_span() {
        let pts: Vec<Point> = [3.0, -1.0, 7.0, 0.5, 2.0].iter().map(|&x| Point::new(x, 0.0)).collect();
        let t = solve_tsp(&pts, false).unwrap();
        assert!((t.length - 8.0).abs() < 1e-12);
    }

    #[test]
    fn single_pair_forces_order() {
        let pts = [Point::new(10.0, 0.0), Point::new(0.0, 0.0)];
        assert_eq!(solve_pdp(&pts, &[(0, 1)]).unwrap().order, vec![0, 1]);
        assert_eq!(solve_pdp(&pts, &[(1, 0)]).unwrap().order, vec![1, 0]);
    }

    #[test]
    fn too_few_points() {
        assert!(solve_tsp(&[Point::default()], true).is_err());
    }

    #[test]
    fn heuristic_beyond_limit_is_feasible() {
        let pts: Vec<Point> = (0..20).map(|k| Point::new((k * 37 % 11) as f64, (k * 13 % 7) as f64)).collect();
        let pairs: Vec<(usize, usize)> = (0..5).map(|k| (k + 10, k)).collect();
        let t = solve_pdp(&pts, &pairs).unwrap();
        assert!(!t.exact);
        let pos: Vec<usize> = (0..20).map(|v| t.order.iter().position(|&x| x == v).unwrap()).collect();
        for (s, dd) in pairs {
            assert!(pos[s] < pos[dd]);
        }
    }
}
