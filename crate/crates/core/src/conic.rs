//! Thin modelling layer over Clarabel: affine expressions, cone rows and a
//! linear objective.

use crate::error::{Error, Result};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, ExponentialConeT, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};

/// A stalled solve is still used when its last iterate is this close.
const EARLY_STOP_RESIDUAL: f64 = 1e-6;
const EARLY_STOP_GAP: f64 = 1e-4;

fn relative_gap(primal: f64, dual: f64) -> f64 {
    (primal - dual).abs() / primal.abs().max(dual.abs()).max(1.0)
}

/// `sum coef * x[var] + constant`.
#[derive(Debug, Clone, Default)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn var(v: usize) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(v: usize, c: f64) -> Self {
        Self { terms: vec![(v, c)], constant: 0.0 }
    }

    pub fn add(mut self, v: usize, c: f64) -> Self {
        if c != 0.0 {
            self.terms.push((v, c));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Zero,
    Nonneg,
    Soc,
    Exp,
}

#[derive(Debug, Default)]
pub struct Program {
    n_vars: usize,
    objective: Vec<(usize, f64)>,
    rows_i: Vec<usize>,
    rows_j: Vec<usize>,
    rows_v: Vec<f64>,
    b: Vec<f64>,
    blocks: Vec<(Kind, usize)>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: u32,
    pub status: SolverStatus,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub gap: f64,
    pub feas: f64,
    pub max_iter: u32,
    /// Line-search backtracking factor.
    pub backtrack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { gap: 1e-8, feas: 1e-8, max_iter: 200, backtrack: 0.8 }
    }
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self) -> usize {
        self.n_vars += 1;
        self.n_vars - 1
    }

    pub fn vars(&mut self, k: usize) -> Vec<usize> {
        (0..k).map(|_| self.var()).collect()
    }


    /// Adds `c * x[v]` to the minimised objective.
    pub fn minimize_term(&mut self, v: usize, c: f64) {
        self.objective.push((v, c));
    }

    fn push_row(&mut self, e: &Affine) {
        // Clarabel form: s = b - A x with s in the cone; here s = e.
        let row = self.b.len();
        for &(v, c) in &e.terms {
            debug_assert!(v < self.n_vars);
            self.rows_i.push(row);
            self.rows_j.push(v);
            self.rows_v.push(-c);
        }
        self.b.push(e.constant);
    }

    fn push_block(&mut self, kind: Kind, dim: usize) {
        match self.blocks.last_mut() {
            Some((k, d)) if *k == kind && matches!(kind, Kind::Zero | Kind::Nonneg) => *d += dim,
            _ => self.blocks.push((kind, dim)),
        }
    }

    /// `e >= 0`
    pub fn nonneg(&mut self, e: Affine) {
        self.push_row(&e);
        self.push_block(Kind::Nonneg, 1);
    }

    /// `e == 0`
    pub fn zero(&mut self, e: Affine) {
        self.push_row(&e);
        self.push_block(Kind::Zero, 1);
    }

    /// `head >= |tail|`
    pub fn soc(&mut self, head: Affine, tail: &[Affine]) {
        self.push_row(&head);
        for e in tail {
            self.push_row(e);
        }
        self.push_block(Kind::Soc, 1 + tail.len());
    }

    /// `|tail|^2 <= w` via the rotated form `(w + 1, w - 1, 2 tail)`.
    pub fn sq_norm_le(&mut self, w: Affine, tail: &[Affine]) {
        let head = w.clone().plus(1.0);
        let mut rows = Vec::with_capacity(tail.len() + 1);
        rows.push(w.plus(-1.0));
        rows.extend(tail.iter().map(|e| e.clone().scaled(2.0)));
        self.soc(head, &rows);
    }

    /// `(x, y, z)` in the exponential cone: `x <= y log(z / y)`.
    pub fn exp_cone(&mut self, x: Affine, y: Affine, z: Affine) {
        self.push_row(&x);
        self.push_row(&y);
        self.push_row(&z);
        self.push_block(Kind::Exp, 1);
    }

    pub fn solve(&self, tol: Tolerances) -> Result<Solution> {
        let n = self.n_vars;
        let m = self.b.len();
        let a = CscMatrix::new_from_triplets(m, n, self.rows_i.clone(), self.rows_j.clone(), self.rows_v.clone());
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(v, c) in &self.objective {
            q[v] += c;
        }
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        for &(kind, dim) in &self.blocks {
            match kind {
                Kind::Zero => cones.push(ZeroConeT(dim)),
                Kind::Nonneg => cones.push(NonnegativeConeT(dim)),
                Kind::Soc => cones.push(SecondOrderConeT(dim)),
                Kind::Exp => {
                    for _ in 0..dim {
                        cones.push(ExponentialConeT());
                    }
                }
            }
        }
        let settings = DefaultSettings {
            verbose: false,
            max_iter: tol.max_iter,
            tol_gap_abs: tol.gap,
            tol_gap_rel: tol.gap,
            tol_feas: tol.feas,
            linesearch_backtrack_step: tol.backtrack,
            ..Default::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &self.b, &cones, settings)
            .map_err(|e| Error::SolverFailure(format!("conic setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        log::trace!(
            "conic {:?}: obj {} dual {} r_prim {:.1e} r_dual {:.1e} iters {} time {:.3}s",
            sol.status, sol.obj_val, sol.obj_val_dual, sol.r_prim, sol.r_dual, sol.iterations, sol.solve_time
        );
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {}
            SolverStatus::MaxIterations | SolverStatus::InsufficientProgress
                if sol.r_prim < EARLY_STOP_RESIDUAL
                    && relative_gap(sol.obj_val, sol.obj_val_dual) < EARLY_STOP_GAP
                    && sol.x.iter().all(|v| v.is_finite()) =>
            {
                log::debug!("conic solve stopped early ({:?}); using last iterate", sol.status);
            }
            other => {
                return Err(Error::SolverFailure(format!(
                    "conic solver status {other:?} (primal residual {:.1e}, dual residual {:.1e}, duality gap {:.1e}, {} iterations)",
                    sol.r_prim, sol.r_dual, (sol.obj_val - sol.obj_val_dual).abs(), sol.iterations
                )))
            }
        }
        Ok(Solution { x: sol.x.clone(), iterations: sol.iterations, status: sol.status })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_socp() {
        // minimise t subject to t >= |(x - 3, y + 4)| and x + y == 0
        let mut p = Program::new();
        let (x, y, t) = (p.var(), p.var(), p.var());
        p.minimize_term(t, 1.0);
        p.soc(Affine::var(t), &[Affine::var(x).plus(-3.0), Affine::var(y).plus(4.0)]);
        p.zero(Affine::var(x).add(y, 1.0));
        let s = p.solve(Tolerances::default()).unwrap();
        // distance from (3,-4) to the line x + y = 0 is 1/sqrt(2)
        assert!((s.x[t] - 0.5f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn exp_cone_log() {
        // maximise t subject to t <= log(2) written as (t, 1, 2) in K_exp
        let mut p = Program::new();
        let t = p.var();
        p.minimize_term(t, -1.0);
        p.exp_cone(Affine::var(t), Affine::constant(1.0), Affine::constant(2.0));
        let s = p.solve(Tolerances::default()).unwrap();
        assert!((s.x[t] - 2f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn rotated_quadratic() {
        // minimise w subject to |(x - 1, x + 1)|^2 <= w; optimum x = 0, w = 2
        let mut p = Program::new();
        let (x, w) = (p.var(), p.var());
        p.minimize_term(w, 1.0);
        p.sq_norm_le(Affine::var(w), &[Affine::var(x).plus(-1.0), Affine::var(x).plus(1.0)]);
        let s = p.solve(Tolerances::default()).unwrap();
        assert!((s.x[w] - 2.0).abs() < 1e-7);
    }
}
