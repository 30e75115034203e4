//! Linear programs and a revised simplex solver.
//!
//! [`RevisedSimplex`] keeps an explicit dense basis inverse, updated by
//! product-form pivots that only touch the nonzero entries of the pivot row
//! and column. Phase I starts from an all-artificial basis. Pricing is
//! Dantzig's rule; after a run of degenerate pivots the solver falls back to
//! Bland's rule until the objective moves again, which rules out cycling.
//!
//! Solutions are basic, and [`LpSolution::duals`] carries one shadow price
//! per constraint: `∂(optimal objective)/∂(rhs)` in the problem's own sense.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    /// `a·x ≤ b`
    Le,
    /// `a·x ≥ b`
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `opt c·x` subject to the constraints and `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        LinearProgram {
            sense,
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> usize {
        self.constraints.push(Constraint { coeffs, kind, rhs });
        self.constraints.len() - 1
    }

    /// Largest violation of any constraint or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |w, &v| w.max(-v));
        for row in &self.constraints {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match row.kind {
                RowKind::Eq => (lhs - row.rhs).abs(),
                RowKind::Le => lhs - row.rhs,
                RowKind::Ge => row.rhs - lhs,
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("infeasible (phase I residual {residual:e})")]
    Infeasible { residual: f64 },
    #[error("unbounded")]
    Unbounded,
    #[error("iteration limit reached after {iterations} pivots")]
    IterationLimit { iterations: usize },
    #[error("numerical breakdown: {0}")]
    Numerical(String),
}

/// Anything that can solve a [`LinearProgram`] to an optimal basic solution
/// with duals.
pub trait LpSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError>;
}

#[derive(Debug, Clone)]
pub struct RevisedSimplex {
    pub max_iterations: usize,
    /// Primal feasibility tolerance.
    pub feasibility_tol: f64,
    /// Reduced-cost tolerance.
    pub optimality_tol: f64,
    /// Smallest acceptable pivot magnitude.
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_run: usize,
}

impl Default for RevisedSimplex {
    fn default() -> Self {
        RevisedSimplex {
            max_iterations: 200_000,
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            degenerate_run: 50,
        }
    }
}

impl LpSolver for RevisedSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let mut state = Simplex::new(lp, self);
        state.run_phase_one()?;
        state.run_phase_two()?;
        state.finish(lp)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

struct Simplex<'a> {
    cfg: &'a RevisedSimplex,
    m: usize,
    /// Structural plus slack columns; artificial `i` is column `n_real + i`.
    n_real: usize,
    n_struct: usize,
    cols: Vec<Vec<(usize, f64)>>,
    /// Internal (minimization) costs of real columns.
    cost: Vec<f64>,
    /// Rows were multiplied by `row_sign[i]` to make `b ≥ 0`.
    row_sign: Vec<f64>,
    b: Vec<f64>,
    binv: Vec<f64>,
    basis: Vec<usize>,
    /// Position in the basis, or `usize::MAX`.
    basis_pos: Vec<usize>,
    xb: Vec<f64>,
    iterations: usize,
    // scratch
    y: Vec<f64>,
    alpha: Vec<f64>,
    pivot_row: Vec<f64>,
    nz: Vec<usize>,
}

const NONBASIC: usize = usize::MAX;

impl<'a> Simplex<'a> {
    fn new(lp: &LinearProgram, cfg: &'a RevisedSimplex) -> Self {
        let m = lp.constraints.len();
        let n_struct = lp.n_vars();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_struct];
        let mut row_sign = vec![1.0; m];
        let mut b = vec![0.0; m];
        for (i, row) in lp.constraints.iter().enumerate() {
            let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            row_sign[i] = sign;
            b[i] = sign * row.rhs;
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    match cols[j].last_mut() {
                        Some(last) if last.0 == i => last.1 += sign * a,
                        _ => cols[j].push((i, sign * a)),
                    }
                }
            }
        }
        for (i, row) in lp.constraints.iter().enumerate() {
            match row.kind {
                RowKind::Eq => {}
                RowKind::Le => cols.push(vec![(i, row_sign[i])]),
                RowKind::Ge => cols.push(vec![(i, -row_sign[i])]),
            }
        }
        let n_real = cols.len();
        let flip = if lp.sense == Sense::Maximize {
            -1.0
        } else {
            1.0
        };
        let mut cost = vec![0.0; n_real];
        for (j, &c) in lp.objective.iter().enumerate() {
            cost[j] = flip * c;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut basis_pos = vec![NONBASIC; n_real + m];
        for i in 0..m {
            basis_pos[n_real + i] = i;
        }
        Simplex {
            cfg,
            m,
            n_real,
            n_struct,
            cols,
            cost,
            row_sign,
            xb: b.clone(),
            b,
            binv,
            basis: (n_real..n_real + m).collect(),
            basis_pos,
            iterations: 0,
            y: vec![0.0; m],
            alpha: vec![0.0; m],
            pivot_row: vec![0.0; m],
            nz: Vec::with_capacity(m),
        }
    }

    #[inline]
    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_real
    }

    #[inline]
    fn phase_cost(&self, phase: Phase, j: usize) -> f64 {
        match phase {
            Phase::One => {
                if self.is_artificial(j) {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => {
                if self.is_artificial(j) {
                    0.0
                } else {
                    self.cost[j]
                }
            }
        }
    }

    fn compute_duals(&mut self, phase: Phase) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let c = self.phase_cost(phase, self.basis[i]);
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &bk) in self.y.iter_mut().zip(row) {
                    *yk += c * bk;
                }
            }
        }
    }

    fn reduced_cost(&self, phase: Phase, j: usize) -> f64 {
        let mut d = self.phase_cost(phase, j);
        for &(i, a) in &self.cols[j] {
            d -= self.y[i] * a;
        }
        d
    }

    /// `alpha = B⁻¹ A_j`.
    fn compute_column(&mut self, j: usize) {
        let m = self.m;
        if self.is_artificial(j) {
            let k = j - self.n_real;
            for i in 0..m {
                self.alpha[i] = self.binv[i * m + k];
            }
            return;
        }
        self.alpha.iter_mut().for_each(|v| *v = 0.0);
        for &(k, a) in &self.cols[j] {
            for i in 0..m {
                let v = self.binv[i * m + k];
                if v != 0.0 {
                    self.alpha[i] += v * a;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let m = self.m;
        let pr = self.alpha[r];
        self.nz.clear();
        for k in 0..m {
            let v = self.binv[r * m + k] / pr;
            self.pivot_row[k] = v;
            if v != 0.0 {
                self.nz.push(k);
            }
        }
        for i in 0..m {
            if i == r {
                continue;
            }
            let ai = self.alpha[i];
            if ai == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for &k in &self.nz {
                row[k] -= ai * self.pivot_row[k];
            }
        }
        let row = &mut self.binv[r * m..(r + 1) * m];
        row.copy_from_slice(&self.pivot_row);

        let theta = self.xb[r] / pr;
        for i in 0..m {
            if i != r && self.alpha[i] != 0.0 {
                self.xb[i] -= theta * self.alpha[i];
            }
        }
        self.xb[r] = theta;

        let leaving = self.basis[r];
        self.basis_pos[leaving] = NONBASIC;
        self.basis[r] = q;
        self.basis_pos[q] = r;
    }

    fn refresh_primal(&mut self) {
        let m = self.m;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row.iter().zip(&self.b).map(|(a, b)| a * b).sum();
            self.xb[i] = if v < 0.0 && v > -self.cfg.feasibility_tol {
                0.0
            } else {
                v
            };
        }
    }

    fn iterate(&mut self, phase: Phase) -> Result<(), LpError> {
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.cfg.max_iterations {
                return Err(LpError::IterationLimit {
                    iterations: self.iterations,
                });
            }
            self.compute_duals(phase);

            // pricing
            let mut entering = None;
            let mut best = -self.cfg.optimality_tol;
            for j in 0..self.n_real + self.m {
                if self.basis_pos[j] != NONBASIC {
                    continue;
                }
                // artificials never re-enter once they leave
                if self.is_artificial(j) {
                    continue;
                }
                let d = self.reduced_cost(phase, j);
                if d < best {
                    best = d;
                    entering = Some(j);
                    if bland {
                        break;
                    }
                }
            }
            let Some(q) = entering else { return Ok(()) };

            self.compute_column(q);

            // ratio test
            let mut leave: Option<usize> = None;
            let mut min_ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.alpha[i];
                if a <= self.cfg.pivot_tol {
                    continue;
                }
                let ratio = self.xb[i].max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        if ratio < min_ratio - 1e-12 {
                            true
                        } else if ratio <= min_ratio + 1e-12 {
                            if bland {
                                self.basis[i] < self.basis[l]
                            } else {
                                // Prefer artificials leaving, then larger pivots.
                                let ai = self.is_artificial(self.basis[i]);
                                let al = self.is_artificial(self.basis[l]);
                                (ai && !al) || (ai == al && a > self.alpha[l])
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some(i);
                    min_ratio = min_ratio.min(ratio);
                }
            }
            let Some(r) = leave else {
                return Err(LpError::Unbounded);
            };
            if self.xb[r] < 0.0 {
                self.xb[r] = 0.0;
            }
            let step = self.xb[r] / self.alpha[r];
            self.pivot(r, q);
            self.iterations += 1;

            if step <= 1e-12 {
                degenerate += 1;
                if degenerate >= self.cfg.degenerate_run {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            if self.iterations.is_multiple_of(64) {
                self.refresh_primal();
            }
        }
    }

    fn run_phase_one(&mut self) -> Result<(), LpError> {
        self.iterate(Phase::One)?;
        self.refresh_primal();
        let residual: f64 = (0..self.m)
            .filter(|&i| self.is_artificial(self.basis[i]))
            .map(|i| self.xb[i].abs())
            .sum();
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if residual > 1e-7 * scale {
            return Err(LpError::Infeasible { residual });
        }
        self.drive_out_artificials();
        Ok(())
    }

    /// Pivots zero-level artificials out of the basis where a real column
    /// can take their place; rows left with an artificial are redundant.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n_real {
                if self.basis_pos[j] != NONBASIC {
                    continue;
                }
                let mut v = 0.0;
                for &(k, a) in &self.cols[j] {
                    v += self.binv[r * m + k] * a;
                }
                if v.abs() > 1e-7 && best.is_none_or(|(_, bv)| v.abs() > bv.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                self.compute_column(j);
                self.xb[r] = 0.0;
                self.pivot(r, j);
                self.iterations += 1;
            }
        }
        self.refresh_primal();
    }

    fn run_phase_two(&mut self) -> Result<(), LpError> {
        self.iterate(Phase::Two)?;
        self.refresh_primal();
        Ok(())
    }

    /// Rebuilds `B⁻¹` from the basis columns by Gauss-Jordan elimination.
    fn reinvert(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (pos, &j) in self.basis.iter().enumerate() {
            if self.is_artificial(j) {
                a[(j - self.n_real) * m + pos] = 1.0;
            } else {
                for &(i, v) in &self.cols[j] {
                    a[i * m + pos] = v;
                }
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut p = c;
            let mut pv = a[c * m + c].abs();
            for r in c + 1..m {
                let v = a[r * m + c].abs();
                if v > pv {
                    p = r;
                    pv = v;
                }
            }
            if pv < 1e-14 {
                return Err(LpError::Numerical("singular basis".into()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        // `inv` inverts the basis matrix with columns in basis order, so its
        // row `pos` belongs to basic variable `basis[pos]`.
        self.binv = inv;
        self.refresh_primal();
        Ok(())
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_struct];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.n_struct {
                x[j] = self.xb[i].max(0.0);
            }
        }
        x
    }

    fn finish(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let mut x = self.primal();
        let tol = 1e-7 * (1.0 + self.b.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
        if lp.max_violation(&x) > tol {
            self.reinvert()?;
            x = self.primal();
            let v = lp.max_violation(&x);
            if v > tol {
                return Err(LpError::Numerical(alloc::format!("primal residual {v:e}")));
            }
        }
        self.compute_duals(Phase::Two);
        let flip = if lp.sense == Sense::Maximize {
            -1.0
        } else {
            1.0
        };
        let duals = (0..self.m)
            .map(|i| flip * self.row_sign[i] * self.y[i])
            .collect();
        Ok(LpSolution {
            objective: lp.evaluate(&x),
            x,
            duals,
            iterations: self.iterations,
        })
    }
}
