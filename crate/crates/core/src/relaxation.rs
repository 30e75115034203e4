//! The occupation-measure linear relaxation of the `N`-armed problem.
//!
//! Variables are `x_t(s, a)`, the probability that a single arm is in state
//! `s` and receives action `a` at period `t`. Rows, in this order:
//!
//! 1. flow balance for every `t ≥ 1` (0-based) and every state `s`:
//!    `Σ_a x_t(s,a) − Σ_{s',a} p_{t−1}(s',a,s) x_{t−1}(s',a) = 0`;
//! 2. one budget row per period: `Σ_s x_t(s,1) = α_t`;
//! 3. initial mass: `Σ_a x_0(s*,a) = 1`;
//! 4. total mass at the first period: `Σ_{s,a} x_0(s,a) = 1`.
//!
//! The LP does not depend on `N`; its value upper-bounds the per-arm
//! optimum, and the budget-row duals are optimal Lagrange multipliers.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::lp::{LinearProgram, LpError, LpSolver, RevisedSimplex, RowKind, Sense};
use crate::model::{validate_model, ArmModel, ModelError, PULL};

/// Entries with magnitude below this are clamped to zero on extraction.
pub const ZERO_CLAMP: f64 = 1e-9;
/// Half-width of the band that pins the objective in [`resolve_with_pins`].
pub const PIN_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelaxationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("LP solver failure: {0}")]
    SolverFailure(LpError),
    #[error("pinned objective value {0} is not attainable")]
    PinInfeasible(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// An optimal (or feasible) occupation measure.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    horizon: usize,
    n_states: usize,
    /// Flattened `(t, s, a)`.
    x: Vec<f64>,
    /// `z_t(s) = Σ_a x_t(s,a)`, flattened `(t, s)`.
    z: Vec<f64>,
    value: f64,
    lambda: Option<Vec<f64>>,
}

impl OccupationMeasure {
    /// Wraps a flattened `(t, s, a)` array, computing `z` and the value
    /// under `model`'s rewards.
    pub fn from_flat(
        model: &ArmModel,
        x: Vec<f64>,
        lambda: Option<Vec<f64>>,
    ) -> Result<Self, RelaxationError> {
        let (horizon, n_states) = (model.horizon(), model.n_states());
        if x.len() != horizon * n_states * 2 {
            return Err(RelaxationError::DimensionMismatch(alloc::format!(
                "{} entries for a {horizon}x{n_states}x2 measure",
                x.len()
            )));
        }
        let z = x.chunks_exact(2).map(|c| c[0] + c[1]).collect();
        let mut value = 0.0;
        for t in 0..horizon {
            for s in 0..n_states {
                for a in 0..2 {
                    value += model.reward(t, s, a) * x[(t * n_states + s) * 2 + a];
                }
            }
        }
        Ok(OccupationMeasure {
            horizon,
            n_states,
            x,
            z,
            value,
            lambda,
        })
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn x(&self, t: usize, s: usize, a: usize) -> f64 {
        self.x[(t * self.n_states + s) * 2 + a]
    }

    #[inline]
    pub fn z(&self, t: usize, s: usize) -> f64 {
        self.z[t * self.n_states + s]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.x
    }

    /// `V̂*_1 = Σ r_t(s,a) x_t(s,a)`.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Budget-row duals `λ*_t`, present on measures returned by
    /// [`solve_relaxation`].
    pub fn duals(&self) -> Option<&[f64]> {
        self.lambda.as_deref()
    }

    /// Largest violation of the relaxation's constraints.
    pub fn max_violation(&self, model: &ArmModel) -> f64 {
        let n = self.n_states;
        let mut worst = self.x.iter().fold(0.0f64, |w, &v| w.max(-v));
        for t in 1..self.horizon {
            let mut inflow = vec![0.0; n];
            for s in 0..n {
                for a in 0..2 {
                    let mass = self.x(t - 1, s, a);
                    if mass != 0.0 {
                        for &(j, p) in model.transitions(t - 1, s, a) {
                            inflow[j] += mass * p;
                        }
                    }
                }
            }
            for (s, v) in inflow.iter().enumerate() {
                worst = worst.max((self.z(t, s) - v).abs());
            }
        }
        for t in 0..self.horizon {
            let pulled: f64 = (0..n).map(|s| self.x(t, s, PULL)).sum();
            worst = worst.max((pulled - model.alpha(t)).abs());
        }
        let s0 = model.initial_state();
        worst = worst.max((self.z(0, s0) - 1.0).abs());
        for s in (0..n).filter(|&s| s != s0) {
            worst = worst.max(self.z(0, s).abs());
        }
        worst
    }

    /// Weighted average of measures over the same model; the result carries
    /// no duals.
    pub fn convex_combination(
        model: &ArmModel,
        parts: &[(&OccupationMeasure, f64)],
    ) -> Result<Self, RelaxationError> {
        let len = model.horizon() * model.n_states() * 2;
        let mut x = vec![0.0; len];
        for (m, w) in parts {
            if m.x.len() != len {
                return Err(RelaxationError::DimensionMismatch("measure shape".into()));
            }
            for (acc, v) in x.iter_mut().zip(&m.x) {
                *acc += w * v;
            }
        }
        Self::from_flat(model, x, None)
    }
}

/// Column layout of the relaxation LP.
#[derive(Debug, Clone)]
pub struct VarLayout {
    horizon: usize,
    n_states: usize,
    /// Full index `(t,s,a)` → LP column, or `None` when the variable was
    /// pruned as unreachable.
    column: Vec<Option<usize>>,
}

impl VarLayout {
    #[inline]
    pub fn full_index(&self, t: usize, s: usize, a: usize) -> usize {
        (t * self.n_states + s) * 2 + a
    }

    pub fn column(&self, t: usize, s: usize, a: usize) -> Option<usize> {
        self.column[self.full_index(t, s, a)]
    }

    pub fn n_columns(&self) -> usize {
        self.column.iter().flatten().count()
    }
}

/// The relaxation as an abstract LP plus the bookkeeping to read it back.
#[derive(Debug, Clone)]
pub struct LpInstance {
    pub lp: LinearProgram,
    pub layout: VarLayout,
    pub flow_rows: usize,
    /// Row index of the budget constraint of period 0; periods follow.
    pub budget_row: usize,
    pub initial_rows: usize,
}

impl LpInstance {
    pub fn n_vars(&self) -> usize {
        self.lp.n_vars()
    }

    pub fn budget_rows(&self) -> usize {
        self.layout.horizon
    }
}

/// Builds the full relaxation LP with `2·T·|S|` columns.
pub fn build_lp(model: &ArmModel) -> Result<LpInstance, RelaxationError> {
    validate_model(model)?;
    Ok(build(model, false))
}

/// Same rows and columns as [`build_lp`], minus variables of states that
/// cannot be reached at their period (they are zero in every feasible
/// solution) and the flow rows that then become `0 = 0`.
pub fn build_reduced_lp(model: &ArmModel) -> Result<LpInstance, RelaxationError> {
    validate_model(model)?;
    Ok(build(model, true))
}

fn build(model: &ArmModel, prune: bool) -> LpInstance {
    let (horizon, n) = (model.horizon(), model.n_states());
    let reachable = if prune { Some(model.reachable()) } else { None };
    let keep = |t: usize, s: usize| reachable.as_ref().is_none_or(|r| r[t][s]);

    let mut column = vec![None; horizon * n * 2];
    let mut objective = Vec::new();
    for t in 0..horizon {
        for s in 0..n {
            if keep(t, s) {
                for a in 0..2 {
                    column[(t * n + s) * 2 + a] = Some(objective.len());
                    objective.push(model.reward(t, s, a));
                }
            }
        }
    }
    let layout = VarLayout {
        horizon,
        n_states: n,
        column,
    };
    let col = |t, s, a| layout.column(t, s, a);
    let mut lp = LinearProgram::new(Sense::Maximize, objective);

    // inflow[t][s] collects (column, prob) of predecessors
    let mut flow_rows = 0;
    for t in 1..horizon {
        let mut inflow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for s in 0..n {
            for a in 0..2 {
                if let Some(c) = col(t - 1, s, a) {
                    for &(j, p) in model.transitions(t - 1, s, a) {
                        inflow[j].push((c, p));
                    }
                }
            }
        }
        for (s, preds) in inflow.into_iter().enumerate() {
            if !keep(t, s) {
                continue;
            }
            let mut coeffs = Vec::with_capacity(preds.len() + 2);
            for a in 0..2 {
                coeffs.push((col(t, s, a).expect("kept"), 1.0));
            }
            for (c, p) in preds {
                coeffs.push((c, -p));
            }
            lp.add(coeffs, RowKind::Eq, 0.0);
            flow_rows += 1;
        }
    }
    let budget_row = lp.constraints.len();
    for t in 0..horizon {
        let coeffs = (0..n)
            .filter_map(|s| col(t, s, PULL))
            .map(|c| (c, 1.0))
            .collect();
        lp.add(coeffs, RowKind::Eq, model.alpha(t));
    }
    let s0 = model.initial_state();
    lp.add(
        (0..2)
            .filter_map(|a| col(0, s0, a))
            .map(|c| (c, 1.0))
            .collect(),
        RowKind::Eq,
        1.0,
    );
    lp.add(
        (0..n)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .filter_map(|(s, a)| col(0, s, a))
            .map(|c| (c, 1.0))
            .collect(),
        RowKind::Eq,
        1.0,
    );
    LpInstance {
        lp,
        layout,
        flow_rows,
        budget_row,
        initial_rows: 2,
    }
}

fn extract(
    model: &ArmModel,
    inst: &LpInstance,
    lp_x: &[f64],
    lambda: Option<Vec<f64>>,
) -> Result<OccupationMeasure, RelaxationError> {
    let mut x = vec![0.0; model.horizon() * model.n_states() * 2];
    for (full, c) in inst.layout.column.iter().enumerate() {
        if let Some(c) = c {
            let v = lp_x[*c];
            x[full] = if v.abs() < ZERO_CLAMP { 0.0 } else { v };
        }
    }
    OccupationMeasure::from_flat(model, x, lambda)
}

/// Reduced LPs with more rows than this are solved by column generation
/// instead of the dense simplex.
pub const DENSE_ROW_LIMIT: usize = 2000;

/// Solves the relaxation: directly with the dense simplex for small LPs,
/// by column generation over single-arm policies for large ones.
pub fn solve_relaxation(model: &ArmModel) -> Result<OccupationMeasure, RelaxationError> {
    let inst = build_reduced_lp(model)?;
    if inst.lp.constraints.len() > DENSE_ROW_LIMIT {
        return crate::decomposition::solve_by_decomposition(model);
    }
    solve_instance(model, &inst, &RevisedSimplex::default())
}

pub fn solve_relaxation_with(
    model: &ArmModel,
    solver: &dyn LpSolver,
) -> Result<OccupationMeasure, RelaxationError> {
    solve_instance(model, &build_reduced_lp(model)?, solver)
}

fn solve_instance(
    model: &ArmModel,
    inst: &LpInstance,
    solver: &dyn LpSolver,
) -> Result<OccupationMeasure, RelaxationError> {
    let sol = solver
        .solve(&inst.lp)
        .map_err(RelaxationError::SolverFailure)?;
    let lambda = sol.duals[inst.budget_row..inst.budget_row + model.horizon()].to_vec();
    let measure = extract(model, inst, &sol.x, Some(lambda))?;
    if (measure.value() - sol.objective).abs() > 1e-8 * (1.0 + sol.objective.abs()) {
        return Err(RelaxationError::SolverFailure(LpError::Numerical(
            alloc::format!(
                "extracted value {} differs from solver objective {}",
                measure.value(),
                sol.objective
            ),
        )));
    }
    Ok(measure)
}

/// `N · V̂*_1`, the upper bound on the `N`-armed optimum.
pub fn upper_bound(measure: &OccupationMeasure, n: u64) -> f64 {
    n as f64 * measure.value()
}

/// A linear functional `Σ c · x_t(s,a)` over occupation measures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearFunctional {
    pub terms: Vec<((usize, usize, usize), f64)>,
}

impl LinearFunctional {
    /// `Σ_{s ∈ states} x_t(s, 1)`.
    pub fn pull_mass(t: usize, states: &[usize]) -> Self {
        LinearFunctional {
            terms: states.iter().map(|&s| ((t, s, PULL), 1.0)).collect(),
        }
    }

    pub fn evaluate(&self, measure: &OccupationMeasure) -> f64 {
        self.terms
            .iter()
            .map(|&((t, s, a), c)| c * measure.x(t, s, a))
            .sum()
    }
}

/// Minimizes `minimize` over the optimal face: the relaxation's feasible set
/// intersected with `|objective − pinned_value| ≤ 1e-7`.
pub fn resolve_with_pins(
    model: &ArmModel,
    pinned_value: f64,
    minimize: &LinearFunctional,
) -> Result<OccupationMeasure, RelaxationError> {
    resolve_with_pins_using(model, pinned_value, minimize, &RevisedSimplex::default())
}

pub fn resolve_with_pins_using(
    model: &ArmModel,
    pinned_value: f64,
    minimize: &LinearFunctional,
    solver: &dyn LpSolver,
) -> Result<OccupationMeasure, RelaxationError> {
    resolve_within(model, pinned_value, PIN_TOL, minimize, solver)
}

/// [`resolve_with_pins_using`] with an explicit half-width for the band
/// around `pinned_value`.
pub fn resolve_within(
    model: &ArmModel,
    pinned_value: f64,
    band: f64,
    minimize: &LinearFunctional,
    solver: &dyn LpSolver,
) -> Result<OccupationMeasure, RelaxationError> {
    let inst = build_reduced_lp(model)?;
    let mut lp = inst.lp.clone();
    let pin: Vec<(usize, f64)> = lp
        .objective
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(j, &c)| (j, c))
        .collect();
    lp.add(pin.clone(), RowKind::Ge, pinned_value - band);
    lp.add(pin, RowKind::Le, pinned_value + band);
    let mut objective = vec![0.0; lp.n_vars()];
    for &((t, s, a), c) in &minimize.terms {
        // pruned variables are identically zero
        if let Some(col) = inst.layout.column(t, s, a) {
            objective[col] += c;
        }
    }
    lp.objective = objective;
    lp.sense = Sense::Minimize;
    let sol = solver.solve(&lp).map_err(|e| match e {
        LpError::Infeasible { .. } => RelaxationError::PinInfeasible(pinned_value),
        other => RelaxationError::SolverFailure(other),
    })?;
    extract(model, &inst, &sol.x, None)
}
