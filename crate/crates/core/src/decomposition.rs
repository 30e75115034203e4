//! Column generation for the relaxation.
//!
//! Only the `T` budget rows couple periods across the single-arm MDP, so
//! the relaxation is a master LP over mixtures of deterministic Markov
//! policies: maximize `Σ_k w_k R_k` subject to `Σ_k w_k u_k(t) = α_t` and
//! `Σ_k w_k = 1`, where `R_k` is policy `k`'s expected reward and `u_k(t)`
//! its pull probability at `t`. Pricing a column is the `λ`-penalized
//! single-arm DP at the master's budget duals, so the master has `T + 1`
//! rows however many states the arm has.
//!
//! The first columns are the open-loop policies pulling in the `k` periods
//! with the largest `α_t`; a staircase mixture of them meets every budget,
//! so the master is feasible from the start.

use alloc::vec;
use alloc::vec::Vec;

use crate::lp::{LinearProgram, LpError, LpSolver, RevisedSimplex, RowKind, Sense};
use crate::model::{validate_model, ArmModel, IDLE, PULL};
use crate::priority::q_recursion;
use crate::relaxation::{OccupationMeasure, RelaxationError, ZERO_CLAMP};

/// Pricing rounds before giving up.
pub const MAX_ROUNDS: usize = 20_000;
/// Relative reduced-cost tolerance for optimality.
pub const PRICING_TOL: f64 = 1e-10;

struct Column {
    /// Pull decision per flattened `(t, s)`.
    pulls: Vec<bool>,
    reward: f64,
    usage: Vec<f64>,
}

/// Occupation measure of a deterministic Markov policy, flattened
/// `(t, s, a)`.
fn policy_measure(model: &ArmModel, pulls: &[bool]) -> Vec<f64> {
    let (horizon, n) = (model.horizon(), model.n_states());
    let mut x = vec![0.0; horizon * n * 2];
    let mut z = vec![0.0; n];
    z[model.initial_state()] = 1.0;
    for t in 0..horizon {
        let mut next = vec![0.0; n];
        for s in 0..n {
            if z[s] == 0.0 {
                continue;
            }
            let a = if pulls[t * n + s] { PULL } else { IDLE };
            x[(t * n + s) * 2 + a] = z[s];
            if t + 1 < horizon {
                for &(j, p) in model.transitions(t, s, a) {
                    next[j] += z[s] * p;
                }
            }
        }
        z = next;
    }
    x
}

impl Column {
    fn new(model: &ArmModel, pulls: Vec<bool>) -> Self {
        let (horizon, n) = (model.horizon(), model.n_states());
        let x = policy_measure(model, &pulls);
        let mut reward = 0.0;
        let mut usage = vec![0.0; horizon];
        for t in 0..horizon {
            for s in 0..n {
                for a in [IDLE, PULL] {
                    let v = x[(t * n + s) * 2 + a];
                    if v != 0.0 {
                        reward += model.reward(t, s, a) * v;
                        if a == PULL {
                            usage[t] += v;
                        }
                    }
                }
            }
        }
        Column {
            pulls,
            reward,
            usage,
        }
    }
}

fn open_loop_columns(model: &ArmModel) -> Vec<Column> {
    let (horizon, n) = (model.horizon(), model.n_states());
    let mut order: Vec<usize> = (0..horizon).collect();
    order.sort_by(|&a, &b| model.alpha(b).total_cmp(&model.alpha(a)).then(a.cmp(&b)));
    (0..=horizon)
        .map(|k| {
            let mut pulls = vec![false; horizon * n];
            for &t in &order[..k] {
                pulls[t * n..(t + 1) * n].iter_mut().for_each(|p| *p = true);
            }
            Column::new(model, pulls)
        })
        .collect()
}

fn master(columns: &[Column], model: &ArmModel) -> LinearProgram {
    let horizon = model.horizon();
    let mut lp = LinearProgram::new(Sense::Maximize, columns.iter().map(|c| c.reward).collect());
    for t in 0..horizon {
        let row = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.usage[t] != 0.0)
            .map(|(k, c)| (k, c.usage[t]))
            .collect();
        lp.add(row, RowKind::Eq, model.alpha(t));
    }
    lp.add(
        (0..columns.len()).map(|k| (k, 1.0)).collect(),
        RowKind::Eq,
        1.0,
    );
    lp
}

/// Solves the relaxation by column generation. The returned measure is a
/// mixture of at most `T + 1` deterministic policies and carries the
/// master's budget duals.
pub fn solve_by_decomposition(model: &ArmModel) -> Result<OccupationMeasure, RelaxationError> {
    validate_model(model)?;
    let (horizon, n) = (model.horizon(), model.n_states());
    let solver = RevisedSimplex::default();
    let mut columns = open_loop_columns(model);
    for _ in 0..MAX_ROUNDS {
        let lp = master(&columns, model);
        let sol = solver.solve(&lp).map_err(RelaxationError::SolverFailure)?;
        let lambda = &sol.duals[..horizon];
        let mu = sol.duals[horizon];

        let scheme = q_recursion(model, lambda);
        let pulls: Vec<bool> = (0..horizon * n)
            .map(|i| scheme.score(i / n, i % n) >= 0.0)
            .collect();
        let priced: f64 = lambda.iter().zip(model.alphas()).map(|(l, a)| l * a).sum();
        let bound = priced + scheme.value(0, model.initial_state());
        let reduced = bound - sol.objective;
        let known = columns.iter().any(|c| c.pulls == pulls);
        if reduced <= PRICING_TOL * (1.0 + sol.objective.abs()) || known {
            return assemble(model, &columns, &sol.x, lambda.to_vec());
        }
        let column = Column::new(model, pulls);
        debug_assert!(
            column.reward
                - lambda
                    .iter()
                    .zip(&column.usage)
                    .map(|(l, u)| l * u)
                    .sum::<f64>()
                - mu
                > 0.0
        );
        columns.push(column);
    }
    Err(RelaxationError::SolverFailure(LpError::IterationLimit {
        iterations: MAX_ROUNDS,
    }))
}

fn assemble(
    model: &ArmModel,
    columns: &[Column],
    weights: &[f64],
    lambda: Vec<f64>,
) -> Result<OccupationMeasure, RelaxationError> {
    let mut x = vec![0.0; model.horizon() * model.n_states() * 2];
    for (c, &w) in columns.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        for (xi, v) in x.iter_mut().zip(policy_measure(model, &c.pulls)) {
            *xi += w * v;
        }
    }
    for v in &mut x {
        if v.abs() < ZERO_CLAMP {
            *v = 0.0;
        }
    }
    OccupationMeasure::from_flat(model, x, Some(lambda))
}
