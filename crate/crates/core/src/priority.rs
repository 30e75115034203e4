//! Lagrangian Q-factors and the priority scores derived from them.
//!
//! For multipliers `λ` on the budget rows, the single-arm problem with
//! reward `r_t(s,a) − λ_t·a` decouples and is solved by backward induction;
//! `P_t(s) = Q_t(s,1) − Q_t(s,0)` is the pull advantage at those prices.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::math;
use crate::model::{ArmModel, PULL};
use crate::relaxation::OccupationMeasure;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorityError {
    #[error("occupation measure carries no dual prices")]
    MissingDuals,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(alloc::string::String),
}

/// Per-period state scores; higher scores are pulled first.
#[derive(Debug, Clone, PartialEq)]
pub struct StateScores {
    horizon: usize,
    n_states: usize,
    values: Vec<f64>,
}

impl StateScores {
    /// `values` is flattened `(t, s)`.
    pub fn new(horizon: usize, n_states: usize, values: Vec<f64>) -> Result<Self, PriorityError> {
        if values.len() != horizon * n_states {
            return Err(PriorityError::DimensionMismatch(alloc::format!(
                "{} scores for {horizon} periods x {n_states} states",
                values.len()
            )));
        }
        Ok(StateScores {
            horizon,
            n_states,
            values,
        })
    }

    pub fn from_fn(
        horizon: usize,
        n_states: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(horizon * n_states);
        for t in 0..horizon {
            for s in 0..n_states {
                values.push(f(t, s));
            }
        }
        StateScores {
            horizon,
            n_states,
            values,
        }
    }

    /// The same per-state scores in every period.
    pub fn stationary(horizon: usize, per_state: &[f64]) -> Self {
        Self::from_fn(horizon, per_state.len(), |_, s| per_state[s])
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
    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.values[t * self.n_states + s]
    }

    /// States in pull order at period `t`: descending score, ties by
    /// ascending state index.
    pub fn ranking(&self, t: usize) -> Vec<usize> {
        let row = &self.values[t * self.n_states..(t + 1) * self.n_states];
        let mut order: Vec<usize> = (0..self.n_states).collect();
        order.sort_by(|&i, &j| match row[j].total_cmp(&row[i]) {
            Ordering::Equal => i.cmp(&j),
            other => other,
        });
        order
    }

    pub fn rankings(&self) -> Vec<Vec<usize>> {
        (0..self.horizon).map(|t| self.ranking(t)).collect()
    }
}

/// Multipliers, Q-factors and scores `P_t(s) = Q_t(s,1) − Q_t(s,0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityScheme {
    pub lambda: Vec<f64>,
    /// Flattened `(t, s, a)`.
    q: Vec<f64>,
    pub scores: StateScores,
}

impl PriorityScheme {
    #[inline]
    pub fn q(&self, t: usize, s: usize, a: usize) -> f64 {
        self.q[(t * self.scores.n_states + s) * 2 + a]
    }

    #[inline]
    pub fn score(&self, t: usize, s: usize) -> f64 {
        self.scores.get(t, s)
    }

    /// `max_a Q_t(s, a)`.
    #[inline]
    pub fn value(&self, t: usize, s: usize) -> f64 {
        let (q0, q1) = (self.q(t, s, 0), self.q(t, s, 1));
        if q1 >= q0 {
            q1
        } else {
            q0
        }
    }
}

/// Backward induction for the `λ`-penalized single-arm problem:
/// `Q_t(s,a) = r_t(s,a) − λ_t a + Σ_{s'} p_t(s,a,s') max_{a'} Q_{t+1}(s',a')`
/// with no continuation after the last period.
pub fn q_recursion(model: &ArmModel, lambda: &[f64]) -> PriorityScheme {
    assert_eq!(lambda.len(), model.horizon(), "one multiplier per period");
    let (horizon, n) = (model.horizon(), model.n_states());
    let mut q = vec![0.0; horizon * n * 2];
    let mut next_v = vec![0.0; n];
    for t in (0..horizon).rev() {
        let mut v = vec![0.0; n];
        for s in 0..n {
            for a in 0..2 {
                let mut val = model.reward(t, s, a) - if a == PULL { lambda[t] } else { 0.0 };
                if t + 1 < horizon {
                    for &(j, p) in model.transitions(t, s, a) {
                        val += p * next_v[j];
                    }
                }
                q[(t * n + s) * 2 + a] = val;
            }
            let (q0, q1) = (q[(t * n + s) * 2], q[(t * n + s) * 2 + 1]);
            v[s] = if q1 >= q0 { q1 } else { q0 };
        }
        next_v = v;
    }
    let scores = StateScores::from_fn(horizon, n, |t, s| {
        q[(t * n + s) * 2 + 1] - q[(t * n + s) * 2]
    });
    PriorityScheme {
        lambda: lambda.to_vec(),
        q,
        scores,
    }
}

/// The budget-row duals of a solved relaxation.
pub fn lambda_from_duals(measure: &OccupationMeasure) -> Result<Vec<f64>, PriorityError> {
    measure
        .duals()
        .map(<[f64]>::to_vec)
        .ok_or(PriorityError::MissingDuals)
}

/// Value of the `λ`-penalized single-arm problem from the initial state.
pub fn penalized_dp_value(model: &ArmModel, lambda: &[f64]) -> f64 {
    q_recursion(model, lambda).value(0, model.initial_state())
}

/// The Lagrangian dual function `g(λ) = Σ_t λ_t α_t + penalized DP value`,
/// an upper bound on the relaxation value for every `λ`.
pub fn dual_objective(model: &ArmModel, lambda: &[f64]) -> f64 {
    let priced: f64 = lambda.iter().zip(model.alphas()).map(|(l, a)| l * a).sum();
    priced + penalized_dp_value(model, lambda)
}

/// Result of [`subgradient_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientResult {
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Minimizes `g(λ)` by subgradient descent with steps `c/√k`.
///
/// The subgradient at `λ` is `α_t − P(pull at t)` under the penalized DP's
/// greedy policy (pulling on ties). `λ` is unconstrained because the budget
/// rows are equalities. Both the iterates and their running average are
/// scored; the point with the lowest `g` is returned.
pub fn subgradient_solve(
    model: &ArmModel,
    iterations: usize,
    step_scale: f64,
) -> SubgradientResult {
    let (horizon, n) = (model.horizon(), model.n_states());
    let mut lambda = vec![0.0; horizon];
    let mut average = vec![0.0; horizon];
    let mut best = SubgradientResult {
        objective: f64::INFINITY,
        lambda: lambda.clone(),
        iterations: 0,
    };
    for k in 1..=iterations.max(1) {
        for (avg, l) in average.iter_mut().zip(&lambda) {
            *avg += (l - *avg) / k as f64;
        }
        let g_avg = dual_objective(model, &average);
        if g_avg < best.objective {
            best = SubgradientResult {
                objective: g_avg,
                lambda: average.clone(),
                iterations: k,
            };
        }
        let scheme = q_recursion(model, &lambda);
        let priced: f64 = lambda.iter().zip(model.alphas()).map(|(l, a)| l * a).sum();
        let g = priced + scheme.value(0, model.initial_state());
        if g < best.objective {
            best = SubgradientResult {
                objective: g,
                lambda: lambda.clone(),
                iterations: k,
            };
        }
        // occupancy of the greedy policy
        let mut z = vec![0.0; n];
        z[model.initial_state()] = 1.0;
        let step = step_scale / math::sqrt(k as f64);
        for t in 0..horizon {
            let mut next = vec![0.0; n];
            let mut pulled = 0.0;
            for s in 0..n {
                if z[s] == 0.0 {
                    continue;
                }
                let a = if scheme.q(t, s, 1) >= scheme.q(t, s, 0) {
                    1
                } else {
                    0
                };
                if a == PULL {
                    pulled += z[s];
                }
                if t + 1 < horizon {
                    for &(j, p) in model.transitions(t, s, a) {
                        next[j] += z[s] * p;
                    }
                }
            }
            lambda[t] -= step * (model.alpha(t) - pulled);
            z = next;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relaxation::solve_relaxation;
    use crate::zoo;

    #[test]
    fn single_fixture_recursion() {
        let model = zoo::single();
        let s = q_recursion(&model, &[0.0, 0.0]);
        assert_eq!((s.q(1, 0, 1), s.q(1, 0, 0)), (1.0, 0.0));
        assert_eq!((s.q(0, 0, 1), s.q(0, 0, 0)), (2.0, 1.0));
        assert_eq!((s.score(0, 0), s.score(1, 0)), (1.0, 1.0));
        let s = q_recursion(&model, &[1.0, 1.0]);
        assert_eq!((s.score(0, 0), s.score(1, 0)), (0.0, 0.0));
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let scores = StateScores::new(1, 4, vec![0.5, 2.0, 0.5, -1.0]).unwrap();
        assert_eq!(scores.ranking(0), vec![1, 0, 2, 3]);
    }

    #[test]
    fn duality_identity_on_fixtures() {
        for model in [
            zoo::single(),
            zoo::two(),
            zoo::bernoulli_bandit(2, 1.0 / 3.0),
            zoo::bernoulli_bandit(6, 0.3),
        ] {
            let m = solve_relaxation(&model).unwrap();
            let lambda = lambda_from_duals(&m).unwrap();
            assert!((dual_objective(&model, &lambda) - m.value()).abs() < 1e-6);
        }
    }

    #[test]
    fn missing_duals() {
        let model = zoo::single();
        let m = solve_relaxation(&model).unwrap();
        let combo = OccupationMeasure::convex_combination(&model, &[(&m, 1.0)]).unwrap();
        assert_eq!(lambda_from_duals(&combo), Err(PriorityError::MissingDuals));
    }

    #[test]
    fn subgradient_reaches_dual_value() {
        let single = zoo::single();
        let res = subgradient_solve(&single, 500, 1.0);
        assert!((res.objective - 1.0).abs() < 1e-3, "{}", res.objective);

        let bern = zoo::bernoulli_bandit(2, 1.0 / 3.0);
        let target = solve_relaxation(&bern).unwrap().value();
        let res = subgradient_solve(&bern, 10_000, 1.0);
        assert!(res.objective >= target - 1e-9);
        assert!(
            res.objective - target < 1e-3,
            "{} vs {}",
            res.objective,
            target
        );
    }
}
