//! Fluid categories of an occupation measure, non-degeneracy, the search
//! for a non-degenerate optimal measure, and fluid limits of index
//! policies.

use alloc::vec;
use alloc::vec::Vec;

use crate::lp::RevisedSimplex;
use crate::model::{ArmModel, IDLE, PULL};
use crate::priority::StateScores;
use crate::relaxation::{
    resolve_within, solve_relaxation, LinearFunctional, OccupationMeasure, RelaxationError,
    ZERO_CLAMP,
};

/// Fluid category of a state at one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    /// Always pulled: `x_t(s,1) > 0`, `x_t(s,0) = 0`.
    Active,
    /// Partially pulled: both actions carry mass.
    Neutral,
    /// Never pulled: `x_t(s,1) = 0`, whether or not the state has mass.
    Inactive,
}

/// Per-period partition of the states into fluid categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryPartition {
    pub active: Vec<Vec<usize>>,
    pub neutral: Vec<Vec<usize>>,
    pub inactive: Vec<Vec<usize>>,
    /// Flattened `(t, s)`.
    labels: Vec<Category>,
    n_states: usize,
}

impl CategoryPartition {
    #[inline]
    pub fn category(&self, t: usize, s: usize) -> Category {
        self.labels[t * self.n_states + s]
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.active.len()
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn neutral_counts(&self) -> Vec<usize> {
        self.neutral.iter().map(Vec::len).collect()
    }
}

/// Splits states by strict positivity (`> tol`) of their pull and idle mass.
pub fn classify(measure: &OccupationMeasure, tol: f64) -> CategoryPartition {
    let (horizon, n) = (measure.horizon(), measure.n_states());
    let mut part = CategoryPartition {
        active: vec![Vec::new(); horizon],
        neutral: vec![Vec::new(); horizon],
        inactive: vec![Vec::new(); horizon],
        labels: Vec::with_capacity(horizon * n),
        n_states: n,
    };
    for t in 0..horizon {
        for s in 0..n {
            let cat = match (measure.x(t, s, PULL) > tol, measure.x(t, s, IDLE) > tol) {
                (true, false) => Category::Active,
                (true, true) => Category::Neutral,
                (false, _) => Category::Inactive,
            };
            match cat {
                Category::Active => part.active[t].push(s),
                Category::Neutral => part.neutral[t].push(s),
                Category::Inactive => part.inactive[t].push(s),
            }
            part.labels.push(cat);
        }
    }
    part
}

/// Outcome of a non-degeneracy check or search.
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyReport {
    pub nondegenerate: bool,
    pub neutral_counts: Vec<usize>,
    /// An optimal non-degenerate measure, when one was found.
    pub witness: Option<OccupationMeasure>,
    /// Periods at which every optimal measure has no neutral state.
    pub certificate: Option<Vec<usize>>,
    /// Number of LP solves performed by the search.
    pub stages: usize,
}

/// Every period has at least one neutral state.
pub fn is_nondegenerate(partition: &CategoryPartition) -> DegeneracyReport {
    let neutral_counts = partition.neutral_counts();
    DegeneracyReport {
        nondegenerate: neutral_counts.iter().all(|&c| c >= 1),
        neutral_counts,
        witness: None,
        certificate: None,
        stages: 0,
    }
}

/// Minimum decrease of the minimized pull mass that counts as a new
/// solution.
const DECREASE_TOL: f64 = 1e-6;
/// Objective band of the search's face re-solves. Looser bands admit
/// slightly suboptimal solutions whose small stray masses look like
/// category changes when undiscounted rewards nearly tie.
const SEARCH_PIN_TOL: f64 = 1e-10;
/// Masses at or below this are treated as band noise during the search.
const SUPPORT_TOL: f64 = 1e-6;

/// Searches the optimal face for a non-degenerate measure.
///
/// Starting from a basic optimal solution, repeatedly takes the earliest
/// period at which no collected solution pair yields a neutral state, and
/// re-solves over the optimal face minimizing the pull mass of the states
/// that are active there in every collected solution. A period is resolved
/// once some state is pulled in one collected solution and idled in another
/// (their average makes it neutral). A period is certified degenerate when
/// that minimum cannot go below what the collected solutions already
/// achieve. If every period resolves, the uniform average of the collected
/// solutions is returned as the witness.
pub fn search_nondegenerate(model: &ArmModel) -> Result<DegeneracyReport, RelaxationError> {
    let first = solve_relaxation(model)?;
    let pinned = first.value();
    let horizon = model.horizon();
    let n = model.n_states();
    let mut solutions = vec![first];
    let mut stages = 1;
    let mut certified: Vec<usize> = Vec::new();
    let max_stages = horizon * (n + 1);

    loop {
        let resolved = resolved_periods(&solutions, n);
        let Some(tk) = (0..horizon).find(|t| !resolved[*t] && !certified.contains(t)) else {
            break;
        };
        let always_active: Vec<usize> = (0..n)
            .filter(|&s| {
                solutions
                    .iter()
                    .all(|m| m.x(tk, s, PULL) > SUPPORT_TOL && m.x(tk, s, IDLE) <= SUPPORT_TOL)
            })
            .collect();
        if always_active.is_empty() || stages >= max_stages {
            certified.push(tk);
            continue;
        }
        let functional = LinearFunctional::pull_mass(tk, &always_active);
        let previous = solutions
            .iter()
            .map(|m| functional.evaluate(m))
            .fold(f64::INFINITY, f64::min);
        let candidate = resolve_within(
            model,
            pinned,
            SEARCH_PIN_TOL,
            &functional,
            &RevisedSimplex::default(),
        )?;
        stages += 1;
        if functional.evaluate(&candidate) < previous - DECREASE_TOL {
            solutions.push(candidate);
        } else {
            certified.push(tk);
        }
    }

    let weight = 1.0 / solutions.len() as f64;
    let parts: Vec<(&OccupationMeasure, f64)> = solutions.iter().map(|m| (m, weight)).collect();
    let combined = OccupationMeasure::convex_combination(model, &parts)?;
    let neutral_counts = classify(&combined, ZERO_CLAMP).neutral_counts();
    certified.sort_unstable();
    let nondegenerate = certified.is_empty();
    Ok(DegeneracyReport {
        nondegenerate,
        neutral_counts,
        witness: nondegenerate.then_some(combined),
        certificate: (!nondegenerate).then_some(certified),
        stages,
    })
}

fn resolved_periods(solutions: &[OccupationMeasure], n: usize) -> Vec<bool> {
    let horizon = solutions[0].horizon();
    (0..horizon)
        .map(|t| {
            (0..n).any(|s| {
                solutions.iter().any(|m| m.x(t, s, PULL) > SUPPORT_TOL)
                    && solutions.iter().any(|m| m.x(t, s, IDLE) > SUPPORT_TOL)
            })
        })
        .collect()
}

/// Fluid limit of the index policy that pulls states in `scores` order:
/// each period's `α_t` pull mass goes greedily to the highest-ranked states
/// that carry mass, and the resulting occupancy is pushed forward.
pub fn fluid_propagate(model: &ArmModel, scores: &StateScores) -> OccupationMeasure {
    let (horizon, n) = (model.horizon(), model.n_states());
    let mut x = vec![0.0; horizon * n * 2];
    let mut z = vec![0.0; n];
    z[model.initial_state()] = 1.0;
    for t in 0..horizon {
        let mut budget = model.alpha(t);
        for s in scores.ranking(t) {
            let pull = if budget > 0.0 { budget.min(z[s]) } else { 0.0 };
            budget -= pull;
            x[(t * n + s) * 2 + PULL] = pull;
            x[(t * n + s) * 2 + IDLE] = z[s] - pull;
        }
        if t + 1 < horizon {
            let mut next = vec![0.0; n];
            for s in 0..n {
                for a in 0..2 {
                    let mass = x[(t * n + s) * 2 + a];
                    if mass != 0.0 {
                        for &(j, p) in model.transitions(t, s, a) {
                            next[j] += mass * p;
                        }
                    }
                }
            }
            z = next;
        }
    }
    OccupationMeasure::from_flat(model, x, None).expect("shape matches model")
}

/// `Σ_{t,s,a} |x_policy − x_opt|`.
pub fn fluid_consistency_gap(
    x_policy: &OccupationMeasure,
    x_opt: &OccupationMeasure,
) -> Result<f64, RelaxationError> {
    if x_policy.horizon() != x_opt.horizon() || x_policy.n_states() != x_opt.n_states() {
        return Err(RelaxationError::DimensionMismatch(alloc::format!(
            "{}x{} vs {}x{} measures",
            x_policy.horizon(),
            x_policy.n_states(),
            x_opt.horizon(),
            x_opt.n_states()
        )));
    }
    Ok(x_policy
        .as_flat()
        .iter()
        .zip(x_opt.as_flat())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    #[test]
    fn fixture_categories() {
        let single = solve_relaxation(&zoo::single()).unwrap();
        let p = classify(&single, ZERO_CLAMP);
        assert_eq!(p.neutral, vec![vec![0], vec![0]]);
        assert!(is_nondegenerate(&p).nondegenerate);

        let two = solve_relaxation(&zoo::two()).unwrap();
        let p = classify(&two, ZERO_CLAMP);
        assert_eq!(p.neutral[0], vec![0]);
        assert_eq!(p.inactive[0], vec![1]);
        assert_eq!(p.active[1], vec![0]);
        assert_eq!(p.inactive[1], vec![1]);
        let report = is_nondegenerate(&p);
        assert!(!report.nondegenerate);
        assert_eq!(report.neutral_counts, vec![1, 0]);
    }

    #[test]
    fn idle_only_mass_is_inactive() {
        let model = zoo::single();
        let mut flat = vec![0.0; 4];
        flat[0] = 0.3;
        let m = OccupationMeasure::from_flat(&model, flat, None).unwrap();
        assert_eq!(classify(&m, ZERO_CLAMP).category(0, 0), Category::Inactive);
    }

    #[test]
    fn search_on_fixtures() {
        let r = search_nondegenerate(&zoo::single()).unwrap();
        assert!(r.nondegenerate);
        assert_eq!(r.stages, 1);
        assert!(r.witness.is_some());

        let r = search_nondegenerate(&zoo::two()).unwrap();
        assert!(!r.nondegenerate);
        assert_eq!(r.certificate, Some(vec![1]));
        assert!(r.witness.is_none());
    }

    #[test]
    fn propagation_on_two() {
        let model = zoo::two();
        let opt = solve_relaxation(&model).unwrap();
        let good = fluid_propagate(&model, &StateScores::stationary(2, &[1.0, 0.0]));
        assert!((good.value() - 1.0).abs() < 1e-12);
        // B carries no mass at t=0, so ranking it first wastes nothing
        let flipped =
            StateScores::from_fn(2, 2, |t, s| if t == 0 { s as f64 } else { 1.0 - s as f64 });
        let other = fluid_propagate(&model, &flipped);
        assert!((other.value() - 1.0).abs() < 1e-12);
        assert!(fluid_consistency_gap(&other, &opt).unwrap() < 1e-12);
        assert!(other.max_violation(&model) < 1e-12);
    }
}
