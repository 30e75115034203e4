//! One replication of the `N`-armed system, simulated either on counts or
//! arm by arm.
//!
//! Count-based dynamics draw, for every `(s, a)`, the successor counts of
//! the `X_t(s,a)` arms from a multinomial with probabilities
//! `p_t(s,a,·)`, by sequential binomial conditioning over the sparse row.
//! The per-arm simulator moves each arm with its own categorical draw and
//! is the reference implementation for policies that act on individual
//! arms.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution};

use crate::model::{diffusion_stats, AllocationPlan, ArmModel, CountState, IDLE, PULL};
use crate::policy::{violation_event, AllocationRule, FluidPlan, PolicyError};

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    /// `Σ_t Σ_{s,a} r_t(s,a) X_t(s,a)`.
    pub reward: f64,
    /// Per period: budget-violation indicator against the reference plan
    /// (all `false` without one).
    pub violated: Vec<bool>,
    /// Per period: `‖Z̃_t‖²` against the reference measure (0 without one).
    pub z_dev_sq: Vec<f64>,
    /// Per period: `‖X̃_t‖²` against the reference measure.
    pub x_dev_sq: Vec<f64>,
}

impl Replication {
    fn new(horizon: usize) -> Self {
        Replication {
            reward: 0.0,
            violated: vec![false; horizon],
            z_dev_sq: vec![0.0; horizon],
            x_dev_sq: vec![0.0; horizon],
        }
    }

    fn observe(
        &mut self,
        model: &ArmModel,
        counts: &CountState,
        plan: &AllocationPlan,
        reference: Option<&FluidPlan>,
    ) -> Result<(), PolicyError> {
        let t = counts.t;
        self.reward += plan.reward(model);
        if let Some(fluid) = reference {
            self.violated[t] = violation_event(model, &fluid.partition, counts);
            let d = diffusion_stats(counts, plan, &fluid.measure)
                .map_err(|e| PolicyError::DimensionMismatch(alloc::format!("{e}")))?;
            self.z_dev_sq[t] = d.z_norm_sq();
            self.x_dev_sq[t] = d.x_norm_sq();
        }
        Ok(())
    }
}

/// Adds the successor counts of `count` arms leaving a state along `row`.
pub fn sample_multinomial<R: Rng + ?Sized>(
    row: &[(usize, f64)],
    count: u64,
    rng: &mut R,
    next: &mut [u64],
) {
    let mut left = count;
    let mut mass = 1.0;
    let last = row.len() - 1;
    for (i, &(j, p)) in row.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i == last {
            next[j] += left;
            break;
        }
        let cond = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let k = if cond >= 1.0 {
            left
        } else if cond <= 0.0 {
            0
        } else {
            Binomial::new(left, cond)
                .expect("valid binomial")
                .sample(rng)
        };
        next[j] += k;
        left -= k;
        mass -= p;
    }
}

/// Count successor state after applying `plan` at period `counts.t`.
pub fn step_counts<R: Rng + ?Sized>(
    model: &ArmModel,
    counts: &CountState,
    plan: &AllocationPlan,
    rng: &mut R,
) -> CountState {
    let t = counts.t;
    let mut next = vec![0u64; counts.z.len()];
    for s in 0..counts.z.len() {
        for a in [IDLE, PULL] {
            let x = plan.get(s, a);
            if x > 0 {
                sample_multinomial(model.transitions(t, s, a), x, rng, &mut next);
            }
        }
    }
    CountState {
        t: t + 1,
        n: counts.n,
        z: next,
    }
}

/// Simulates `n` arms on counts for one replication.
pub fn replicate_counts(
    model: &ArmModel,
    rule: &dyn AllocationRule,
    n: u64,
    reference: Option<&FluidPlan>,
    rng: &mut dyn RngCore,
) -> Result<Replication, PolicyError> {
    let horizon = model.horizon();
    let mut out = Replication::new(horizon);
    let mut counts = CountState::initial(model, n);
    for t in 0..horizon {
        let plan = rule.allocate(model, &counts, rng)?;
        debug_assert!(counts.is_consistent());
        out.observe(model, &counts, &plan, reference)?;
        if t + 1 < horizon {
            counts = step_counts(model, &counts, &plan, rng);
        }
    }
    Ok(out)
}

/// Simulates `n` individually tracked arms for one replication.
pub fn replicate_per_arm(
    model: &ArmModel,
    rule: &dyn AllocationRule,
    n: u64,
    reference: Option<&FluidPlan>,
    rng: &mut dyn RngCore,
) -> Result<Replication, PolicyError> {
    let horizon = model.horizon();
    let n_states = model.n_states();
    let mut out = Replication::new(horizon);
    let mut arms = vec![model.initial_state(); n as usize];
    for t in 0..horizon {
        let pulls = rule.allocate_arms(model, t, &arms, rng)?;
        let mut z = vec![0u64; n_states];
        let mut pulled = vec![0u64; n_states];
        for (&s, &p) in arms.iter().zip(&pulls) {
            z[s] += 1;
            pulled[s] += p as u64;
        }
        let counts = CountState { t, n, z };
        let plan = AllocationPlan::from_pulls(&counts, pulled, false);
        out.observe(model, &counts, &plan, reference)?;
        if t + 1 < horizon {
            for (arm, &p) in arms.iter_mut().zip(&pulls) {
                *arm = sample_categorical(model.transitions(t, *arm, p as usize), rng);
            }
        }
    }
    Ok(out)
}

fn sample_categorical<R: Rng + ?Sized>(row: &[(usize, f64)], rng: &mut R) -> usize {
    if row.len() == 1 {
        return row[0].0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(j, p) in row {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row[row.len() - 1].0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use crate::rng::replication_stream;
    use crate::zoo;

    #[test]
    fn deterministic_fixtures() {
        let two = zoo::two();
        let plan = FluidPlan::for_model(&two).unwrap();
        let policy = Policy::FluidPriority(plan.clone());
        for k in 0..20 {
            let mut rng = replication_stream(5, k);
            let r = replicate_counts(&two, &policy, 2, Some(&plan), &mut rng).unwrap();
            assert_eq!(r.reward, 2.0);
            let r = replicate_per_arm(&two, &policy, 2, Some(&plan), &mut rng).unwrap();
            assert_eq!(r.reward, 2.0);
        }
        let single = zoo::single();
        let plan = FluidPlan::for_model(&single).unwrap();
        let mut rng = replication_stream(5, 0);
        let r =
            replicate_counts(&single, &Policy::FluidPriority(plan), 10, None, &mut rng).unwrap();
        assert_eq!(r.reward, 10.0);
    }

    #[test]
    fn multinomial_conserves_counts() {
        let row = [(0, 0.2), (3, 0.5), (4, 0.3)];
        let mut rng = replication_stream(9, 0);
        let mut tot = [0u64; 5];
        for _ in 0..2000 {
            let mut next = [0u64; 5];
            sample_multinomial(&row, 37, &mut rng, &mut next);
            assert_eq!(next.iter().sum::<u64>(), 37);
            for (a, b) in tot.iter_mut().zip(next) {
                *a += b;
            }
        }
        let n = (2000 * 37) as f64;
        for &(j, p) in &row {
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((tot[j] as f64 / n - p).abs() < 5.0 * se);
        }
    }
}
