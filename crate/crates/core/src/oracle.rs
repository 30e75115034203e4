//! Exact joint dynamic programming over count vectors, for tiny `N`.
//!
//! The joint state of `N` exchangeable arms is a composition of `N` into
//! `|S|` parts. Compositions are addressed by their rank in lexicographic
//! order; successor distributions are built by convolving one arm at a
//! time. Nothing is pruned or approximated.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use thiserror::Error;

use crate::model::{period_budget, AllocationPlan, ArmModel, CountState, IDLE, PULL};
use crate::policy::{AllocationRule, PolicyError};

/// Default cap on the number of (count state, allocation) pairs.
pub const DEFAULT_PAIR_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance needs about {pairs} (state, allocation) pairs, above the limit of {limit}")]
    BudgetExceeded { pairs: u128, limit: u128 },
    #[error("exact evaluation needs a deterministic policy")]
    NondeterministicPolicy,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// `C(n, k)` in `u128`, saturating.
fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

/// Number of compositions of `m` into `parts` nonnegative parts.
pub fn composition_count(parts: usize, m: u64) -> u128 {
    if parts == 0 {
        return (m == 0) as u128;
    }
    binomial(m + parts as u64 - 1, parts as u64 - 1)
}

/// Compositions of a fixed total into a fixed number of parts, with their
/// lexicographic ranks.
#[derive(Debug, Clone)]
pub struct Compositions {
    parts: usize,
    total: u64,
    /// `count[p][m]`: compositions of `m` into `p` parts.
    count: Vec<Vec<usize>>,
}

impl Compositions {
    pub fn new(parts: usize, total: u64) -> Self {
        let count = (0..=parts)
            .map(|p| {
                (0..=total)
                    .map(|m| composition_count(p, m) as usize)
                    .collect()
            })
            .collect();
        Compositions {
            parts,
            total,
            count,
        }
    }

    pub fn len(&self) -> usize {
        self.count[self.parts][self.total as usize]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rank of `z` among compositions of `Σ z` (which must not exceed the
    /// configured total) in lexicographic order.
    pub fn rank(&self, z: &[u64]) -> usize {
        let mut left: u64 = z.iter().sum();
        let mut rank = 0;
        for (i, &zi) in z.iter().enumerate().take(self.parts.saturating_sub(1)) {
            let rest = self.parts - i - 1;
            // compositions whose i-th part is smaller than zi
            for v in 0..zi {
                rank += self.count[rest][(left - v) as usize];
            }
            left -= zi;
        }
        rank
    }

    /// All compositions of `m ≤ total`, in rank order.
    pub fn enumerate(&self, m: u64) -> Vec<Vec<u64>> {
        let mut out = Vec::with_capacity(self.count[self.parts][m as usize]);
        let mut cur = vec![0u64; self.parts];
        fill(&mut out, &mut cur, 0, m);
        out
    }
}

fn fill(out: &mut Vec<Vec<u64>>, cur: &mut [u64], i: usize, left: u64) {
    if i + 1 == cur.len() {
        cur[i] = left;
        out.push(cur.to_vec());
        return;
    }
    for v in 0..=left {
        cur[i] = v;
        fill(out, cur, i + 1, left - v);
    }
}

/// Allocations `X(·,1) ≤ z` with `Σ X(s,1) = budget`, in lexicographic order.
fn allocations(z: &[u64], budget: u64) -> Vec<Vec<u64>> {
    fn go(
        z: &[u64],
        i: usize,
        left: u64,
        cap_rest: u64,
        cur: &mut Vec<u64>,
        out: &mut Vec<Vec<u64>>,
    ) {
        if i == z.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let rest = cap_rest - z[i];
        let lo = left.saturating_sub(rest);
        for v in lo..=left.min(z[i]) {
            cur.push(v);
            go(z, i + 1, left - v, rest, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    let total = z.iter().sum();
    if budget <= total {
        go(
            z,
            0,
            budget,
            total,
            &mut Vec::with_capacity(z.len()),
            &mut out,
        );
    }
    out
}

/// Distribution of next-period counts when `plan` is applied at period `t`,
/// as `(rank, probability)` pairs with ranks in [`Compositions`] over `n`.
fn successor_distribution(
    model: &ArmModel,
    comps: &Compositions,
    t: usize,
    plan: &AllocationPlan,
) -> Vec<(usize, f64)> {
    let n_states = model.n_states();
    // dense distribution over compositions of the arms placed so far
    let mut placed = 0u64;
    let mut dist: Vec<f64> = vec![1.0];
    let mut lists: Vec<Vec<Vec<u64>>> = vec![comps.enumerate(0)];
    for s in 0..n_states {
        for a in [IDLE, PULL] {
            let row = model.transitions(t, s, a);
            for _ in 0..plan.get(s, a) {
                if lists.len() <= placed as usize + 1 {
                    lists.push(comps.enumerate(placed + 1));
                }
                let mut next = vec![0.0; lists[placed as usize + 1].len()];
                for (i, z) in lists[placed as usize].iter().enumerate() {
                    let w = dist[i];
                    if w == 0.0 {
                        continue;
                    }
                    let mut z = z.clone();
                    for &(j, p) in row {
                        z[j] += 1;
                        next[comps.rank(&z)] += w * p;
                        z[j] -= 1;
                    }
                }
                dist = next;
                placed += 1;
            }
        }
    }
    dist.into_iter()
        .enumerate()
        .filter(|(_, p)| *p > 0.0)
        .collect()
}

fn check_size(model: &ArmModel, n: u64, limit: u128) -> Result<(), OracleError> {
    let states = composition_count(model.n_states(), n);
    let mut pairs: u128 = 0;
    for t in 0..model.horizon() {
        let b = period_budget(model, n, t);
        pairs = pairs.saturating_add(states.saturating_mul(composition_count(model.n_states(), b)));
    }
    if pairs > limit {
        return Err(OracleError::BudgetExceeded { pairs, limit });
    }
    Ok(())
}

/// Optimal value-to-go of the joint problem at every count vector.
#[derive(Debug, Clone)]
pub struct JointValueTable {
    comps: Compositions,
    /// `values[t][rank]`; `values[horizon]` is identically 0.
    values: Vec<Vec<f64>>,
}

impl JointValueTable {
    pub fn value(&self, t: usize, z: &[u64]) -> f64 {
        self.values[t][self.comps.rank(z)]
    }

    pub fn period(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    /// Largest `|V_t(Z) − max_X Q_t(Z, X)|` over the table, with `Q`
    /// recomputed from the stored next-period values.
    pub fn bellman_residual(&self, model: &ArmModel) -> f64 {
        let n = self.comps.total;
        let states = self.comps.enumerate(n);
        let mut residual: f64 = 0.0;
        for t in 0..model.horizon() {
            for (rank, z) in states.iter().enumerate() {
                let best = best_q(model, &self.comps, &self.values, t, n, z);
                residual = residual.max((best - self.values[t][rank]).abs());
            }
        }
        residual
    }
}

fn best_q(
    model: &ArmModel,
    comps: &Compositions,
    values: &[Vec<f64>],
    t: usize,
    n: u64,
    z: &[u64],
) -> f64 {
    let counts = CountState {
        t,
        n,
        z: z.to_vec(),
    };
    let mut best = f64::NEG_INFINITY;
    for pulled in allocations(z, period_budget(model, n, t)) {
        let plan = AllocationPlan::from_pulls(&counts, pulled, false);
        let mut q = plan.reward(model);
        if t + 1 < model.horizon() {
            for (next, p) in successor_distribution(model, comps, t, &plan) {
                q += p * values[t + 1][next];
            }
        }
        best = best.max(q);
    }
    best
}

/// Backward induction over all count vectors, allocating exactly
/// `⌊α_t N⌋` pulls per period.
pub fn solve_joint(model: &ArmModel, n: u64, limit: u128) -> Result<JointValueTable, OracleError> {
    check_size(model, n, limit)?;
    let horizon = model.horizon();
    let comps = Compositions::new(model.n_states(), n);
    let states = comps.enumerate(n);
    let mut values = vec![vec![0.0; states.len()]; horizon + 1];
    for t in (0..horizon).rev() {
        let current = states
            .iter()
            .map(|z| best_q(model, &comps, &values, t, n, z))
            .collect();
        values[t] = current;
    }
    Ok(JointValueTable { comps, values })
}

/// `V*_N`: the optimal expected total reward of `n` arms.
pub fn optimal_value(model: &ArmModel, n: u64) -> Result<f64, OracleError> {
    optimal_value_with_limit(model, n, DEFAULT_PAIR_LIMIT)
}

pub fn optimal_value_with_limit(model: &ArmModel, n: u64, limit: u128) -> Result<f64, OracleError> {
    let table = solve_joint(model, n, limit)?;
    Ok(table.value(0, &CountState::initial(model, n).z))
}

/// Exact expected total reward of a deterministic count-level policy, by
/// propagating the distribution of count vectors forward.
pub fn exact_policy_value(
    model: &ArmModel,
    rule: &dyn AllocationRule,
    n: u64,
) -> Result<f64, OracleError> {
    exact_policy_value_with_limit(model, rule, n, DEFAULT_PAIR_LIMIT)
}

pub fn exact_policy_value_with_limit(
    model: &ArmModel,
    rule: &dyn AllocationRule,
    n: u64,
    limit: u128,
) -> Result<f64, OracleError> {
    if !rule.is_deterministic() {
        return Err(OracleError::NondeterministicPolicy);
    }
    let states = composition_count(model.n_states(), n).saturating_mul(model.horizon() as u128);
    if states > limit {
        return Err(OracleError::BudgetExceeded {
            pairs: states,
            limit,
        });
    }
    let horizon = model.horizon();
    let comps = Compositions::new(model.n_states(), n);
    let all = comps.enumerate(n);
    let mut dist = vec![0.0; all.len()];
    dist[comps.rank(&CountState::initial(model, n).z)] = 1.0;
    let mut rng = NoRandomness;
    let mut total = 0.0;
    for t in 0..horizon {
        let mut next = vec![0.0; all.len()];
        for (rank, z) in all.iter().enumerate() {
            let w = dist[rank];
            if w == 0.0 {
                continue;
            }
            let counts = CountState { t, n, z: z.clone() };
            let plan = rule.allocate(model, &counts, &mut rng)?;
            total += w * plan.reward(model);
            if t + 1 < horizon {
                for (j, p) in successor_distribution(model, &comps, t, &plan) {
                    next[j] += w * p;
                }
            }
        }
        dist = next;
    }
    Ok(total)
}

/// Generator handed to policies that declare themselves deterministic.
struct NoRandomness;

impl RngCore for NoRandomness {
    fn next_u32(&mut self) -> u32 {
        panic!("deterministic policy consumed randomness")
    }

    fn next_u64(&mut self) -> u64 {
        panic!("deterministic policy consumed randomness")
    }

    fn fill_bytes(&mut self, _: &mut [u8]) {
        panic!("deterministic policy consumed randomness")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{FluidPlan, Policy};
    use crate::zoo;

    #[test]
    fn ranks_are_dense_and_ordered() {
        let comps = Compositions::new(3, 4);
        assert_eq!(comps.len(), 15);
        for (i, z) in comps.enumerate(4).iter().enumerate() {
            assert_eq!(comps.rank(z), i);
        }
        for (i, z) in comps.enumerate(2).iter().enumerate() {
            assert_eq!(comps.rank(z), i);
        }
    }

    #[test]
    fn fixture_values() {
        assert_eq!(optimal_value(&zoo::two(), 2).unwrap(), 2.0);
        assert_eq!(optimal_value(&zoo::single(), 3).unwrap(), 2.0);
        let model = zoo::bernoulli_bandit(3, 0.5);
        let table = solve_joint(&model, 3, DEFAULT_PAIR_LIMIT).unwrap();
        assert!(table.bellman_residual(&model) <= 1e-9);
        assert!(table.period(3).iter().all(|&v| v == 0.0));
        let two = zoo::two();
        let fluid = Policy::FluidPriority(FluidPlan::for_model(&two).unwrap());
        assert_eq!(exact_policy_value(&two, &fluid, 2).unwrap(), 2.0);
        let single = zoo::single();
        let fluid = Policy::FluidPriority(FluidPlan::for_model(&single).unwrap());
        assert_eq!(exact_policy_value(&single, &fluid, 3).unwrap(), 2.0);
    }

    struct IdleAll;

    impl AllocationRule for IdleAll {
        fn allocate(
            &self,
            _: &ArmModel,
            counts: &CountState,
            _: &mut dyn RngCore,
        ) -> Result<AllocationPlan, PolicyError> {
            Ok(AllocationPlan::from_pulls(
                counts,
                vec![0; counts.z.len()],
                true,
            ))
        }
    }

    #[test]
    fn idle_stub_and_guards() {
        assert_eq!(exact_policy_value(&zoo::two(), &IdleAll, 3).unwrap(), 0.0);
        assert_eq!(
            exact_policy_value(
                &zoo::two(),
                &Policy::Thompson(crate::policy::ThompsonMode::PerArm),
                2
            ),
            Err(OracleError::NondeterministicPolicy)
        );
        assert!(matches!(
            optimal_value(&zoo::bernoulli_bandit(15, 1.0 / 3.0), 300),
            Err(OracleError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn stochastic_instance_matches_hand_value() {
        // Bernoulli T=2 with two arms and one pull per period: pull at t=0
        // gives 1/2, then pull the better posterior: 1/2·2/3 + 1/2·1/2.
        let model = zoo::bernoulli_bandit(2, 0.5);
        let v = optimal_value(&model, 2).unwrap();
        assert!(
            (v - (0.5 + 0.5 * (2.0 / 3.0) + 0.5 * 0.5)).abs() < 1e-12,
            "{v}"
        );
    }
}
