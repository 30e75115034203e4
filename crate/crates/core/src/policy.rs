//! Allocation rules: given the period and the count state, decide how many
//! arms in each state to pull.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, Hypergeometric};
use thiserror::Error;

use crate::belief::Posterior;
use crate::model::{period_budget, AllocationPlan, ArmModel, CountState, PULL};
use crate::occupancy::{
    classify, is_nondegenerate, search_nondegenerate, Category, CategoryPartition,
};
use crate::priority::{lambda_from_duals, q_recursion, StateScores};
use crate::relaxation::{solve_relaxation, OccupationMeasure, RelaxationError, ZERO_CLAMP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("activation probability {q} at (t={t}, s={s}) is outside [0, 1]")]
    QOutOfRange { t: usize, s: usize, q: f64 },
    #[error("model has no posterior annotations")]
    MissingMetadata,
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
}

/// The fluid target behind fluid-priority and budget-relaxed policies: an
/// optimal occupation measure, its categories and a priority order.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidPlan {
    pub measure: OccupationMeasure,
    pub partition: CategoryPartition,
    pub scores: StateScores,
    rankings: Vec<Vec<usize>>,
    /// Per period: active, neutral and inactive states in priority order.
    ordered: Vec<[Vec<usize>; 3]>,
}

impl FluidPlan {
    pub fn new(
        model: &ArmModel,
        measure: OccupationMeasure,
        scores: StateScores,
    ) -> Result<Self, PolicyError> {
        let (horizon, n) = (model.horizon(), model.n_states());
        if measure.horizon() != horizon
            || measure.n_states() != n
            || scores.horizon() != horizon
            || scores.n_states() != n
        {
            return Err(PolicyError::DimensionMismatch(alloc::format!(
                "fluid plan for a {horizon}x{n} model"
            )));
        }
        let partition = classify(&measure, ZERO_CLAMP);
        let rankings = scores.rankings();
        let ordered = rankings
            .iter()
            .enumerate()
            .map(|(t, order)| {
                let mut split: [Vec<usize>; 3] = Default::default();
                for &s in order {
                    let slot = match partition.category(t, s) {
                        Category::Active => 0,
                        Category::Neutral => 1,
                        Category::Inactive => 2,
                    };
                    split[slot].push(s);
                }
                split
            })
            .collect();
        Ok(FluidPlan {
            measure,
            partition,
            scores,
            rankings,
            ordered,
        })
    }

    /// The default plan for a model: Lagrangian priority scores at the dual
    /// prices, and a non-degenerate optimal measure when the search finds
    /// one (otherwise the basic optimal solution).
    pub fn for_model(model: &ArmModel) -> Result<Self, PolicyError> {
        let basic = solve_relaxation(model)?;
        let lambda = lambda_from_duals(&basic).expect("solver attaches duals");
        let scores = q_recursion(model, &lambda).scores;
        let measure = if is_nondegenerate(&classify(&basic, ZERO_CLAMP)).nondegenerate {
            basic
        } else {
            search_nondegenerate(model)?.witness.unwrap_or(basic)
        };
        Self::new(model, measure, scores)
    }

    #[inline]
    pub fn ranking(&self, t: usize) -> &[usize] {
        &self.rankings[t]
    }
}

fn check_counts(model: &ArmModel, counts: &CountState) -> Result<(), PolicyError> {
    if counts.z.len() != model.n_states() || counts.t >= model.horizon() {
        return Err(PolicyError::DimensionMismatch(alloc::format!(
            "count state over {} states at t={} for a {}x{} model",
            counts.z.len(),
            counts.t,
            model.horizon(),
            model.n_states()
        )));
    }
    Ok(())
}

/// The fluid-priority allocation.
///
/// With `B` the period budget: active states (in priority order) take
/// `min(B, Z(s))`; neutral states first take up to their fluid quota
/// `⌊N x_t(s,1)⌋`, then share what is left in priority order; inactive
/// states absorb any remainder. Exactly `B` arms are pulled.
pub fn fluid_priority_allocate(
    model: &ArmModel,
    plan: &FluidPlan,
    counts: &CountState,
) -> Result<AllocationPlan, PolicyError> {
    check_counts(model, counts)?;
    let t = counts.t;
    let mut budget = period_budget(model, counts.n, t);
    let mut pulled = vec![0u64; counts.z.len()];
    let [active, neutral, inactive] = &plan.ordered[t];
    for &s in active {
        let x = budget.min(counts.z[s]);
        pulled[s] = x;
        budget -= x;
    }
    for &s in neutral {
        let x = budget
            .min(counts.z[s])
            .min(fluid_quota(plan, counts.n, t, s));
        pulled[s] = x;
        budget -= x;
    }
    for &s in neutral {
        let x = budget.min(counts.z[s] - pulled[s]);
        pulled[s] += x;
        budget -= x;
    }
    for &s in inactive {
        let x = budget.min(counts.z[s]);
        pulled[s] = x;
        budget -= x;
    }
    Ok(AllocationPlan::from_pulls(counts, pulled, false))
}

/// The budget-relaxed allocation: every active arm is pulled whatever the
/// budget; neutral states are then served as in the fluid-priority rule
/// while budget remains; inactive arms are never pulled.
pub fn budget_relaxed_allocate(
    model: &ArmModel,
    plan: &FluidPlan,
    counts: &CountState,
) -> Result<AllocationPlan, PolicyError> {
    check_counts(model, counts)?;
    let t = counts.t;
    let [active, neutral, _] = &plan.ordered[t];
    let mut budget = period_budget(model, counts.n, t) as i64;
    let mut pulled = vec![0u64; counts.z.len()];
    for &s in active {
        pulled[s] = counts.z[s];
        budget -= counts.z[s] as i64;
    }
    if budget > 0 {
        let mut budget = budget as u64;
        for &s in neutral {
            let x = budget
                .min(counts.z[s])
                .min(fluid_quota(plan, counts.n, t, s));
            pulled[s] = x;
            budget -= x;
        }
        for &s in neutral {
            let x = budget.min(counts.z[s] - pulled[s]);
            pulled[s] += x;
            budget -= x;
        }
    }
    Ok(AllocationPlan::from_pulls(counts, pulled, true))
}

#[inline]
fn fluid_quota(plan: &FluidPlan, n: u64, t: usize, s: usize) -> u64 {
    crate::math::floor_count(n as f64 * plan.measure.x(t, s, PULL))
}

/// Indicator of a budget violation at `counts.t`: the active arms alone
/// exceed the budget, or active plus neutral arms fall short of it.
pub fn violation_event(
    model: &ArmModel,
    partition: &CategoryPartition,
    counts: &CountState,
) -> bool {
    let t = counts.t;
    let budget = period_budget(model, counts.n, t);
    let active: u64 = partition.active[t].iter().map(|&s| counts.z[s]).sum();
    let neutral: u64 = partition.neutral[t].iter().map(|&s| counts.z[s]).sum();
    !(active <= budget && budget <= active + neutral)
}

/// Pulls arms in `ranking` order until `budget` arms are pulled.
pub fn index_allocate(counts: &CountState, ranking: &[usize], budget: u64) -> AllocationPlan {
    let mut left = budget;
    let mut pulled = vec![0u64; counts.z.len()];
    for &s in ranking {
        if left == 0 {
            break;
        }
        let x = left.min(counts.z[s]);
        pulled[s] = x;
        left -= x;
    }
    AllocationPlan::from_pulls(counts, pulled, false)
}

/// Activation probabilities `q_t(s) = x_t(s,1)/z_t(s)` (0 on empty states).
pub fn activation_probabilities(
    measure: &OccupationMeasure,
    t: usize,
) -> Result<Vec<f64>, PolicyError> {
    (0..measure.n_states())
        .map(|s| {
            let z = measure.z(t, s);
            let q = if z > 0.0 {
                measure.x(t, s, PULL) / z
            } else {
                0.0
            };
            if !(0.0..=1.0 + 1e-9).contains(&q) {
                return Err(PolicyError::QOutOfRange { t, s, q });
            }
            Ok(q.min(1.0))
        })
        .collect()
}

/// Random activation: arms are visited in uniformly random order and each
/// arm in state `s` is pulled with probability `q_t(s)` while budget
/// remains. May pull fewer than `budget` arms.
pub fn rac_allocate<R: Rng + ?Sized>(
    measure: &OccupationMeasure,
    counts: &CountState,
    budget: u64,
    rng: &mut R,
) -> Result<AllocationPlan, PolicyError> {
    let q = activation_probabilities(measure, counts.t)?;
    let mut arms: Vec<usize> = Vec::with_capacity(counts.n as usize);
    for (s, &z) in counts.z.iter().enumerate() {
        arms.extend(core::iter::repeat_n(s, z as usize));
    }
    let mut pulled = vec![0u64; counts.z.len()];
    rac_visit(&mut arms, &q, budget, rng, |s| pulled[s] += 1);
    Ok(AllocationPlan::from_pulls(counts, pulled, false))
}

/// Visits `items` in random order (a lazy Fisher–Yates shuffle), pulling
/// with probability `q[state(item)]` until `budget` pulls are made.
fn rac_visit<T: Copy + Into<usize>, R: Rng + ?Sized>(
    items: &mut [T],
    q: &[f64],
    budget: u64,
    rng: &mut R,
    mut on_pull: impl FnMut(T),
) {
    let mut left = budget;
    let len = items.len();
    for i in 0..len {
        if left == 0 {
            break;
        }
        let j = rng.random_range(i..len);
        items.swap(i, j);
        let item = items[i];
        let p = q[item.into()];
        if p > 0.0 && (p >= 1.0 || rng.random::<f64>() < p) {
            on_pull(item);
            left -= 1;
        }
    }
}

/// Per-state optimistic scores `μ(s) + δ σ(s)`.
pub fn ucb_scores(model: &ArmModel, delta: f64) -> Result<StateScores, PolicyError> {
    let beliefs = model.beliefs().ok_or(PolicyError::MissingMetadata)?;
    let per_state: Vec<f64> = beliefs.iter().map(|b| b.mean() + delta * b.sd()).collect();
    Ok(StateScores::stationary(model.horizon(), &per_state))
}

/// How Thompson sampling draws its samples at the count level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThompsonMode {
    /// One posterior draw per arm, then the top `B` arms.
    PerArm,
    /// Exact aggregated sampler for closed-form posteriors; falls back to
    /// per-arm draws when some occupied state lacks a closed-form CDF.
    Aggregated,
}

/// Thompson sampling: every arm draws a value from its state's posterior
/// and the `budget` arms with the largest draws are pulled.
pub fn ts_allocate<R: Rng + ?Sized>(
    model: &ArmModel,
    counts: &CountState,
    budget: u64,
    mode: ThompsonMode,
    rng: &mut R,
) -> Result<AllocationPlan, PolicyError> {
    let beliefs = model.beliefs().ok_or(PolicyError::MissingMetadata)?;
    let closed = counts
        .z
        .iter()
        .zip(beliefs)
        .all(|(&z, b)| z == 0 || b.has_closed_form_cdf());
    let pulled = if mode == ThompsonMode::Aggregated && closed {
        ts_bisection(beliefs, &counts.z, budget, rng)
    } else {
        ts_per_arm_counts(beliefs, &counts.z, budget, rng)
    };
    Ok(AllocationPlan::from_pulls(counts, pulled, false))
}

fn ts_per_arm_counts<R: Rng + ?Sized>(
    beliefs: &[Posterior],
    z: &[u64],
    budget: u64,
    rng: &mut R,
) -> Vec<u64> {
    let mut draws: Vec<(f64, usize)> = Vec::with_capacity(z.iter().sum::<u64>() as usize);
    for (s, &count) in z.iter().enumerate() {
        for _ in 0..count {
            draws.push((beliefs[s].sample(rng), s));
        }
    }
    let mut pulled = vec![0u64; z.len()];
    for &(_, s) in top_k(&mut draws, budget as usize) {
        pulled[s] += 1;
    }
    pulled
}

/// The `k` entries with the largest sample values (unordered).
fn top_k(draws: &mut [(f64, usize)], k: usize) -> &[(f64, usize)] {
    if k == 0 {
        return &draws[..0];
    }
    if k < draws.len() {
        draws.select_nth_unstable_by(k - 1, |a, b| b.0.total_cmp(&a.0));
    }
    &draws[..k.min(draws.len())]
}

const BISECTION_DEPTH: usize = 60;

/// Exact count-level Thompson sampling by recursive bisection of `[0, 1]`.
///
/// Given how many of each state's draws lie in `[lo, hi]` and how many of
/// those must be pulled, the number above `mid` is binomial with the
/// conditional probability `(F(hi) − F(mid))/(F(hi) − F(lo))`. If the upper
/// half holds enough draws the search continues there; otherwise all of
/// them are pulled and the search continues below. It ends once a single
/// state remains (any of its draws are interchangeable) or the interval's
/// draws exactly fill the need. Past the depth cap the remaining draws are
/// tied to machine precision and the need is filled uniformly at random.
fn ts_bisection<R: Rng + ?Sized>(
    beliefs: &[Posterior],
    z: &[u64],
    budget: u64,
    rng: &mut R,
) -> Vec<u64> {
    let mut pulled = vec![0u64; z.len()];
    let live: Vec<usize> = (0..z.len()).filter(|&s| z[s] > 0).collect();
    let mut c: Vec<u64> = live.iter().map(|&s| z[s]).collect();
    // (F, 1 − F) at the interval endpoints
    let mut at_lo: Vec<(f64, f64)> = vec![(0.0, 1.0); live.len()];
    let mut at_hi: Vec<(f64, f64)> = vec![(1.0, 0.0); live.len()];
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut need = budget.min(c.iter().sum());
    let mut upper = vec![0u64; live.len()];
    let mut at_mid = vec![(0.0, 0.0); live.len()];
    for depth in 0.. {
        let total: u64 = c.iter().sum();
        if need == 0 {
            break;
        }
        if total == need {
            for (i, &s) in live.iter().enumerate() {
                pulled[s] += c[i];
            }
            break;
        }
        let mut occupied = (0..live.len()).filter(|&i| c[i] > 0);
        let first = occupied.next().expect("total > need > 0");
        if occupied.next().is_none() {
            pulled[live[first]] += need;
            break;
        }
        if depth >= BISECTION_DEPTH {
            let mut pool = total;
            for (i, &s) in live.iter().enumerate() {
                if need == 0 {
                    break;
                }
                if c[i] == 0 {
                    continue;
                }
                let x = if c[i] == pool {
                    need
                } else {
                    Hypergeometric::new(pool, c[i], need)
                        .expect("valid hypergeometric")
                        .sample(rng)
                };
                pulled[s] += x;
                need -= x;
                pool -= c[i];
            }
            break;
        }
        let mid = 0.5 * (lo + hi);
        let mut up_total = 0;
        for i in 0..live.len() {
            upper[i] = 0;
            if c[i] == 0 {
                continue;
            }
            let tails = beliefs[live[i]].tails(mid).expect("closed-form posterior");
            at_mid[i] = tails;
            let whole = interval_mass(at_lo[i], at_hi[i]);
            let p = if whole > 0.0 {
                (interval_mass(tails, at_hi[i]) / whole).clamp(0.0, 1.0)
            } else {
                0.5
            };
            upper[i] = Binomial::new(c[i], p).expect("valid binomial").sample(rng);
            up_total += upper[i];
        }
        if up_total >= need {
            c.copy_from_slice(&upper);
            at_lo.copy_from_slice(&at_mid);
            lo = mid;
        } else {
            for (i, &s) in live.iter().enumerate() {
                pulled[s] += upper[i];
                c[i] -= upper[i];
                at_hi[i] = at_mid[i];
            }
            need -= up_total;
            hi = mid;
        }
    }
    pulled
}

/// `F(hi) − F(lo)` from whichever tail avoids cancellation.
#[inline]
fn interval_mass(lo: (f64, f64), hi: (f64, f64)) -> f64 {
    if lo.0 >= 0.5 {
        (lo.1 - hi.1).max(0.0)
    } else {
        (hi.0 - lo.0).max(0.0)
    }
}

/// Something that maps `(t, Z_t)` to an allocation.
pub trait AllocationRule {
    fn allocate(
        &self,
        model: &ArmModel,
        counts: &CountState,
        rng: &mut dyn RngCore,
    ) -> Result<AllocationPlan, PolicyError>;

    /// Decides pulls for individually tracked arms (`arms[i]` is arm `i`'s
    /// state). The default pulls, within each state, the lowest-numbered
    /// arms up to the count-level allocation.
    fn allocate_arms(
        &self,
        model: &ArmModel,
        t: usize,
        arms: &[usize],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<bool>, PolicyError> {
        let mut z = vec![0u64; model.n_states()];
        for &s in arms {
            z[s] += 1;
        }
        let counts = CountState {
            t,
            n: arms.len() as u64,
            z,
        };
        let mut quota = self.allocate(model, &counts, rng)?.pulled;
        Ok(arms
            .iter()
            .map(|&s| {
                let pull = quota[s] > 0;
                if pull {
                    quota[s] -= 1;
                }
                pull
            })
            .collect())
    }

    /// Whether `allocate` ignores its random number generator.
    fn is_deterministic(&self) -> bool {
        true
    }

    /// Fluid target used for violation and diffusion diagnostics.
    fn fluid_plan(&self) -> Option<&FluidPlan> {
        None
    }
}

/// The implemented policies.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    FluidPriority(FluidPlan),
    BudgetRelaxed(FluidPlan),
    Index(StateScores),
    Rac(OccupationMeasure),
    Ucb { delta: f64, scores: StateScores },
    Thompson(ThompsonMode),
}

impl Policy {
    pub fn ucb(model: &ArmModel, delta: f64) -> Result<Self, PolicyError> {
        Ok(Policy::Ucb {
            delta,
            scores: ucb_scores(model, delta)?,
        })
    }

    pub fn thompson(model: &ArmModel, mode: ThompsonMode) -> Result<Self, PolicyError> {
        model.beliefs().ok_or(PolicyError::MissingMetadata)?;
        Ok(Policy::Thompson(mode))
    }

    /// Short name as accepted on the command line.
    pub fn label(&self) -> String {
        match self {
            Policy::FluidPriority(_) => "fluid".into(),
            Policy::BudgetRelaxed(_) => "relaxed".into(),
            Policy::Index(_) => "index".into(),
            Policy::Rac(_) => "rac".into(),
            Policy::Ucb { delta, .. } => alloc::format!("ucb:{delta}"),
            Policy::Thompson(_) => "ts".into(),
        }
    }
}

impl AllocationRule for Policy {
    fn allocate(
        &self,
        model: &ArmModel,
        counts: &CountState,
        rng: &mut dyn RngCore,
    ) -> Result<AllocationPlan, PolicyError> {
        check_counts(model, counts)?;
        let budget = period_budget(model, counts.n, counts.t);
        match self {
            Policy::FluidPriority(plan) => fluid_priority_allocate(model, plan, counts),
            Policy::BudgetRelaxed(plan) => budget_relaxed_allocate(model, plan, counts),
            Policy::Index(scores) | Policy::Ucb { scores, .. } => {
                Ok(index_allocate(counts, &scores.ranking(counts.t), budget))
            }
            Policy::Rac(measure) => rac_allocate(measure, counts, budget, rng),
            Policy::Thompson(mode) => ts_allocate(model, counts, budget, *mode, rng),
        }
    }

    fn allocate_arms(
        &self,
        model: &ArmModel,
        t: usize,
        arms: &[usize],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<bool>, PolicyError> {
        let budget = period_budget(model, arms.len() as u64, t);
        match self {
            Policy::Rac(measure) => {
                let q = activation_probabilities(measure, t)?;
                // shuffle arm identities; `q_arm` is indexed by arm
                let q_arm: Vec<f64> = arms.iter().map(|&s| q[s]).collect();
                let mut order: Vec<usize> = (0..arms.len()).collect();
                let mut pull = vec![false; arms.len()];
                rac_visit(&mut order, &q_arm, budget, rng, |i| pull[i] = true);
                Ok(pull)
            }
            Policy::Thompson(_) => {
                let beliefs = model.beliefs().ok_or(PolicyError::MissingMetadata)?;
                let mut draws: Vec<(f64, usize)> = arms
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| (beliefs[s].sample(rng), i))
                    .collect();
                let mut pull = vec![false; arms.len()];
                for &(_, i) in top_k(&mut draws, budget as usize) {
                    pull[i] = true;
                }
                Ok(pull)
            }
            _ => {
                let mut z = vec![0u64; model.n_states()];
                for &s in arms {
                    z[s] += 1;
                }
                let counts = CountState {
                    t,
                    n: arms.len() as u64,
                    z,
                };
                let mut quota = self.allocate(model, &counts, rng)?.pulled;
                Ok(arms
                    .iter()
                    .map(|&s| {
                        let pull = quota[s] > 0;
                        if pull {
                            quota[s] -= 1;
                        }
                        pull
                    })
                    .collect())
            }
        }
    }

    fn is_deterministic(&self) -> bool {
        !matches!(self, Policy::Rac(_) | Policy::Thompson(_))
    }

    fn fluid_plan(&self) -> Option<&FluidPlan> {
        match self {
            Policy::FluidPriority(plan) | Policy::BudgetRelaxed(plan) => Some(plan),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replication_stream;
    use crate::zoo;

    fn plan_for(model: &ArmModel, scores: &[f64]) -> FluidPlan {
        let m = solve_relaxation(model).unwrap();
        FluidPlan::new(model, m, StateScores::stationary(model.horizon(), scores)).unwrap()
    }

    fn counts(t: usize, z: &[u64]) -> CountState {
        CountState {
            t,
            n: z.iter().sum(),
            z: z.to_vec(),
        }
    }

    #[test]
    fn fluid_priority_fixture_traces() {
        let two = zoo::two();
        let plan = plan_for(&two, &[1.0, 0.0]);
        let x = fluid_priority_allocate(&two, &plan, &counts(0, &[2, 0])).unwrap();
        assert_eq!(x.pulled, vec![1, 0]);
        let x = fluid_priority_allocate(&two, &plan, &counts(1, &[1, 1])).unwrap();
        assert_eq!(x.pulled, vec![1, 0]);

        let single = zoo::single();
        let plan = plan_for(&single, &[0.0]);
        let x = fluid_priority_allocate(&single, &plan, &counts(0, &[4])).unwrap();
        assert_eq!(x.pulled, vec![2]);
    }

    #[test]
    fn budget_relaxed_fixture_traces() {
        let two = zoo::two();
        let plan = plan_for(&two, &[1.0, 0.0]);
        let x = budget_relaxed_allocate(&two, &plan, &counts(1, &[2, 0])).unwrap();
        assert_eq!(x.pulled, vec![2, 0]);
        assert!(x.relaxed);
        let x = budget_relaxed_allocate(&two, &plan, &counts(1, &[0, 2])).unwrap();
        assert_eq!(x.pulled, vec![0, 0]);

        let single = zoo::single();
        let plan = plan_for(&single, &[0.0]);
        for z in 1..12 {
            for t in 0..2 {
                let c = counts(t, &[z]);
                assert_eq!(
                    budget_relaxed_allocate(&single, &plan, &c).unwrap().pulled,
                    fluid_priority_allocate(&single, &plan, &c).unwrap().pulled
                );
            }
        }
    }

    #[test]
    fn violation_examples() {
        let single = zoo::single();
        let plan = plan_for(&single, &[0.0]);
        assert!(!violation_event(&single, &plan.partition, &counts(0, &[9])));
        let two = zoo::two();
        let plan = plan_for(&two, &[1.0, 0.0]);
        assert!(violation_event(&two, &plan.partition, &counts(1, &[1, 3])));
        assert!(violation_event(&two, &plan.partition, &counts(1, &[3, 1])));
        assert!(!violation_event(&two, &plan.partition, &counts(1, &[2, 2])));
    }

    #[test]
    fn index_examples() {
        let c = counts(0, &[3, 1]);
        assert_eq!(index_allocate(&c, &[0, 1], 2).pulled, vec![2, 0]);
        let c = counts(0, &[1, 3]);
        assert_eq!(index_allocate(&c, &[0, 1], 2).pulled, vec![1, 1]);
    }

    #[test]
    fn rac_extremes() {
        let model = zoo::single();
        let all = OccupationMeasure::from_flat(&model, vec![0.0, 1.0, 0.0, 1.0], None).unwrap();
        let none = OccupationMeasure::from_flat(&model, vec![1.0, 0.0, 1.0, 0.0], None).unwrap();
        let mut rng = replication_stream(3, 0);
        let c = counts(0, &[50]);
        assert_eq!(
            rac_allocate(&all, &c, 50, &mut rng).unwrap().pulled,
            vec![50]
        );
        assert_eq!(
            rac_allocate(&none, &c, 50, &mut rng).unwrap().pulled,
            vec![0]
        );
        let bad = OccupationMeasure::from_flat(&model, vec![-0.5, 1.0, 0.0, 1.0], None).unwrap();
        assert!(matches!(
            rac_allocate(&bad, &c, 50, &mut rng),
            Err(PolicyError::QOutOfRange { .. })
        ));
    }

    #[test]
    fn ucb_ranks_by_mean_without_bonus() {
        let model = zoo::bernoulli_bandit(4, 0.5);
        let scores = ucb_scores(&model, 0.0).unwrap();
        let means: Vec<f64> = model.beliefs().unwrap().iter().map(|b| b.mean()).collect();
        for s in 0..model.n_states() {
            assert_eq!(scores.get(0, s), means[s]);
        }
        assert_eq!(
            ucb_scores(&zoo::two(), 0.5),
            Err(PolicyError::MissingMetadata)
        );
    }

    #[test]
    fn thompson_modes_agree_on_average() {
        // two occupied states with overlapping posteriors
        let model = zoo::bernoulli_bandit(4, 0.5);
        let z = {
            let mut z = vec![0u64; model.n_states()];
            z[zoo::bernoulli_index(2, 1)] = 30;
            z[zoo::bernoulli_index(3, 2)] = 20;
            z[zoo::bernoulli_index(3, 0)] = 10;
            z
        };
        let c = CountState { t: 2, n: 60, z };
        let reps = 20_000;
        let s = zoo::bernoulli_index(3, 2);
        let mut means = [0.0; 2];
        for (m, mode) in [ThompsonMode::PerArm, ThompsonMode::Aggregated]
            .into_iter()
            .enumerate()
        {
            let mut rng = replication_stream(11, m as u64);
            let mut acc = 0.0;
            for _ in 0..reps {
                let plan = ts_allocate(&model, &c, 30, mode, &mut rng).unwrap();
                assert_eq!(plan.total_pulled(), 30);
                acc += plan.pulled[s] as f64;
            }
            means[m] = acc / reps as f64;
        }
        // per-rep sd of the pulled count is below 3
        assert!(
            (means[0] - means[1]).abs() < 5.0 * 3.0 * (2.0 / reps as f64).sqrt(),
            "{means:?}"
        );
    }
}
