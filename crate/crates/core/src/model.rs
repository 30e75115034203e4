//! Single-arm MDP instances and the count-level quantities built on them.
//!
//! An [`ArmModel`] is the problem instance shared by every other module: a
//! horizon, a finite state space with a common initial state, a binary action
//! set (`0` idle, `1` pull), a time-varying transition kernel, time-varying
//! rewards and per-period budget ratios. `N` exchangeable copies of the arm
//! make up the joint problem, whose state is summarized by a [`CountState`]
//! and whose decisions are [`AllocationPlan`]s.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::belief::Posterior;
use crate::math;
use crate::relaxation::OccupationMeasure;

/// Tolerance on `|Σ_{s'} p_t(s,a,s') − 1|`.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Idle action index.
pub const IDLE: usize = 0;
/// Pull action index.
pub const PULL: usize = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("kernel row (t={t}, s={s}, a={a}) sums to {sum}")]
    RowSum {
        t: usize,
        s: usize,
        a: usize,
        sum: f64,
    },
    #[error("probability p_t(s,a,s') = {value} outside [0,1] at (t={t}, s={s}, a={a}, s'={to})")]
    ProbabilityRange {
        t: usize,
        s: usize,
        a: usize,
        to: usize,
        value: f64,
    },
    #[error("budget ratio alpha[{t}] = {value} outside [0,1]")]
    AlphaRange { t: usize, value: f64 },
    #[error("reward r_t(s,a) at (t={t}, s={s}, a={a}) is not finite")]
    NonFiniteReward { t: usize, s: usize, a: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl ModelError {
    /// Short machine-readable tag for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            ModelError::Shape(_) => "ShapeError",
            ModelError::RowSum { .. } => "RowSumError",
            ModelError::ProbabilityRange { .. } | ModelError::AlphaRange { .. } => "RangeError",
            ModelError::NonFiniteReward { .. } => "RangeError",
            ModelError::DimensionMismatch(_) => "DimensionMismatch",
        }
    }
}

/// Transition kernel `p_t(s, a, s')`, stored as sparse rows.
///
/// Dense `(t, s, a, s')` is the canonical contract (see [`Kernel::prob`] and
/// [`Kernel::to_dense`]); rows only keep their nonzero entries so that the
/// large generated problems stay cheap to propagate.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    periods: usize,
    n_states: usize,
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl Kernel {
    #[inline]
    fn row_index(&self, t: usize, s: usize, a: usize) -> usize {
        (t * self.n_states + s) * 2 + a
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Nonzero entries `(s', p)` of row `(t, s, a)`.
    #[inline]
    pub fn row(&self, t: usize, s: usize, a: usize) -> &[(usize, f64)] {
        let i = self.row_index(t, s, a);
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn prob(&self, t: usize, s: usize, a: usize, to: usize) -> f64 {
        self.row(t, s, a)
            .iter()
            .filter(|&&(j, _)| j == to)
            .map(|&(_, p)| p)
            .sum()
    }

    /// Builds from a dense `[t][s][a][s']` array, checking dimensions.
    pub fn from_dense(n_states: usize, dense: &[Vec<Vec<Vec<f64>>>]) -> Result<Self, ModelError> {
        let mut builder = KernelBuilder::new(dense.len(), n_states);
        for (t, by_state) in dense.iter().enumerate() {
            if by_state.len() != n_states {
                return Err(ModelError::Shape(alloc::format!(
                    "kernel[{t}] has {} states, expected {n_states}",
                    by_state.len()
                )));
            }
            for (s, by_action) in by_state.iter().enumerate() {
                if by_action.len() != 2 {
                    return Err(ModelError::Shape(alloc::format!(
                        "kernel[{t}][{s}] has {} actions, expected 2",
                        by_action.len()
                    )));
                }
                for (a, row) in by_action.iter().enumerate() {
                    if row.len() != n_states {
                        return Err(ModelError::Shape(alloc::format!(
                            "kernel[{t}][{s}][{a}] has {} successors, expected {n_states}",
                            row.len()
                        )));
                    }
                    builder.set_row(t, s, a, row.iter().copied().enumerate());
                }
            }
        }
        Ok(builder.build())
    }

    pub fn to_dense(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        let mut out = vec![vec![vec![vec![0.0; self.n_states]; 2]; self.n_states]; self.periods];
        for (t, by_state) in out.iter_mut().enumerate() {
            for (s, by_action) in by_state.iter_mut().enumerate() {
                for (a, row) in by_action.iter_mut().enumerate() {
                    for &(j, p) in self.row(t, s, a) {
                        row[j] += p;
                    }
                }
            }
        }
        out
    }
}

/// Incremental constructor for [`Kernel`]. Unset rows stay empty (and fail
/// validation with a row-sum error).
#[derive(Debug, Clone)]
pub struct KernelBuilder {
    periods: usize,
    n_states: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl KernelBuilder {
    pub fn new(periods: usize, n_states: usize) -> Self {
        KernelBuilder {
            periods,
            n_states,
            rows: vec![Vec::new(); periods * n_states * 2],
        }
    }

    /// Replaces row `(t, s, a)`. Zero entries are dropped and duplicate
    /// targets are merged.
    pub fn set_row<I>(&mut self, t: usize, s: usize, a: usize, entries: I) -> &mut Self
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (j, p) in entries {
            if p == 0.0 {
                continue;
            }
            match row.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += p,
                None => row.push((j, p)),
            }
        }
        row.sort_by_key(|&(j, _)| j);
        self.rows[(t * self.n_states + s) * 2 + a] = row;
        self
    }

    /// Sets `p_t(s, a, ·)` to the point mass on `to`.
    pub fn set_deterministic(&mut self, t: usize, s: usize, a: usize, to: usize) -> &mut Self {
        self.set_row(t, s, a, [(to, 1.0)])
    }

    pub fn build(self) -> Kernel {
        let mut offsets = Vec::with_capacity(self.rows.len() + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for row in self.rows {
            entries.extend(row);
            offsets.push(entries.len());
        }
        Kernel {
            periods: self.periods,
            n_states: self.n_states,
            offsets,
            entries,
        }
    }
}

/// A finite-horizon single-arm MDP with a per-period budget ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    horizon: usize,
    states: Vec<String>,
    initial_state: usize,
    kernel: Kernel,
    /// Flattened `(t, s, a)`.
    rewards: Vec<f64>,
    alpha: Vec<f64>,
    beliefs: Option<Vec<Posterior>>,
}

impl ArmModel {
    /// Assembles a model, checking only that the pieces have consistent
    /// shapes. Value-level invariants are checked by [`validate_model`].
    ///
    /// The kernel must carry `horizon` periods; the entry for the last
    /// period is only consulted by generators that fold a terminal
    /// lookahead into the rewards.
    pub fn from_parts(
        horizon: usize,
        states: Vec<String>,
        initial_state: usize,
        kernel: Kernel,
        rewards: Vec<Vec<[f64; 2]>>,
        alpha: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = states.len();
        if horizon == 0 {
            return Err(ModelError::Shape("horizon must be at least 1".into()));
        }
        if n == 0 {
            return Err(ModelError::Shape("state space is empty".into()));
        }
        if initial_state >= n {
            return Err(ModelError::Shape(alloc::format!(
                "initial state {initial_state} out of range for {n} states"
            )));
        }
        if kernel.periods != horizon || kernel.n_states != n {
            return Err(ModelError::Shape(alloc::format!(
                "kernel is {}x{} (periods x states), expected {horizon}x{n}",
                kernel.periods,
                kernel.n_states
            )));
        }
        if alpha.len() != horizon {
            return Err(ModelError::Shape(alloc::format!(
                "alpha has {} entries, expected {horizon}",
                alpha.len()
            )));
        }
        if rewards.len() != horizon || rewards.iter().any(|r| r.len() != n) {
            return Err(ModelError::Shape(alloc::format!(
                "rewards must be {horizon} periods x {n} states x 2 actions"
            )));
        }
        let rewards = rewards.into_iter().flatten().flatten().collect();
        Ok(ArmModel {
            horizon,
            states,
            initial_state,
            kernel,
            rewards,
            alpha,
            beliefs: None,
        })
    }

    /// Attaches per-state posterior annotations (used by UCB and Thompson
    /// sampling).
    pub fn with_beliefs(mut self, beliefs: Vec<Posterior>) -> Result<Self, ModelError> {
        if beliefs.len() != self.states.len() {
            return Err(ModelError::Shape(alloc::format!(
                "{} belief annotations for {} states",
                beliefs.len(),
                self.states.len()
            )));
        }
        self.beliefs = Some(beliefs);
        Ok(self)
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    #[inline]
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    #[inline]
    pub fn reward(&self, t: usize, s: usize, a: usize) -> f64 {
        self.rewards[(t * self.states.len() + s) * 2 + a]
    }

    /// `(r_t(s,0), r_t(s,1))` for every state, row by row.
    pub fn rewards_dense(&self) -> Vec<Vec<[f64; 2]>> {
        let n = self.states.len();
        (0..self.horizon)
            .map(|t| {
                (0..n)
                    .map(|s| [self.reward(t, s, 0), self.reward(t, s, 1)])
                    .collect()
            })
            .collect()
    }

    #[inline]
    pub fn transitions(&self, t: usize, s: usize, a: usize) -> &[(usize, f64)] {
        self.kernel.row(t, s, a)
    }

    #[inline]
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beliefs(&self) -> Option<&[Posterior]> {
        self.beliefs.as_deref()
    }

    /// `max_{t,s,a} |r_t(s,a)|`.
    pub fn max_abs_reward(&self) -> f64 {
        self.rewards
            .iter()
            .fold(0.0, |m, r| if r.abs() > m { r.abs() } else { m })
    }

    /// States reachable at each period from the initial state under some
    /// action sequence.
    pub fn reachable(&self) -> Vec<Vec<bool>> {
        let n = self.n_states();
        let mut out = vec![vec![false; n]; self.horizon];
        out[0][self.initial_state] = true;
        for t in 1..self.horizon {
            let (prev, next) = out.split_at_mut(t);
            for s in 0..n {
                if !prev[t - 1][s] {
                    continue;
                }
                for a in 0..2 {
                    for &(j, p) in self.kernel.row(t - 1, s, a) {
                        if p > 0.0 {
                            next[0][j] = true;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Checks every [`ArmModel`] invariant, reporting the first violation.
pub fn validate_model(model: &ArmModel) -> Result<(), ModelError> {
    let n = model.n_states();
    for t in 0..model.horizon {
        for s in 0..n {
            for a in 0..2 {
                let row = model.kernel.row(t, s, a);
                let mut sum = 0.0;
                for &(to, p) in row {
                    if to >= n {
                        return Err(ModelError::Shape(alloc::format!(
                            "kernel row (t={t}, s={s}, a={a}) targets state {to}"
                        )));
                    }
                    if !(0.0..=1.0).contains(&p) {
                        return Err(ModelError::ProbabilityRange {
                            t,
                            s,
                            a,
                            to,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                    return Err(ModelError::RowSum { t, s, a, sum });
                }
            }
        }
    }
    for (t, &value) in model.alpha.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(ModelError::AlphaRange { t, value });
        }
    }
    for t in 0..model.horizon {
        for s in 0..n {
            for a in 0..2 {
                if !model.reward(t, s, a).is_finite() {
                    return Err(ModelError::NonFiniteReward { t, s, a });
                }
            }
        }
    }
    Ok(())
}

/// Number of arms pulled in period `t`: `⌊α_t N⌋`.
///
/// The floor carries a 1e-9 guard so that ratios like `1/3` give the exact
/// integer when `α_t N` is integral.
pub fn period_budget(model: &ArmModel, n: u64, t: usize) -> u64 {
    math::floor_count(model.alpha(t) * n as f64).min(n)
}

/// Aggregate state `Z_t`: the number of arms in each state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountState {
    pub t: usize,
    pub n: u64,
    pub z: Vec<u64>,
}

impl CountState {
    /// All `n` arms in the model's initial state at period 0.
    pub fn initial(model: &ArmModel, n: u64) -> Self {
        let mut z = vec![0; model.n_states()];
        z[model.initial_state()] = n;
        CountState { t: 0, n, z }
    }

    pub fn is_consistent(&self) -> bool {
        self.z.iter().sum::<u64>() == self.n
    }
}

/// Allocation `X_t(s, a)` for one period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationPlan {
    pub t: usize,
    pub pulled: Vec<u64>,
    pub idle: Vec<u64>,
    /// Set by budget-relaxed plans, which may pull more or fewer than the
    /// period budget.
    pub relaxed: bool,
}

impl AllocationPlan {
    /// Builds the plan that pulls `pulled[s]` of the `counts.z[s]` arms.
    pub fn from_pulls(counts: &CountState, pulled: Vec<u64>, relaxed: bool) -> Self {
        debug_assert!(pulled.iter().zip(&counts.z).all(|(x, z)| x <= z));
        let idle = counts.z.iter().zip(&pulled).map(|(z, x)| z - x).collect();
        AllocationPlan {
            t: counts.t,
            pulled,
            idle,
            relaxed,
        }
    }

    pub fn total_pulled(&self) -> u64 {
        self.pulled.iter().sum()
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> u64 {
        if a == PULL {
            self.pulled[s]
        } else {
            self.idle[s]
        }
    }

    /// `Σ_{s,a} r_t(s,a) X_t(s,a)`.
    pub fn reward(&self, model: &ArmModel) -> f64 {
        let mut total = 0.0;
        for s in 0..self.pulled.len() {
            if self.pulled[s] > 0 {
                total += model.reward(self.t, s, PULL) * self.pulled[s] as f64;
            }
            if self.idle[s] > 0 {
                total += model.reward(self.t, s, IDLE) * self.idle[s] as f64;
            }
        }
        total
    }
}

/// Centered and `√N`-scaled deviations of counts from a fluid trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionStat {
    pub z_tilde: Vec<f64>,
    /// Flattened `(s, a)`.
    pub x_tilde: Vec<f64>,
}

impl DiffusionStat {
    pub fn z_norm_sq(&self) -> f64 {
        self.z_tilde.iter().map(|v| v * v).sum()
    }

    pub fn x_norm_sq(&self) -> f64 {
        self.x_tilde.iter().map(|v| v * v).sum()
    }
}

/// `Z̃ = (Z − N z_t)/√N` and `X̃ = (X − N x_t)/√N` at period `counts.t`.
pub fn diffusion_stats(
    counts: &CountState,
    plan: &AllocationPlan,
    measure: &OccupationMeasure,
) -> Result<DiffusionStat, ModelError> {
    let n_states = measure.n_states();
    if counts.z.len() != n_states || plan.pulled.len() != n_states || counts.t >= measure.horizon()
    {
        return Err(ModelError::DimensionMismatch(alloc::format!(
            "counts over {} states at t={}, measure over {} states and {} periods",
            counts.z.len(),
            counts.t,
            n_states,
            measure.horizon()
        )));
    }
    if counts.n == 0 {
        return Err(ModelError::DimensionMismatch("N must be at least 1".into()));
    }
    let n = counts.n as f64;
    let root = math::sqrt(n);
    let t = counts.t;
    let z_tilde = (0..n_states)
        .map(|s| (counts.z[s] as f64 - n * measure.z(t, s)) / root)
        .collect();
    let mut x_tilde = Vec::with_capacity(n_states * 2);
    for s in 0..n_states {
        for a in 0..2 {
            x_tilde.push((plan.get(s, a) as f64 - n * measure.x(t, s, a)) / root);
        }
    }
    Ok(DiffusionStat { z_tilde, x_tilde })
}
