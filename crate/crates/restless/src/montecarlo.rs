//! Parallel Monte Carlo evaluation of allocation rules.
//!
//! Replication `k` draws from `replication_stream(seed, k)`. Replications
//! are grouped into fixed-size chunks that run in parallel; each chunk
//! accumulates sequentially and chunks are merged in index order, so a
//! report does not depend on the number of worker threads.

use std::time::Instant;

use rayon::prelude::*;
use restless_core::policy::{AllocationRule, FluidPlan, PolicyError};
use restless_core::rng::replication_stream;
use restless_core::sim::{replicate_counts, replicate_per_arm, Replication};
use restless_core::ArmModel;
use serde::Serialize;
use thiserror::Error;

/// Replications per parallel work item.
const CHUNK: u64 = 256;
/// Below this many replications the normal-approximation CI is flagged.
pub const MIN_RELIABLE_REPS: u64 = 1000;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.96;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Which simulator runs the replications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Multinomial dynamics on state counts.
    Counts,
    /// Every arm tracked individually.
    PerArm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub engine: Engine,
    pub n: u64,
    pub reps: u64,
    pub seed: u64,
    pub mean_reward: f64,
    pub sd_reward: f64,
    /// 95% normal-approximation half-width.
    pub ci_halfwidth: f64,
    /// `false` when `reps` is too small for the normal approximation.
    pub ci_reliable: bool,
    /// Per period: fraction of replications with a budget violation
    /// against the reference plan (zeros without one).
    pub per_t_violation_rate: Vec<f64>,
    /// Fraction of replications violating the budget at some period.
    pub any_violation_rate: f64,
    /// Per period: mean of `‖Z̃_t‖²`.
    pub z_second_moment: Vec<f64>,
    /// Per period: mean of `‖X̃_t‖²`.
    pub x_second_moment: Vec<f64>,
    pub wall_time: f64,
}

impl SimulationReport {
    /// Standard error of the mean reward.
    pub fn std_error(&self) -> f64 {
        self.sd_reward / (self.reps as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
    violations: Vec<u64>,
    any_violation: u64,
    z_sum: Vec<f64>,
    x_sum: Vec<f64>,
}

impl Accumulator {
    fn new(horizon: usize) -> Self {
        Accumulator {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            violations: vec![0; horizon],
            any_violation: 0,
            z_sum: vec![0.0; horizon],
            x_sum: vec![0.0; horizon],
        }
    }

    fn push(&mut self, r: &Replication) {
        self.count += 1;
        let delta = r.reward - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (r.reward - self.mean);
        for (c, &v) in self.violations.iter_mut().zip(&r.violated) {
            *c += v as u64;
        }
        self.any_violation += r.violated.iter().any(|&v| v) as u64;
        for (acc, v) in self.z_sum.iter_mut().zip(&r.z_dev_sq) {
            *acc += v;
        }
        for (acc, v) in self.x_sum.iter_mut().zip(&r.x_dev_sq) {
            *acc += v;
        }
    }

    /// Chan et al. pairwise merge.
    fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 +=
            other.m2 + delta * delta * (self.count as f64) * (other.count as f64) / total as f64;
        self.count = total;
        for (a, b) in self.violations.iter_mut().zip(&other.violations) {
            *a += b;
        }
        self.any_violation += other.any_violation;
        for (a, b) in self.z_sum.iter_mut().zip(&other.z_sum) {
            *a += b;
        }
        for (a, b) in self.x_sum.iter_mut().zip(&other.x_sum) {
            *a += b;
        }
    }
}

/// Simulates `reps` replications of `n` arms on counts, with the rule's
/// own fluid plan (if any) as the diagnostic reference.
pub fn simulate(
    model: &ArmModel,
    rule: &(dyn AllocationRule + Sync),
    n: u64,
    reps: u64,
    seed: u64,
) -> Result<SimulationReport, SimError> {
    run(
        model,
        rule,
        n,
        reps,
        seed,
        Engine::Counts,
        rule.fluid_plan(),
    )
}

/// Same contract as [`simulate`], tracking every arm individually.
pub fn simulate_per_arm(
    model: &ArmModel,
    rule: &(dyn AllocationRule + Sync),
    n: u64,
    reps: u64,
    seed: u64,
) -> Result<SimulationReport, SimError> {
    run(
        model,
        rule,
        n,
        reps,
        seed,
        Engine::PerArm,
        rule.fluid_plan(),
    )
}

/// General entry point: any engine, any reference plan for the violation
/// and diffusion diagnostics.
pub fn run(
    model: &ArmModel,
    rule: &(dyn AllocationRule + Sync),
    n: u64,
    reps: u64,
    seed: u64,
    engine: Engine,
    reference: Option<&FluidPlan>,
) -> Result<SimulationReport, SimError> {
    if n == 0 || reps == 0 {
        return Err(SimError::InvalidArgument(format!(
            "need N ≥ 1 and reps ≥ 1 (got N={n}, reps={reps})"
        )));
    }
    let start = Instant::now();
    let horizon = model.horizon();
    let chunks = reps.div_ceil(CHUNK);
    let partials: Vec<Result<Accumulator, PolicyError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(horizon);
            for k in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                let mut rng = replication_stream(seed, k);
                let rep = match engine {
                    Engine::Counts => replicate_counts(model, rule, n, reference, &mut rng)?,
                    Engine::PerArm => replicate_per_arm(model, rule, n, reference, &mut rng)?,
                };
                acc.push(&rep);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accumulator::new(horizon);
    for part in partials {
        total.merge(&part?);
    }

    let count = total.count as f64;
    let sd = if total.count > 1 {
        (total.m2 / (count - 1.0)).max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(SimulationReport {
        engine,
        n,
        reps,
        seed,
        mean_reward: total.mean,
        sd_reward: sd,
        ci_halfwidth: Z95 * sd / count.sqrt(),
        ci_reliable: reps >= MIN_RELIABLE_REPS,
        per_t_violation_rate: total.violations.iter().map(|&v| v as f64 / count).collect(),
        any_violation_rate: total.any_violation as f64 / count,
        z_second_moment: total.z_sum.iter().map(|v| v / count).collect(),
        x_second_moment: total.x_sum.iter().map(|v| v / count).collect(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// How many replications to run at a given `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reps {
    Fixed(u64),
    /// `min(factor · N, cap)`.
    PerArm {
        factor: u64,
        cap: u64,
    },
}

impl Reps {
    pub fn at(&self, n: u64) -> u64 {
        match *self {
            Reps::Fixed(r) => r,
            Reps::PerArm { factor, cap } => factor.saturating_mul(n).min(cap).max(1),
        }
    }
}

/// Shared settings of the sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Strictly ascending arm counts.
    pub n_list: Vec<u64>,
    pub reps: Reps,
    pub seed: u64,
    pub engine: Engine,
    /// Reuse the same random streams for every policy at a given `N`
    /// (variance reduction for policy comparisons).
    pub common_random_numbers: bool,
}

impl SweepConfig {
    pub fn new(n_list: Vec<u64>, reps: Reps, seed: u64) -> Self {
        SweepConfig {
            n_list,
            reps,
            seed,
            engine: Engine::Counts,
            common_random_numbers: false,
        }
    }

    fn check(&self) -> Result<(), SimError> {
        if self.n_list.is_empty() {
            return Err(SimError::InvalidArgument("N list is empty".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) || self.n_list[0] == 0 {
            return Err(SimError::InvalidArgument(format!(
                "N list must be positive and strictly ascending: {:?}",
                self.n_list
            )));
        }
        Ok(())
    }

    /// Seed for one `(N, policy)` cell.
    pub fn cell_seed(&self, n: u64, policy: &str) -> u64 {
        let tag = if self.common_random_numbers {
            0
        } else {
            fnv1a(policy.as_bytes())
        };
        splitmix64(self.seed ^ splitmix64(n ^ splitmix64(tag)))
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// One row of a gap sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub n: u64,
    pub policy: String,
    /// `N · V̂*`.
    pub upper_bound: f64,
    pub mean: f64,
    pub ci95: f64,
    /// `upper_bound − mean`, an upper bound on the optimality gap.
    pub gap: f64,
    /// `upper_bound − (mean ± ci95)`.
    pub gap_low: f64,
    pub gap_high: f64,
    pub violation_rate_max: f64,
    pub report: SimulationReport,
}

/// Simulates `rule` at every `N` and compares with `N · relaxation_value`.
pub fn gap_sweep(
    model: &ArmModel,
    rule: &(dyn AllocationRule + Sync),
    label: &str,
    relaxation_value: f64,
    cfg: &SweepConfig,
) -> Result<Vec<GapRow>, SimError> {
    cfg.check()?;
    cfg.n_list
        .iter()
        .map(|&n| {
            let seed = cfg.cell_seed(n, label);
            let report = run(
                model,
                rule,
                n,
                cfg.reps.at(n),
                seed,
                cfg.engine,
                rule.fluid_plan(),
            )?;
            let upper_bound = n as f64 * relaxation_value;
            let mean = report.mean_reward;
            let ci95 = report.ci_halfwidth;
            Ok(GapRow {
                n,
                policy: label.to_string(),
                upper_bound,
                mean,
                ci95,
                gap: upper_bound - mean,
                gap_low: upper_bound - (mean + ci95),
                gap_high: upper_bound - (mean - ci95),
                violation_rate_max: report
                    .per_t_violation_rate
                    .iter()
                    .copied()
                    .fold(0.0, f64::max),
                report,
            })
        })
        .collect()
}

/// Budget-violation frequencies of one `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationRow {
    pub n: u64,
    pub reps: u64,
    pub per_t: Vec<f64>,
    pub any: f64,
}

/// Empirical `P(Δ_t^c)` per period and `N` against `plan`. Only the
/// fluid-priority and budget-relaxed rules are meaningful here; the plan
/// they carry is used as the reference.
pub fn violation_rate_sweep(
    model: &ArmModel,
    rule: &(dyn AllocationRule + Sync),
    label: &str,
    cfg: &SweepConfig,
) -> Result<Vec<ViolationRow>, SimError> {
    cfg.check()?;
    let Some(plan) = rule.fluid_plan() else {
        return Err(SimError::InvalidArgument(format!(
            "policy {label} has no fluid plan to check budgets against"
        )));
    };
    cfg.n_list
        .iter()
        .map(|&n| {
            let reps = cfg.reps.at(n);
            let r = run(
                model,
                rule,
                n,
                reps,
                cfg.cell_seed(n, label),
                cfg.engine,
                Some(plan),
            )?;
            Ok(ViolationRow {
                n,
                reps,
                per_t: r.per_t_violation_rate,
                any: r.any_violation_rate,
            })
        })
        .collect()
}
