//! The `restless` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use restless_core::occupancy::{
    classify, fluid_consistency_gap, fluid_propagate, is_nondegenerate, search_nondegenerate,
};
use restless_core::oracle::{self, OracleError, DEFAULT_PAIR_LIMIT};
use restless_core::policy::{FluidPlan, Policy};
use restless_core::priority::{dual_objective, lambda_from_duals, q_recursion, subgradient_solve};
use restless_core::relaxation::{build_reduced_lp, solve_relaxation, DENSE_ROW_LIMIT};
use restless_core::{
    ArmModel, ModelError, OccupationMeasure, PolicyError, RelaxationError, StateScores,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::experiment::{
    parse_list, parse_real, ConfigError, ExperimentConfig, GeneratorSpec, ModelSource, PolicyName,
    SourceError,
};
use crate::format::{printed, sig};
use crate::io::{self, IoError};
use crate::montecarlo::{self, Engine, GapRow, Reps, SimError, SweepConfig, ViolationRow};

/// Default replication rule: `min(50·N, 200 000)`.
pub const DEFAULT_REPS: Reps = Reps::PerArm {
    factor: 50,
    cap: 200_000,
};

#[derive(Debug, Parser)]
#[command(
    name = "restless",
    version,
    about = "Fluid-priority policies for finite-horizon restless bandits"
)]
pub struct Cli {
    /// Worker threads for Monte Carlo replications.
    #[arg(long, global = true, env = "RB_JOBS")]
    pub jobs: Option<usize>,
    /// Experiment settings (TOML, or JSON for `.json` files); flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a model file.
    Gen(GenArgs),
    /// Solve the linear relaxation.
    Relax(OutArgs),
    /// Fluid categories of an optimal occupation measure.
    Classify(ClassifyArgs),
    /// Search the optimal face for a non-degenerate measure.
    SearchMeasure(OutArgs),
    /// Lagrange multipliers and priority scores.
    Priority(PriorityArgs),
    /// Evaluate one policy at one N.
    Eval(EvalArgs),
    /// Optimality-gap sweep over N for one or more policies.
    Sweep(SweepArgs),
    /// Budget-violation frequencies over N.
    Violations(SweepArgs),
    /// Exact N-armed optimum (and policy value) by dynamic programming.
    Oracle(OracleArgs),
    /// Fluid limit of an index policy versus the relaxation.
    FluidIndex(FluidIndexArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// bernoulli, crowd, assort, single, two or random.
    pub kind: String,
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub m_cap: Option<usize>,
    #[arg(long)]
    pub x_cap: Option<usize>,
    /// State count of random instances.
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model JSON file or generator spec such as `bernoulli:T=15,alpha=1/3`.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// A measure written by `relax`; solved afresh when omitted.
    #[arg(long)]
    pub measure: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PriorityArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// `duals` (from the relaxation) or `subgradient`.
    #[arg(long, default_value = "duals")]
    pub method: String,
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed replication count (default `min(50·N, 200000)`).
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub reps_factor: Option<u64>,
    #[arg(long)]
    pub reps_cap: Option<u64>,
    /// Track arms individually instead of simulating counts.
    #[arg(long)]
    pub per_arm: bool,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON sidecar with full diagnostics.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long = "N")]
    pub n: Option<u64>,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Comma-separated policies.
    #[arg(long)]
    pub policy: Option<String>,
    /// Comma-separated, strictly ascending arm counts.
    #[arg(long = "N")]
    pub n: Option<String>,
    /// Share random streams across policies.
    #[arg(long)]
    pub crn: bool,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long = "N")]
    pub n: Option<u64>,
    /// Also evaluate this deterministic policy exactly.
    #[arg(long)]
    pub policy: Option<String>,
    /// Largest (period, count-state) table allowed.
    #[arg(long, default_value_t = DEFAULT_PAIR_LIMIT)]
    pub limit: u128,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FluidIndexArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// `ucb[:delta]` or `index`.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } => CliError::Io(e.to_string()),
            IoError::Json(_) | IoError::MissingKernel => CliError::Format(e.to_string()),
            IoError::Model(m) => CliError::Model(m),
        }
    }
}

impl From<SourceError> for CliError {
    fn from(e: SourceError) -> Self {
        match e {
            SourceError::Config(c) => c.into(),
            SourceError::Io(i) => i.into(),
        }
    }
}

impl CliError {
    /// Process exit status; clap's own usage errors exit with 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Format(_) => 5,
            CliError::Model(_) => 6,
            CliError::Relaxation(_) => 7,
            CliError::Policy(_) => 8,
            CliError::Simulation(_) => 9,
            CliError::Oracle(_) => 10,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Io(_) => "IoError",
            CliError::Format(_) => "FormatError",
            CliError::Model(m) => m.kind(),
            CliError::Relaxation(_) => "RelaxationError",
            CliError::Policy(_) => "PolicyError",
            CliError::Simulation(_) => "SimulationError",
            CliError::Oracle(_) => "OracleError",
        }
    }

    /// One-line JSON error report for stderr.
    pub fn report(&self) -> String {
        json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() })
            .to_string()
    }
}

/// Parses arguments and runs the command on a pool of `--jobs` threads.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let jobs = cli.jobs.or(cfg.jobs).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(command: Command, cfg: &ExperimentConfig) -> Result<(), CliError> {
    match command {
        Command::Gen(a) => gen(a, cfg),
        Command::Relax(a) => relax(a, cfg),
        Command::Classify(a) => classify_cmd(a, cfg),
        Command::SearchMeasure(a) => search(a, cfg),
        Command::Priority(a) => priority(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::Sweep(a) => sweep(a, cfg),
        Command::Violations(a) => violations(a, cfg),
        Command::Oracle(a) => oracle_cmd(a, cfg),
        Command::FluidIndex(a) => fluid_index(a, cfg),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => Ok(io::write_text(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

fn out_path<'a>(flag: &'a Option<PathBuf>, cfg: &'a ExperimentConfig) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from))
}

fn load_model(arg: &ModelArg, cfg: &ExperimentConfig) -> Result<ArmModel, CliError> {
    let text = arg
        .model
        .as_ref()
        .or(cfg.model.as_ref())
        .ok_or(ConfigError::Missing("model"))?;
    Ok(ModelSource::parse(text).load()?)
}

fn model_label(arg: &ModelArg, cfg: &ExperimentConfig) -> String {
    arg.model
        .clone()
        .or_else(|| cfg.model.clone())
        .unwrap_or_default()
}

fn gen(a: GenArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut params = Vec::new();
    if let Some(t) = a.horizon {
        params.push(("T".to_string(), t.to_string()));
    }
    if let Some(alpha) = &a.alpha {
        parse_real(alpha)?;
        params.push(("alpha".to_string(), alpha.clone()));
    }
    for (key, value) in [("m_cap", a.m_cap), ("x_cap", a.x_cap), ("states", a.states)] {
        if let Some(v) = value {
            params.push((key.to_string(), v.to_string()));
        }
    }
    if let Some(seed) = a.seed {
        params.push(("seed".to_string(), seed.to_string()));
    }
    let model = GeneratorSpec {
        name: a.kind,
        params,
    }
    .build()?;
    let mut text = io::model_to_json(&model);
    text.push('\n');
    emit(out_path(&a.out, cfg).as_deref(), &text)
}

/// `x[t][s] = [x_t(s,0), x_t(s,1)]` plus the value and duals.
#[derive(Debug, Serialize, Deserialize)]
pub struct MeasureDocument {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    pub x: Vec<Vec<[f64; 2]>>,
}

impl MeasureDocument {
    pub fn from_measure(m: &OccupationMeasure) -> Self {
        let x = (0..m.horizon())
            .map(|t| {
                (0..m.n_states())
                    .map(|s| [m.x(t, s, 0), m.x(t, s, 1)])
                    .collect()
            })
            .collect();
        MeasureDocument {
            value: m.value(),
            lambda: m.duals().map(<[f64]>::to_vec),
            x,
        }
    }

    pub fn into_measure(self, model: &ArmModel) -> Result<OccupationMeasure, CliError> {
        let flat = self.x.into_iter().flatten().flatten().collect();
        Ok(OccupationMeasure::from_flat(model, flat, self.lambda)?)
    }
}

fn solver_name(model: &ArmModel) -> Result<&'static str, CliError> {
    let rows = build_reduced_lp(model)?.lp.constraints.len();
    Ok(if rows > DENSE_ROW_LIMIT {
        "column-generation"
    } else {
        "simplex"
    })
}

fn relax(a: OutArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = load_model(&a.model, cfg)?;
    let m = solve_relaxation(&model)?;
    let doc = json!({
        "horizon": model.horizon(),
        "n_states": model.n_states(),
        "solver": solver_name(&model)?,
        "max_violation": m.max_violation(&model),
        "value": m.value(),
        "lambda": m.duals(),
        "x": MeasureDocument::from_measure(&m).x,
    });
    emit(out_path(&a.out, cfg).as_deref(), &to_json(&doc))
}

fn names(model: &ArmModel, states: &[usize]) -> Vec<String> {
    states.iter().map(|&s| model.states()[s].clone()).collect()
}

fn classify_cmd(a: ClassifyArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = load_model(&a.model, cfg)?;
    let measure = match &a.measure {
        Some(path) => {
            let doc: MeasureDocument = serde_json::from_str(&io::read_text(path)?)
                .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
            doc.into_measure(&model)?
        }
        None => solve_relaxation(&model)?,
    };
    let p = classify(&measure, a.tol);
    let report = is_nondegenerate(&p);
    let periods: Vec<_> = (0..model.horizon())
        .map(|t| {
            let occupied: Vec<usize> = p.inactive[t]
                .iter()
                .copied()
                .filter(|&s| measure.z(t, s) > a.tol)
                .collect();
            json!({
                "t": t,
                "active": names(&model, &p.active[t]),
                "neutral": names(&model, &p.neutral[t]),
                "inactive_occupied": names(&model, &occupied),
            })
        })
        .collect();
    let doc = json!({
        "tol": a.tol,
        "value": measure.value(),
        "nondegenerate": report.nondegenerate,
        "neutral_counts": report.neutral_counts,
        "periods": periods,
    });
    emit(a.out.as_deref(), &to_json(&doc))
}

fn search(a: OutArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = load_model(&a.model, cfg)?;
    let r = search_nondegenerate(&model)?;
    let doc = json!({
        "nondegenerate": r.nondegenerate,
        "stages": r.stages,
        "certificate": r.certificate,
        "neutral_counts": r.neutral_counts,
        "witness": r.witness.as_ref().map(MeasureDocument::from_measure),
    });
    emit(out_path(&a.out, cfg).as_deref(), &to_json(&doc))
}

fn score_table(scores: &StateScores) -> Vec<Vec<f64>> {
    (0..scores.horizon())
        .map(|t| (0..scores.n_states()).map(|s| scores.get(t, s)).collect())
        .collect()
}

fn priority(a: PriorityArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = load_model(&a.model, cfg)?;
    let (lambda, relaxation) = match a.method.as_str() {
        "duals" => {
            let m = solve_relaxation(&model)?;
            (
                lambda_from_duals(&m).map_err(|e| ConfigError::Invalid(e.to_string()))?,
                Some(m.value()),
            )
        }
        "subgradient" => (subgradient_solve(&model, a.iterations, a.step).lambda, None),
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown method `{other}` (duals or subgradient)"
            ))
            .into())
        }
    };
    let scheme = q_recursion(&model, &lambda);
    let doc = json!({
        "method": a.method,
        "lambda": lambda,
        "dual_objective": dual_objective(&model, &lambda),
        "relaxation_value": relaxation,
        "scores": score_table(&scheme.scores),
    });
    emit(out_path(&a.out, cfg).as_deref(), &to_json(&doc))
}

struct SimSettings {
    seed: u64,
    reps: Reps,
    engine: Engine,
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
}

fn sim_settings(a: &SimArgs, cfg: &ExperimentConfig) -> Result<SimSettings, CliError> {
    let seed = a.seed.or(cfg.seed).ok_or(ConfigError::Missing("seed"))?;
    let reps = match (a.reps, a.reps_factor, a.reps_cap) {
        (Some(r), _, _) => Reps::Fixed(r),
        (None, None, None) => match (cfg.reps, cfg.reps_factor, cfg.reps_cap) {
            (Some(r), _, _) => Reps::Fixed(r),
            (None, None, None) => DEFAULT_REPS,
            (None, f, c) => per_arm_reps(f, c),
        },
        (None, f, c) => per_arm_reps(f.or(cfg.reps_factor), c.or(cfg.reps_cap)),
    };
    if reps.at(1) == 0 {
        return Err(ConfigError::Invalid("replication count must be at least 1".into()).into());
    }
    let per_arm = a.per_arm || cfg.per_arm.unwrap_or(false);
    Ok(SimSettings {
        seed,
        reps,
        engine: if per_arm {
            Engine::PerArm
        } else {
            Engine::Counts
        },
        csv: a
            .csv
            .clone()
            .or_else(|| cfg.csv.as_ref().map(PathBuf::from)),
        json: a
            .json
            .clone()
            .or_else(|| cfg.json.as_ref().map(PathBuf::from)),
    })
}

fn per_arm_reps(factor: Option<u64>, cap: Option<u64>) -> Reps {
    let Reps::PerArm {
        factor: f0,
        cap: c0,
    } = DEFAULT_REPS
    else {
        unreachable!()
    };
    Reps::PerArm {
        factor: factor.unwrap_or(f0),
        cap: cap.unwrap_or(c0),
    }
}

fn policy_names(
    flag: &Option<String>,
    cfg: &ExperimentConfig,
) -> Result<Vec<PolicyName>, CliError> {
    let list: Vec<String> = match flag {
        Some(text) => text
            .split(',')
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect(),
        None => cfg
            .policy
            .clone()
            .map(|p| p.into_vec())
            .ok_or(ConfigError::Missing("policy"))?,
    };
    if list.is_empty() {
        return Err(ConfigError::Missing("policy").into());
    }
    Ok(list
        .iter()
        .map(|p| PolicyName::parse(p))
        .collect::<Result<_, _>>()?)
}

/// Policies with the shared fluid plan (built once, only when needed).
fn build_policies(
    model: &ArmModel,
    names: &[PolicyName],
) -> Result<Vec<(String, Policy)>, CliError> {
    let plan = if names.iter().any(PolicyName::needs_plan) {
        Some(FluidPlan::for_model(model)?)
    } else {
        None
    };
    names
        .iter()
        .map(|n| Ok((n.label(), n.build(model, plan.as_ref())?)))
        .collect()
}

const CSV_HEADER: &str = "N,policy,upper_bound,mean,ci95,gap,violation_rate_max\n";

fn csv_row(row: &GapRow) -> String {
    let (ub, mean) = (printed(row.upper_bound), printed(row.mean));
    format!(
        "{},{},{},{},{},{},{}\n",
        row.n,
        row.policy,
        sig(ub),
        sig(mean),
        sig(row.ci95),
        sig(ub - mean),
        sig(row.violation_rate_max)
    )
}

fn write_gap_outputs(rows: &[GapRow], model: &str, s: &SimSettings) -> Result<(), CliError> {
    let mut csv = String::from(CSV_HEADER);
    rows.iter().for_each(|r| csv.push_str(&csv_row(r)));
    emit(s.csv.as_deref(), &csv)?;
    if let Some(path) = &s.json {
        io::write_text(
            path,
            &to_json(&json!({ "model": model, "seed": s.seed, "rows": rows })),
        )?;
    }
    Ok(())
}

fn eval(a: EvalArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = load_model(&a.model, cfg)?;
    let s = sim_settings(&a.sim, cfg)?;
    let names = policy_names(&a.policy, cfg)?;
    if names.len() != 1 {
        return Err(ConfigError::Invalid(
            "eval takes exactly one policy; use sweep for several".into(),
        )
        .into());
    }
    let n = match (a.n, &cfg.n) {
        (Some(n), _) => n,
        (None, Some(list)) if list.len() == 1 => list[0],
        _ => return Err(ConfigError::Missing("N").into()),
    };
    let value = solve_relaxation(&model)?.value();
    let (label, policy) = build_policies(&model, &names)?.remove(0);
    let sweep = SweepConfig {
        n_list: vec![n],
        reps: s.reps,
        seed: s.seed,
        engine: s.engine,
        common_random_numbers: true,
    };
    let rows = montecarlo::gap_sweep(&model, &policy, &label, value, &sweep)?;
    write_gap_outputs(&rows, &model_label(&a.model, cfg), &s)
}

fn sweep_config(
    a: &SweepArgs,
    cfg: &ExperimentConfig,
    s: &SimSettings,
) -> Result<SweepConfig, CliError> {
    let n_list = match &a.n {
        Some(text) => parse_list(text)?,
        None => cfg.n.clone().ok_or(ConfigError::Missing("N"))?,
    };
    Ok(SweepConfig {
        n_list,
        reps: s.reps,
        seed: s.seed,
        engine: s.engine,
        common_random_numbers: a.crn || cfg.common_random_numbers.unwrap_or(false),
    })
}

fn sweep(a: SweepArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = load_model(&a.model, cfg)?;
    let s = sim_settings(&a.sim, cfg)?;
    let sweep = sweep_config(&a, cfg, &s)?;
    let value = solve_relaxation(&model)?.value();
    let mut rows = Vec::new();
    for (label, policy) in build_policies(&model, &policy_names(&a.policy, cfg)?)? {
        rows.extend(montecarlo::gap_sweep(
            &model, &policy, &label, value, &sweep,
        )?);
    }
    write_gap_outputs(&rows, &model_label(&a.model, cfg), &s)
}

fn violations(a: SweepArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = load_model(&a.model, cfg)?;
    let s = sim_settings(&a.sim, cfg)?;
    let sweep = sweep_config(&a, cfg, &s)?;
    let names = policy_names(&a.policy, cfg)?;
    if let Some(bad) = names
        .iter()
        .find(|n| !matches!(n, PolicyName::Fluid | PolicyName::Relaxed))
    {
        return Err(ConfigError::Invalid(format!(
            "violations needs fluid or relaxed, not {}",
            bad.label()
        ))
        .into());
    }
    let mut csv = String::from("N,policy,reps,t,violation_rate\n");
    let mut all: Vec<(String, Vec<ViolationRow>)> = Vec::new();
    for (label, policy) in build_policies(&model, &names)? {
        let rows = montecarlo::violation_rate_sweep(&model, &policy, &label, &sweep)?;
        for r in &rows {
            for (t, rate) in r.per_t.iter().enumerate() {
                csv.push_str(&format!("{},{label},{},{t},{}\n", r.n, r.reps, sig(*rate)));
            }
            csv.push_str(&format!("{},{label},{},any,{}\n", r.n, r.reps, sig(r.any)));
        }
        all.push((label, rows));
    }
    emit(s.csv.as_deref(), &csv)?;
    if let Some(path) = &s.json {
        let doc: Vec<_> = all
            .iter()
            .map(|(p, rows)| json!({ "policy": p, "rows": rows }))
            .collect();
        io::write_text(
            path,
            &to_json(
                &json!({ "model": model_label(&a.model, cfg), "seed": s.seed, "policies": doc }),
            ),
        )?;
    }
    Ok(())
}

fn oracle_cmd(a: OracleArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = load_model(&a.model, cfg)?;
    let n = match (a.n, &cfg.n) {
        (Some(n), _) => n,
        (None, Some(list)) if list.len() == 1 => list[0],
        _ => return Err(ConfigError::Missing("N").into()),
    };
    let v_star = oracle::optimal_value_with_limit(&model, n, a.limit)?;
    let relaxation = solve_relaxation(&model)?.value();
    let mut doc = json!({ "N": n, "V_star": v_star, "upper_bound": n as f64 * relaxation });
    if let Some(text) = a.policy.as_ref().or(None) {
        let names = [PolicyName::parse(text)?];
        let (label, policy) = build_policies(&model, &names)?.remove(0);
        doc["policy"] = json!(label);
        doc["policy_value"] = json!(oracle::exact_policy_value_with_limit(
            &model, &policy, n, a.limit
        )?);
    }
    emit(out_path(&a.out, cfg).as_deref(), &to_json(&doc))
}

fn fluid_index(a: FluidIndexArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = load_model(&a.model, cfg)?;
    let names = policy_names(&a.policy, cfg)?;
    let (label, policy) = build_policies(&model, &names[..1])?.remove(0);
    let scores = match policy {
        Policy::Index(scores) | Policy::Ucb { scores, .. } => scores,
        _ => {
            return Err(ConfigError::Invalid(format!(
                "{label} is not an index policy (use ucb[:delta] or index)"
            ))
            .into())
        }
    };
    let optimum = solve_relaxation(&model)?;
    let limit = fluid_propagate(&model, &scores);
    let doc = json!({
        "policy": label,
        "fluid_value": limit.value(),
        "relaxation_value": optimum.value(),
        "shortfall": optimum.value() - limit.value(),
        "l1_distance": fluid_consistency_gap(&limit, &optimum).map_err(CliError::Relaxation)?,
    });
    emit(out_path(&a.out, cfg).as_deref(), &to_json(&doc))
}
