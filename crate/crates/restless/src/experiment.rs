//! Model sources, policy names and experiment configuration files.

use std::path::Path;

use restless_core::policy::{FluidPlan, Policy, ThompsonMode};
use restless_core::rng::replication_stream;
use restless_core::zoo;
use restless_core::ArmModel;
use serde::Deserialize;
use thiserror::Error;

use crate::io::{self, IoError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown generator `{0}` (expected bernoulli, crowd, assort, single, two or random)")]
    UnknownGenerator(String),
    #[error("generator parameter `{key}`: {message}")]
    BadParameter { key: String, message: String },
    #[error(
        "unknown policy `{0}` (expected fluid, relaxed, index, rac, ucb[:delta], ts or ts-arm)"
    )]
    UnknownPolicy(String),
    #[error("bad number `{0}`")]
    BadNumber(String),
    #[error("config file {path}: {message}")]
    File { path: String, message: String },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

/// Parses a decimal or a fraction such as `1/3`.
pub fn parse_real(text: &str) -> Result<f64, ConfigError> {
    let bad = || ConfigError::BadNumber(text.to_string());
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            num / den
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// Parses `300,600,1200`.
pub fn parse_list(text: &str) -> Result<Vec<u64>, ConfigError> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| ConfigError::BadNumber(p.to_string()))
        })
        .collect()
}

/// A generator invocation `name[:key=value,...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub name: String,
    pub params: Vec<(String, String)>,
}

impl GeneratorSpec {
    pub fn parse(text: &str) -> Self {
        let (name, rest) = text.split_once(':').unwrap_or((text, ""));
        let params = rest
            .split(',')
            .filter(|p| !p.is_empty())
            .map(|p| match p.split_once('=') {
                Some((k, v)) => (k.trim().to_string(), v.trim().to_string()),
                None => (p.trim().to_string(), String::new()),
            })
            .collect();
        GeneratorSpec {
            name: name.trim().to_string(),
            params,
        }
    }

    fn raw(&self, keys: &[&str]) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| keys.iter().any(|key| k.eq_ignore_ascii_case(key)))
            .map(|(_, v)| v.as_str())
    }

    fn real(&self, keys: &[&'static str], default: Option<f64>) -> Result<f64, ConfigError> {
        match self.raw(keys) {
            Some(v) => parse_real(v).map_err(|_| ConfigError::BadParameter {
                key: keys[0].into(),
                message: format!("`{v}` is not a number"),
            }),
            None => default.ok_or(ConfigError::BadParameter {
                key: keys[0].into(),
                message: "required".into(),
            }),
        }
    }

    fn count(&self, keys: &[&'static str], default: Option<usize>) -> Result<usize, ConfigError> {
        match self.raw(keys) {
            Some(v) => v.parse().map_err(|_| ConfigError::BadParameter {
                key: keys[0].into(),
                message: format!("`{v}` is not a nonnegative integer"),
            }),
            None => default.ok_or(ConfigError::BadParameter {
                key: keys[0].into(),
                message: "required".into(),
            }),
        }
    }

    pub fn build(&self) -> Result<ArmModel, ConfigError> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(ConfigError::BadParameter {
                    key: key.into(),
                    message: "must be at least 1".into(),
                })
            } else {
                Ok(v)
            }
        };
        let ratio = |v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(ConfigError::BadParameter {
                    key: "alpha".into(),
                    message: format!("{v} outside [0,1]"),
                })
            }
        };
        match self.name.as_str() {
            "single" => Ok(zoo::single()),
            "two" => Ok(zoo::two()),
            "bernoulli" => {
                let t = positive("T", self.count(&["T", "horizon"], None)?)?;
                Ok(zoo::bernoulli_bandit(
                    t,
                    ratio(self.real(&["alpha"], Some(1.0 / 3.0))?)?,
                ))
            }
            "crowd" | "crowdsourcing" => {
                let t = positive("T", self.count(&["T", "horizon"], None)?)?;
                Ok(zoo::crowdsourcing(
                    t,
                    ratio(self.real(&["alpha"], Some(0.25))?)?,
                ))
            }
            "assort" | "assortment" => {
                let t = positive("T", self.count(&["T", "horizon"], None)?)?;
                let m_cap = positive("m_cap", self.count(&["m_cap"], Some(zoo::ASSORT_M_CAP))?)?;
                let x_cap = positive("x_cap", self.count(&["x_cap"], Some(zoo::ASSORT_X_CAP))?)?;
                Ok(zoo::assortment(
                    t,
                    ratio(self.real(&["alpha"], Some(0.25))?)?,
                    m_cap,
                    x_cap,
                ))
            }
            "random" => {
                let t = positive("T", self.count(&["T", "horizon"], Some(3))?)?;
                let s = positive("states", self.count(&["states", "S"], Some(3))?)?;
                let seed = self.count(&["seed"], Some(0))? as u64;
                Ok(zoo::random_instance(&mut replication_stream(seed, 0), s, t))
            }
            other => Err(ConfigError::UnknownGenerator(other.to_string())),
        }
    }
}

/// Where a model comes from: an existing JSON file or a generator spec.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    File(String),
    Generator(GeneratorSpec),
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl ModelSource {
    pub fn parse(text: &str) -> Self {
        if Path::new(text).exists() || text.ends_with(".json") {
            ModelSource::File(text.to_string())
        } else {
            ModelSource::Generator(GeneratorSpec::parse(text))
        }
    }

    pub fn load(&self) -> Result<ArmModel, SourceError> {
        match self {
            ModelSource::File(path) => Ok(io::load_model(Path::new(path))?),
            ModelSource::Generator(spec) => Ok(spec.build()?),
        }
    }
}

/// A policy as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyName {
    Fluid,
    Relaxed,
    Index,
    Rac,
    Ucb(f64),
    Ts,
    TsPerArm,
}

/// UCB exploration weight when `ucb` is given without one.
pub const DEFAULT_UCB_DELTA: f64 = 0.5;

impl PolicyName {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let (name, arg) = text.split_once(':').unwrap_or((text, ""));
        let name = name.trim();
        match (name, arg.trim()) {
            ("fluid", "") | ("fluid-priority", "") => Ok(PolicyName::Fluid),
            ("relaxed", "") | ("budget-relaxed", "") => Ok(PolicyName::Relaxed),
            ("index", "") => Ok(PolicyName::Index),
            ("rac", "") => Ok(PolicyName::Rac),
            ("ucb", "") => Ok(PolicyName::Ucb(DEFAULT_UCB_DELTA)),
            ("ucb", d) => Ok(PolicyName::Ucb(parse_real(d)?)),
            ("ts", "") | ("thompson", "") => Ok(PolicyName::Ts),
            ("ts-arm", "") => Ok(PolicyName::TsPerArm),
            _ => Err(ConfigError::UnknownPolicy(text.to_string())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PolicyName::Fluid => "fluid".into(),
            PolicyName::Relaxed => "relaxed".into(),
            PolicyName::Index => "index".into(),
            PolicyName::Rac => "rac".into(),
            PolicyName::Ucb(d) => format!("ucb:{d}"),
            PolicyName::Ts => "ts".into(),
            PolicyName::TsPerArm => "ts-arm".into(),
        }
    }

    pub fn needs_plan(&self) -> bool {
        matches!(
            self,
            PolicyName::Fluid | PolicyName::Relaxed | PolicyName::Index | PolicyName::Rac
        )
    }

    /// Instantiates the policy; `plan` must be the model's fluid plan when
    /// [`needs_plan`](Self::needs_plan) holds.
    pub fn build(
        &self,
        model: &ArmModel,
        plan: Option<&FluidPlan>,
    ) -> Result<Policy, restless_core::PolicyError> {
        let plan = || {
            plan.cloned()
                .ok_or(restless_core::PolicyError::MissingMetadata)
        };
        Ok(match *self {
            PolicyName::Fluid => Policy::FluidPriority(plan()?),
            PolicyName::Relaxed => Policy::BudgetRelaxed(plan()?),
            PolicyName::Index => Policy::Index(plan()?.scores),
            PolicyName::Rac => Policy::Rac(plan()?.measure),
            PolicyName::Ucb(delta) => Policy::ucb(model, delta)?,
            PolicyName::Ts => Policy::thompson(model, ThompsonMode::Aggregated)?,
            PolicyName::TsPerArm => Policy::thompson(model, ThompsonMode::PerArm)?,
        })
    }
}

/// Settings read from `--config` (TOML, or JSON when the file ends in
/// `.json`). Every field is optional; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<String>,
    pub policy: Option<OneOrMany>,
    #[serde(rename = "N")]
    pub n: Option<Vec<u64>>,
    pub reps: Option<u64>,
    pub reps_factor: Option<u64>,
    pub reps_cap: Option<u64>,
    pub seed: Option<u64>,
    pub csv: Option<String>,
    pub json: Option<String>,
    pub out: Option<String>,
    pub jobs: Option<usize>,
    pub per_arm: Option<bool>,
    pub common_random_numbers: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => s
                .split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect(),
            OneOrMany::Many(v) => v,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, SourceError> {
        let text = io::read_text(path)?;
        let file_error = |message: String| ConfigError::File {
            path: path.display().to_string(),
            message,
        };
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| file_error(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| file_error(e.to_string()))?
        };
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_lists() {
        assert!((parse_real("1/3").unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(parse_real("0.25").unwrap(), 0.25);
        assert!(parse_real("x").is_err() && parse_real("1/0").is_err());
        assert_eq!(parse_list("300, 600,1200").unwrap(), vec![300, 600, 1200]);
    }

    #[test]
    fn generators_resolve() {
        let m = ModelSource::parse("bernoulli:T=3,alpha=1/3")
            .load()
            .unwrap();
        assert_eq!(m.n_states(), 6);
        assert_eq!(ModelSource::parse("two").load().unwrap(), zoo::two());
        assert!(matches!(
            ModelSource::parse("bernoulli:alpha=0.5").load(),
            Err(SourceError::Config(ConfigError::BadParameter { .. }))
        ));
        assert!(matches!(
            ModelSource::parse("nope").load(),
            Err(SourceError::Config(ConfigError::UnknownGenerator(_)))
        ));
        assert!(matches!(
            ModelSource::parse("missing.json").load(),
            Err(SourceError::Io(_))
        ));
    }

    #[test]
    fn policy_names() {
        assert_eq!(PolicyName::parse("ucb:0.5").unwrap(), PolicyName::Ucb(0.5));
        assert_eq!(
            PolicyName::parse("ucb").unwrap(),
            PolicyName::Ucb(DEFAULT_UCB_DELTA)
        );
        assert_eq!(PolicyName::parse("ts").unwrap().label(), "ts");
        assert!(PolicyName::parse("greedy").is_err());
    }

    #[test]
    fn config_files_parse() {
        let cfg: ExperimentConfig =
            toml::from_str("model = \"two\"\npolicy = \"fluid,ucb\"\nN = [2, 4]\nseed = 9\n")
                .unwrap();
        assert_eq!(cfg.policy.unwrap().into_vec(), vec!["fluid", "ucb"]);
        assert_eq!(cfg.n, Some(vec![2, 4]));
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
    }
}
