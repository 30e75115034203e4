//! JSON model files.
//!
//! A model document carries `horizon`, `states`, `initial_state`, `alpha`,
//! `rewards[t][s][a]`, optional `beliefs`, and the kernel either dense as
//! `kernel[t][s][a][s']` or sparse as `transitions[t][s][a] = [[s', p], …]`.
//! Readers accept both; the writer emits the dense form for small state
//! spaces and the sparse one otherwise. Floats are written in shortest
//! round-trip form, so a save/load cycle reproduces every value exactly.

use std::fs;
use std::path::Path;

use restless_core::model::KernelBuilder;
use restless_core::{validate_model, ArmModel, Kernel, ModelError, Posterior};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// State spaces larger than this are written with a sparse kernel.
pub const DENSE_STATE_LIMIT: usize = 64;

/// `transitions[t][s][a] = [(s', p), …]`.
pub type SparseTransitions = Vec<Vec<[Vec<(usize, f64)>; 2]>>;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model file is missing both `kernel` and `transitions`")]
    MissingKernel,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BeliefRecord {
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl From<Posterior> for BeliefRecord {
    fn from(p: Posterior) -> Self {
        match p {
            Posterior::Beta { a, b } => BeliefRecord::Beta { a, b },
            Posterior::Gamma { shape, rate } => BeliefRecord::Gamma { shape, rate },
        }
    }
}

impl From<BeliefRecord> for Posterior {
    fn from(b: BeliefRecord) -> Self {
        match b {
            BeliefRecord::Beta { a, b } => Posterior::Beta { a, b },
            BeliefRecord::Gamma { shape, rate } => Posterior::Gamma { shape, rate },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub horizon: usize,
    pub states: Vec<String>,
    pub initial_state: usize,
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<SparseTransitions>,
    pub rewards: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beliefs: Option<Vec<BeliefRecord>>,
}

impl ModelDocument {
    pub fn from_model(model: &ArmModel) -> Self {
        let (horizon, n) = (model.horizon(), model.n_states());
        let (kernel, transitions) = if n <= DENSE_STATE_LIMIT {
            (Some(model.kernel().to_dense()), None)
        } else {
            let sparse = (0..horizon)
                .map(|t| {
                    (0..n)
                        .map(|s| [0, 1].map(|a| model.transitions(t, s, a).to_vec()))
                        .collect()
                })
                .collect();
            (None, Some(sparse))
        };
        ModelDocument {
            horizon,
            states: model.states().to_vec(),
            initial_state: model.initial_state(),
            alpha: model.alphas().to_vec(),
            kernel,
            transitions,
            rewards: model.rewards_dense(),
            beliefs: model
                .beliefs()
                .map(|b| b.iter().map(|&p| p.into()).collect()),
        }
    }

    /// Rebuilds the model and validates it.
    pub fn into_model(self) -> Result<ArmModel, IoError> {
        let n = self.states.len();
        let kernel = match (self.kernel, self.transitions) {
            (Some(dense), _) => Kernel::from_dense(n, &dense)?,
            (None, Some(sparse)) => sparse_kernel(n, &sparse)?,
            (None, None) => return Err(IoError::MissingKernel),
        };
        let mut model = ArmModel::from_parts(
            self.horizon,
            self.states,
            self.initial_state,
            kernel,
            self.rewards,
            self.alpha,
        )?;
        if let Some(beliefs) = self.beliefs {
            model = model.with_beliefs(beliefs.into_iter().map(Posterior::from).collect())?;
        }
        validate_model(&model)?;
        Ok(model)
    }
}

fn sparse_kernel(n: usize, sparse: &SparseTransitions) -> Result<Kernel, ModelError> {
    let mut builder = KernelBuilder::new(sparse.len(), n);
    for (t, by_state) in sparse.iter().enumerate() {
        if by_state.len() != n {
            return Err(ModelError::Shape(format!(
                "transitions[{t}] has {} states, expected {n}",
                by_state.len()
            )));
        }
        for (s, rows) in by_state.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                if let Some(&(j, _)) = row.iter().find(|(j, _)| *j >= n) {
                    return Err(ModelError::Shape(format!(
                        "transitions[{t}][{s}][{a}] targets state {j} of {n}"
                    )));
                }
                builder.set_row(t, s, a, row.iter().copied());
            }
        }
    }
    Ok(builder.build())
}

pub fn model_to_json(model: &ArmModel) -> String {
    serde_json::to_string(&ModelDocument::from_model(model))
        .expect("model documents always serialize")
}

pub fn model_from_json(text: &str) -> Result<ArmModel, IoError> {
    serde_json::from_str::<ModelDocument>(text)?.into_model()
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<ArmModel, IoError> {
    model_from_json(&read_text(path)?)
}

pub fn save_model(model: &ArmModel, path: &Path) -> Result<(), IoError> {
    write_text(path, &model_to_json(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use restless_core::zoo;

    #[test]
    fn round_trips_are_exact() {
        for model in [
            zoo::single(),
            zoo::two(),
            zoo::bernoulli_bandit(6, 1.0 / 3.0),
            zoo::crowdsourcing(4, 0.25),
            zoo::assortment(3, 0.25, 20, 20),
        ] {
            let back = model_from_json(&model_to_json(&model)).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn sparse_and_dense_agree() {
        let model = zoo::bernoulli_bandit(4, 0.5);
        let mut doc = ModelDocument::from_model(&model);
        assert!(doc.kernel.is_some());
        let sparse = ModelDocument::from_model(&zoo::bernoulli_bandit(12, 0.5));
        assert!(sparse.transitions.is_some() && sparse.kernel.is_none());
        doc.transitions = Some(
            (0..4)
                .map(|t| {
                    (0..model.n_states())
                        .map(|s| [0, 1].map(|a| model.transitions(t, s, a).to_vec()))
                        .collect()
                })
                .collect(),
        );
        doc.kernel = None;
        assert_eq!(doc.into_model().unwrap(), model);
    }

    #[test]
    fn invalid_documents_are_rejected() {
        let mut doc = ModelDocument::from_model(&zoo::two());
        doc.kernel.as_mut().unwrap()[0][0][1] = vec![0.9, 0.0];
        assert!(matches!(
            doc.into_model(),
            Err(IoError::Model(ModelError::RowSum { .. }))
        ));
        let mut doc = ModelDocument::from_model(&zoo::two());
        doc.kernel = None;
        assert!(matches!(doc.into_model(), Err(IoError::MissingKernel)));
        assert!(matches!(
            model_from_json("{\"horizon\": 2"),
            Err(IoError::Json(_))
        ));
    }
}
