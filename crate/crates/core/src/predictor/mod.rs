//! Stage-duration regression: one model per (machine type, stage) group,
//! trained on observed durations and used to fill in time matrices.

mod forest;
mod kfold;
mod lasso;
mod table;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Job, Machine, Millis, TimeMatrix};
use crate::scalar::Scalar;

pub use forest::{Forest, ForestParams, Node, Tree};
pub use kfold::{evaluate_kfold, fold_indices, GroupMetrics, RegressionMetrics};
pub use lasso::{Lasso, LassoParams};
pub use table::{FeatureVector, TrainingRow, TrainingTable, CANONICAL_FEATURES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at row {row}, column `{column}`: {reason}")]
    Parse {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("invalid duration at row {row}: {value} (must be > 0)")]
    InvalidDuration { row: usize, value: String },
    #[error("invariant violation at row {row}: {reason}")]
    Invariant { row: usize, reason: String },
    #[error("insufficient data for group ({machine_type}, {stage}): {rows} rows, need at least 2")]
    InsufficientData {
        machine_type: String,
        stage: String,
        rows: usize,
    },
    #[error("insufficient data for k folds: group ({machine_type}, {stage}) has {rows} rows, k = {k}")]
    InsufficientFolds {
        machine_type: String,
        stage: String,
        rows: usize,
        k: usize,
    },
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error("no model for group ({machine_type}, {stage})")]
    NoModel { machine_type: String, stage: String },
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error("time matrix entry ({job}, {stage}, {machine}): {cause}")]
    Entry {
        job: String,
        stage: usize,
        machine: String,
        cause: Box<PredictError>,
    },
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TreeEnsemble,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparams {
    pub forest: ForestParams,
    pub lasso: LassoParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor<F> {
    TreeEnsemble(Forest<F>),
    Linear(Lasso<F>),
}

impl<F: Scalar> Regressor<F> {
    pub fn fit(kind: ModelKind, x: &[Vec<F>], y: &[F], params: &Hyperparams, seed: u64) -> Self {
        match kind {
            ModelKind::TreeEnsemble => Self::TreeEnsemble(Forest::fit(x, y, &params.forest, seed)),
            ModelKind::Linear => Self::Linear(Lasso::fit(x, y, &params.lasso)),
        }
    }

    /// Raw regression output, clamped to at least 1 ms.
    pub fn predict(&self, x: &[F]) -> F {
        let v = match self {
            Self::TreeEnsemble(f) => f.predict(x),
            Self::Linear(l) => l.predict(x),
        };
        if v.is_finite() {
            v.max(F::one())
        } else {
            F::one()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct GroupModel<F> {
    pub machine_type: String,
    pub stage: String,
    pub rows: usize,
    pub regressor: Regressor<F>,
}

/// Trained predictor. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Model<F> {
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub features: Vec<String>,
    /// Training means, for optional imputation of missing features.
    pub feature_means: Vec<F>,
    /// Sorted by (machine_type, stage).
    pub groups: Vec<GroupModel<F>>,
}

/// Seed of one group's fit, derived from the run seed and the group key.
pub fn group_seed(seed: u64, machine_type: &str, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in machine_type.bytes().chain([0]).chain(stage.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn split_xy<F: Scalar>(rows: &[&TrainingRow<F>]) -> (Vec<Vec<F>>, Vec<F>) {
    (
        rows.iter().map(|r| r.features.clone()).collect(),
        rows.iter().map(|r| r.duration_ms).collect(),
    )
}

/// Fits every (machine_type, stage) group independently, in parallel.
pub fn train<F: Scalar>(
    table: &TrainingTable<F>,
    kind: ModelKind,
    hyperparams: &Hyperparams,
    seed: u64,
) -> Result<Model<F>, PredictError> {
    let keys = table.groups();
    for (mt, st) in &keys {
        let rows = table.group_rows(mt, st).len();
        if rows < 2 {
            return Err(PredictError::InsufficientData {
                machine_type: mt.clone(),
                stage: st.clone(),
                rows,
            });
        }
    }
    let groups = keys
        .par_iter()
        .map(|(mt, st)| {
            let rows = table.group_rows(mt, st);
            let (x, y) = split_xy(&rows);
            GroupModel {
                machine_type: mt.clone(),
                stage: st.clone(),
                rows: rows.len(),
                regressor: Regressor::fit(kind, &x, &y, hyperparams, group_seed(seed, mt, st)),
            }
        })
        .collect();
    let n = F::lit(table.len().max(1) as f64);
    let feature_means = (0..table.features.len())
        .map(|c| table.rows.iter().map(|r| r.features[c]).sum::<F>() / n)
        .collect();
    Ok(Model {
        kind,
        hyperparams: hyperparams.clone(),
        seed,
        features: table.features.clone(),
        feature_means,
        groups,
    })
}

/// What to do when a feature the model was trained on is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Missing {
    #[default]
    Error,
    /// Substitute the training mean.
    ImputeMean,
}

impl<F: Scalar> Model<F> {
    pub fn group(&self, machine_type: &str, stage: &str) -> Option<&GroupModel<F>> {
        self.groups
            .iter()
            .find(|g| g.machine_type == machine_type && g.stage == stage)
    }

    /// Orders `features` by the training feature list.
    pub fn align(&self, features: &FeatureVector<F>, missing: Missing) -> Result<Vec<F>, PredictError> {
        features.validate().map_err(PredictError::FeatureMismatch)?;
        self.features
            .iter()
            .zip(&self.feature_means)
            .map(|(name, &mean)| match (features.get(name), missing) {
                (Some(v), _) => Ok(v),
                (None, Missing::ImputeMean) => Ok(mean),
                (None, Missing::Error) => Err(PredictError::FeatureMismatch(format!(
                    "missing feature `{name}`"
                ))),
            })
            .collect()
    }

    /// Unrounded prediction in ms, at least 1.
    pub fn predict_raw(
        &self,
        features: &FeatureVector<F>,
        machine_type: &str,
        stage: &str,
        missing: Missing,
    ) -> Result<F, PredictError> {
        let g = self.group(machine_type, stage).ok_or_else(|| PredictError::NoModel {
            machine_type: machine_type.into(),
            stage: stage.into(),
        })?;
        let x = self.align(features, missing)?;
        Ok(g.regressor.predict(&x))
    }

    /// Predicted duration rounded to whole milliseconds, at least 1.
    pub fn predict(
        &self,
        features: &FeatureVector<F>,
        machine_type: &str,
        stage: &str,
    ) -> Result<Millis, PredictError> {
        self.predict_with(features, machine_type, stage, Missing::Error)
    }

    pub fn predict_with(
        &self,
        features: &FeatureVector<F>,
        machine_type: &str,
        stage: &str,
        missing: Missing,
    ) -> Result<Millis, PredictError> {
        let v = self.predict_raw(features, machine_type, stage, missing)?;
        Ok(v.round().to_u64().unwrap_or(Millis::MAX).max(1))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, PredictError> {
        serde_json::from_str(text).map_err(|e| PredictError::Format(e.to_string()))
    }
}

/// Label used as the predictor's stage key for stage `q` of `k`.
/// Names apply to the one- and two-stage pipelines; otherwise the index.
pub fn stage_label(q: usize, k: usize) -> String {
    match (k, q) {
        (1, 1) => "full".into(),
        (2, 1) => "align".into(),
        (2, 2) => "call".into(),
        _ => q.to_string(),
    }
}

/// Fills `(job, q, machine)` for every job, each of its stages and every
/// machine, using `labels[q - 1]` as the stage key. Jobs deeper than
/// `labels` are filled only up to `labels.len()`.
pub fn build_time_matrix<F: Scalar>(
    model: &Model<F>,
    jobs: &[Job],
    machines: &[Machine],
    labels: &[String],
    missing: Missing,
) -> Result<TimeMatrix, PredictError> {
    let mut tm = TimeMatrix::new();
    for job in jobs {
        let empty = BTreeMap::new();
        let fv = FeatureVector::<F>::from_f64_map(job.features.as_ref().unwrap_or(&empty));
        for (i, label) in labels.iter().enumerate().take(job.stages) {
            for m in machines {
                let ms = model
                    .predict_with(&fv, &m.machine_type, label, missing)
                    .map_err(|e| PredictError::Entry {
                        job: job.id.clone(),
                        stage: i + 1,
                        machine: m.id.clone(),
                        cause: Box::new(e),
                    })?;
                tm.insert(&job.id, i + 1, &m.id, ms);
            }
        }
    }
    Ok(tm)
}

#[cfg(test)]
mod tests;
