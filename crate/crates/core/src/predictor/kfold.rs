use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{group_seed, split_xy, Hyperparams, ModelKind, PredictError, Regressor, TrainingTable};

/// Scores in seconds: `mse` in s^2, `mae` in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub r2: f64,
    pub mse: f64,
    pub mae: f64,
}

impl RegressionMetrics {
    /// `actual` and `predicted` in seconds. R^2 is 1 for a perfect fit of
    /// constant data and 0 for an imperfect one.
    pub fn score(actual: &[f64], predicted: &[f64]) -> Self {
        assert_eq!(actual.len(), predicted.len());
        let n = actual.len() as f64;
        let mean = actual.iter().sum::<f64>() / n;
        let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
        let ss_res: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
        let mae = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum::<f64>() / n;
        let r2 = if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            0.0
        };
        Self {
            r2,
            mse: ss_res / n,
            mae,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub machine_type: String,
    pub stage: String,
    pub rows: usize,
    pub folds: usize,
    /// Means over folds.
    pub metrics: RegressionMetrics,
}

/// Shuffles `0..n` with `seed` and deals it into `k` contiguous folds whose
/// sizes differ by at most one.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = n / k + usize::from(f < n % k);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

/// k-fold cross-validation per (machine_type, stage) group.
pub fn evaluate_kfold<F: Scalar>(
    table: &TrainingTable<F>,
    kind: ModelKind,
    hyperparams: &Hyperparams,
    k: usize,
    seed: u64,
) -> Result<Vec<GroupMetrics>, PredictError> {
    if k < 2 {
        return Err(PredictError::BadFoldCount(k));
    }
    let keys = table.groups();
    for (mt, st) in &keys {
        let rows = table.group_rows(mt, st).len();
        if rows < k {
            return Err(PredictError::InsufficientFolds {
                machine_type: mt.clone(),
                stage: st.clone(),
                rows,
                k,
            });
        }
    }
    let mut out = Vec::with_capacity(keys.len());
    for (mt, st) in keys {
        let rows = table.group_rows(&mt, &st);
        let gseed = group_seed(seed, &mt, &st);
        let folds = fold_indices(rows.len(), k, gseed);
        let mut sum = RegressionMetrics {
            r2: 0.0,
            mse: 0.0,
            mae: 0.0,
        };
        for (f, test) in folds.iter().enumerate() {
            let train: Vec<_> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, ix)| ix.iter().map(|&i| rows[i]))
                .collect();
            let (x, y) = split_xy(&train);
            let reg = Regressor::fit(kind, &x, &y, hyperparams, gseed.wrapping_add(f as u64 + 1));
            let actual: Vec<f64> = test.iter().map(|&i| rows[i].duration_ms.as_f64() / 1000.0).collect();
            let predicted: Vec<f64> = test
                .iter()
                .map(|&i| reg.predict(&rows[i].features).as_f64() / 1000.0)
                .collect();
            let m = RegressionMetrics::score(&actual, &predicted);
            sum.r2 += m.r2;
            sum.mse += m.mse;
            sum.mae += m.mae;
        }
        let kf = k as f64;
        out.push(GroupMetrics {
            machine_type: mt,
            stage: st,
            rows: rows.len(),
            folds: k,
            metrics: RegressionMetrics {
                r2: sum.r2 / kf,
                mse: sum.mse / kf,
                mae: sum.mae / kf,
            },
        });
    }
    Ok(out)
}
