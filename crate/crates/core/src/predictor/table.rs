use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use crate::scalar::Scalar;

use super::PredictError;

/// Feature names in their conventional column order.
pub const CANONICAL_FEATURES: [&str; 12] = [
    "size_mb",
    "avg_read_length",
    "avg_insert_size",
    "spots",
    "bases",
    "unique_reads",
    "pct_duplicates",
    "per_base_quality",
    "per_base_content",
    "per_base_n_content",
    "per_seq_gc_content",
    "overrepresented_reads",
];

const MACHINE_TYPE: &str = "machine_type";
const STAGE: &str = "stage";
const DURATION: &str = "duration_ms";

/// Named numeric features of one job.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector<F> {
    pub values: BTreeMap<String, F>,
}

impl<F: Scalar> FeatureVector<F> {
    pub fn new() -> Self {
        Self {
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: F) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<F> {
        self.values.get(name).copied()
    }

    pub fn from_f64_map(map: &BTreeMap<String, f64>) -> Self {
        Self {
            values: map.iter().map(|(k, &v)| (k.clone(), F::lit(v))).collect(),
        }
    }

    /// Checks finiteness and the ranges of `size_mb` and `pct_duplicates`.
    pub fn validate(&self) -> Result<(), String> {
        for (name, &v) in &self.values {
            check_value(name, v)?;
        }
        Ok(())
    }
}

fn check_value<F: Scalar>(name: &str, v: F) -> Result<(), String> {
    if !v.is_finite() {
        return Err(format!("{name} = {v} is not finite"));
    }
    match name {
        "size_mb" if v <= F::zero() => Err(format!("size_mb = {v} must be > 0")),
        "pct_duplicates" if v < F::zero() || v > F::lit(100.0) => {
            Err(format!("pct_duplicates = {v} not in [0, 100]"))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow<F> {
    /// Aligned with [`TrainingTable::features`].
    pub features: Vec<F>,
    pub machine_type: String,
    /// Stage label as written in the table: an index (`1`, `2`) or a name
    /// (`full`, `align`, `call`).
    pub stage: String,
    pub duration_ms: F,
}

/// Observed stage durations with the features of the job they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTable<F> {
    pub features: Vec<String>,
    pub rows: Vec<TrainingRow<F>>,
}

impl<F: Scalar> TrainingTable<F> {
    pub fn new(features: Vec<String>) -> Self {
        Self {
            features,
            rows: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        features: Vec<F>,
        machine_type: &str,
        stage: &str,
        duration_ms: F,
    ) -> Result<(), PredictError> {
        let row = self.rows.len() + 1;
        if features.len() != self.features.len() {
            return Err(PredictError::Schema(format!(
                "row {row} has {} features, expected {}",
                features.len(),
                self.features.len()
            )));
        }
        if !(duration_ms.is_finite() && duration_ms > F::zero()) {
            return Err(PredictError::InvalidDuration {
                row,
                value: duration_ms.to_string(),
            });
        }
        for (name, &v) in self.features.iter().zip(&features) {
            check_value(name, v).map_err(|reason| PredictError::Invariant { row, reason })?;
        }
        self.rows.push(TrainingRow {
            features,
            machine_type: machine_type.to_string(),
            stage: stage.to_string(),
            duration_ms,
        });
        Ok(())
    }

    /// Distinct (machine_type, stage) keys, sorted.
    pub fn groups(&self) -> Vec<(String, String)> {
        let set: BTreeSet<_> = self
            .rows
            .iter()
            .map(|r| (r.machine_type.clone(), r.stage.clone()))
            .collect();
        set.into_iter().collect()
    }

    pub fn group_rows(&self, machine_type: &str, stage: &str) -> Vec<&TrainingRow<F>> {
        self.rows
            .iter()
            .filter(|r| r.machine_type == machine_type && r.stage == stage)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Parses CSV with a header of feature names plus
    /// `machine_type,stage,duration_ms`, in any column order.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, PredictError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| PredictError::Schema(e.to_string()))?
            .clone();
        let names: Vec<&str> = header.iter().collect();
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(*n) {
                return Err(PredictError::Schema(format!("duplicate column `{n}`")));
            }
        }
        let find = |col: &str| {
            names
                .iter()
                .position(|n| *n == col)
                .ok_or_else(|| PredictError::Schema(format!("missing column `{col}`")))
        };
        let (mt_col, stage_col, dur_col) = (find(MACHINE_TYPE)?, find(STAGE)?, find(DURATION)?);
        let feature_cols: Vec<usize> = (0..names.len())
            .filter(|&i| i != mt_col && i != stage_col && i != dur_col)
            .collect();
        let mut table = Self::new(feature_cols.iter().map(|&i| names[i].to_string()).collect());

        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| PredictError::Parse {
                row,
                column: String::new(),
                reason: e.to_string(),
            })?;
            let cell = |c: usize| rec.get(c).unwrap_or("");
            let number = |c: usize| -> Result<F, PredictError> {
                cell(c)
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(F::lit)
                    .ok_or_else(|| PredictError::Parse {
                        row,
                        column: names[c].to_string(),
                        reason: format!("`{}` is not a finite number", cell(c)),
                    })
            };
            let features = feature_cols
                .iter()
                .map(|&c| number(c))
                .collect::<Result<Vec<F>, _>>()?;
            let duration = number(dur_col)?;
            let machine_type = cell(mt_col);
            let stage = cell(stage_col);
            for (col, v) in [(MACHINE_TYPE, machine_type), (STAGE, stage)] {
                if v.is_empty() {
                    return Err(PredictError::Parse {
                        row,
                        column: col.to_string(),
                        reason: "empty cell".into(),
                    });
                }
            }
            table.push(features, machine_type, &normalize_stage(stage), duration)?;
        }
        Ok(table)
    }

    pub fn from_path(path: &Path) -> Result<Self, PredictError> {
        let file = std::fs::File::open(path).map_err(|e| PredictError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_csv(file)
    }

    /// Feature columns first, then `machine_type,stage,duration_ms`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = self
            .features
            .iter()
            .map(String::as_str)
            .chain([MACHINE_TYPE, STAGE, DURATION])
            .collect();
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
            rec.push(r.machine_type.clone());
            rec.push(r.stage.clone());
            rec.push(r.duration_ms.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Integer stage labels are written without leading zeros.
fn normalize_stage(s: &str) -> String {
    match s.parse::<usize>() {
        Ok(n) => n.to_string(),
        Err(_) => s.to_string(),
    }
}
