use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Millis, OpRef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub op: OpRef,
    pub machine: String,
    pub start: Millis,
    pub end: Millis,
}

impl OpRecord {
    pub fn duration(&self) -> Millis {
        self.end - self.start
    }
}

/// Realized timing of a run. Times are relative to the common BEGIN.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExecutionTrace {
    pub records: Vec<OpRecord>,
    /// Every participating machine, including idle ones.
    pub machines: Vec<String>,
    pub makespan: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineUsage {
    pub machine: String,
    pub busy_ms: Millis,
    pub utilization: f64,
}

/// Machine-readable run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub makespan_ms: Millis,
    pub operations: usize,
    pub machines: Vec<MachineUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_makespan_ms: Option<Millis>,
    /// Relative error of the prediction, in percent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_error_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("relative error is undefined for actual makespan {0}")]
pub struct DomainError(pub Millis);

/// `100 * |predicted - actual| / actual`.
pub fn relative_error(predicted: Millis, actual: Millis) -> Result<f64, DomainError> {
    if actual == 0 {
        return Err(DomainError(actual));
    }
    Ok(100.0 * predicted.abs_diff(actual) as f64 / actual as f64)
}

/// Relative error truncated (not rounded) to hundredths of a percent,
/// computed in integers. Returns the value in units of 0.01%.
pub fn relative_error_hundredths(predicted: Millis, actual: Millis) -> Result<u64, DomainError> {
    if actual == 0 {
        return Err(DomainError(actual));
    }
    let num = u128::from(predicted.abs_diff(actual)) * 10_000;
    Ok((num / u128::from(actual)) as u64)
}

/// Formats a value in hundredths as `X.YY`.
pub fn format_hundredths(h: u64) -> String {
    format!("{}.{:02}", h / 100, h % 100)
}

impl ExecutionTrace {
    pub fn from_records(mut records: Vec<OpRecord>, machines: Vec<String>) -> Self {
        records.sort_by(|a, b| {
            (a.start, &a.machine, &a.op).cmp(&(b.start, &b.machine, &b.op))
        });
        let makespan = records.iter().map(|r| r.end).max().unwrap_or(0);
        Self {
            records,
            machines,
            makespan,
        }
    }

    /// Busy intervals of one machine, ordered by start.
    pub fn busy_intervals(&self, machine: &str) -> Vec<(Millis, Millis)> {
        let mut v: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.machine == machine)
            .map(|r| (r.start, r.end))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn record(&self, op: &OpRef) -> Option<&OpRecord> {
        self.records.iter().find(|r| &r.op == op)
    }

    /// Busy time over makespan, per machine; zero when the makespan is zero.
    pub fn usage(&self) -> Vec<MachineUsage> {
        self.machines
            .iter()
            .map(|m| {
                let busy_ms: Millis = self.busy_intervals(m).iter().map(|(s, e)| e - s).sum();
                let utilization = if self.makespan == 0 {
                    0.0
                } else {
                    busy_ms as f64 / self.makespan as f64
                };
                MachineUsage {
                    machine: m.clone(),
                    busy_ms,
                    utilization,
                }
            })
            .collect()
    }

    /// Count of (precedence, machine-overlap) violations in the trace.
    pub fn violations(&self) -> (usize, usize) {
        let mut by_op: BTreeMap<&OpRef, &OpRecord> = BTreeMap::new();
        for r in &self.records {
            by_op.insert(&r.op, r);
        }
        let precedence = self
            .records
            .iter()
            .filter(|r| r.op.stage > 1)
            .filter(|r| {
                by_op
                    .get(&OpRef::new(r.op.job.clone(), r.op.stage - 1))
                    .is_some_and(|prev| r.start < prev.end)
            })
            .count();
        let overlap = self
            .machines
            .iter()
            .map(|m| {
                let mut busy_until = 0;
                let mut n = 0;
                for (i, (s, e)) in self.busy_intervals(m).into_iter().enumerate() {
                    if i > 0 && s < busy_until {
                        n += 1;
                    }
                    busy_until = busy_until.max(e);
                }
                n
            })
            .sum();
        (precedence, overlap)
    }

    pub fn summary(&self, predicted: Option<Millis>) -> TraceSummary {
        TraceSummary {
            makespan_ms: self.makespan,
            operations: self.records.len(),
            machines: self.usage(),
            predicted_makespan_ms: predicted,
            relative_error_pct: predicted.and_then(|p| relative_error(p, self.makespan).ok()),
        }
    }

    /// `machine,job,stage,start_ms,end_ms`, one row per operation.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["machine", "job", "stage", "start_ms", "end_ms"])
            .expect("in-memory write");
        for r in &self.records {
            w.write_record([
                r.machine.as_str(),
                r.op.job.as_str(),
                &r.op.stage.to_string(),
                &r.start.to_string(),
                &r.end.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Human-readable rendering of a summary.
pub fn render_summary(s: &TraceSummary) -> String {
    let mut out = format!("makespan: {} ms\noperations: {}\n", s.makespan_ms, s.operations);
    if let Some(p) = s.predicted_makespan_ms {
        out.push_str(&format!("predicted makespan: {p} ms\n"));
        if let Ok(h) = relative_error_hundredths(p, s.makespan_ms) {
            out.push_str(&format!("relative error: {}%\n", format_hundredths(h)));
        }
    }
    out.push_str("machine     busy_ms  utilization\n");
    for m in &s.machines {
        out.push_str(&format!(
            "{:<10} {:>8}  {:>10.3}\n",
            m.machine, m.busy_ms, m.utilization
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_values() {
        assert!((relative_error(9860, 9729).unwrap() - 1.3465).abs() < 1e-3);
        assert_eq!(relative_error(4000, 4000).unwrap(), 0.0);
        assert_eq!(relative_error(1, 0), Err(DomainError(0)));
    }

    #[test]
    fn hundredths_truncate() {
        assert_eq!(format_hundredths(relative_error_hundredths(9860, 9729).unwrap()), "1.34");
        assert_eq!(format_hundredths(relative_error_hundredths(5776, 4151).unwrap()), "39.14");
        assert_eq!(format_hundredths(relative_error_hundredths(5, 5).unwrap()), "0.00");
    }

    #[test]
    fn utilization_and_csv() {
        let t = ExecutionTrace::from_records(
            vec![
                OpRecord { op: OpRef::new("J", 2), machine: "b".into(), start: 2000, end: 4000 },
                OpRecord { op: OpRef::new("J", 1), machine: "a".into(), start: 0, end: 2000 },
            ],
            vec!["a".into(), "b".into(), "c".into()],
        );
        assert_eq!(t.makespan, 4000);
        let u = t.usage();
        assert_eq!(u[0].utilization, 0.5);
        assert_eq!(u[2].busy_ms, 0);
        assert_eq!(t.violations(), (0, 0));
        assert_eq!(
            t.to_csv(),
            "machine,job,stage,start_ms,end_ms\na,J,1,0,2000\nb,J,2,2000,4000\n"
        );
        let s = t.summary(Some(4000));
        assert_eq!(s.relative_error_pct, Some(0.0));
        assert!(render_summary(&s).contains("relative error: 0.00%"));
    }
}
