//! Text formats: workload documents (TOML), schedule CSV and plan files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    ExecutionPlan, Job, Machine, Millis, OpRef, PlanStatement, Schedule, ScheduledOp, TimeMatrix,
    WorkloadInstance,
};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("workload parse error: {0}")]
    Workload(String),
    #[error("schedule parse error at line {line}: {msg}")]
    Schedule { line: usize, msg: String },
    #[error("plan parse error at line {line}: {msg}")]
    Plan { line: usize, msg: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadDoc {
    /// Default pipeline depth for jobs that do not set their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stages: Option<usize>,
    /// `ms` (default) or `s`; applies to the `times` table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_unit: Option<String>,
    #[serde(default)]
    machines: Vec<Machine>,
    #[serde(default)]
    jobs: Vec<JobDoc>,
    /// job id -> machine id -> per-stage durations
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    times: BTreeMap<String, BTreeMap<String, Vec<u64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stages: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<BTreeMap<String, f64>>,
}

/// Parses a workload document. `default_stages` is used for jobs when the
/// document itself does not say how many stages they have. An omitted
/// `times` table yields an empty [`TimeMatrix`].
pub fn parse_workload(
    text: &str,
    default_stages: Option<usize>,
) -> Result<WorkloadInstance, FormatError> {
    let doc: WorkloadDoc = toml::from_str(text).map_err(|e| FormatError::Workload(e.to_string()))?;
    let scale: Millis = match doc.time_unit.as_deref() {
        None | Some("ms") => 1,
        Some("s") => 1000,
        Some(other) => {
            return Err(FormatError::Workload(format!(
                "unknown time_unit `{other}` (expected `ms` or `s`)"
            )))
        }
    };
    let jobs = doc
        .jobs
        .into_iter()
        .map(|j| {
            let stages = j.stages.or(doc.stages).or(default_stages).ok_or_else(|| {
                FormatError::Workload(format!("job `{}` has no stage count", j.id))
            })?;
            Ok(Job {
                id: j.id,
                stages,
                features: j.features,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let mut times = TimeMatrix::new();
    for (job, per_machine) in &doc.times {
        for (machine, durations) in per_machine {
            for (i, &t) in durations.iter().enumerate() {
                let ms = t.checked_mul(scale).ok_or_else(|| {
                    FormatError::Workload(format!("duration overflow for {job}.{}", i + 1))
                })?;
                times.insert(job, i + 1, machine, ms);
            }
        }
    }
    Ok(WorkloadInstance {
        jobs,
        machines: doc.machines,
        times,
    })
}

/// Serializes an instance with explicit per-job stage counts and times in ms.
pub fn write_workload(instance: &WorkloadInstance) -> String {
    let mut times: BTreeMap<String, BTreeMap<String, Vec<u64>>> = BTreeMap::new();
    for (job, stage, machine, t) in instance.times.iter() {
        let v = times
            .entry(job.to_string())
            .or_default()
            .entry(machine.to_string())
            .or_default();
        // stages iterate in order per (job, machine) only when contiguous
        if v.len() + 1 == stage {
            v.push(t);
        }
    }
    let doc = WorkloadDoc {
        stages: None,
        time_unit: None,
        machines: instance.machines.clone(),
        jobs: instance
            .jobs
            .iter()
            .map(|j| JobDoc {
                id: j.id.clone(),
                stages: Some(j.stages),
                features: j.features.clone(),
            })
            .collect(),
        times,
    };
    toml::to_string(&doc).expect("workload document is always serializable")
}

pub const SCHEDULE_HEADER: [&str; 5] = ["machine", "job", "stage", "start_ms", "duration_ms"];

pub fn write_schedule_csv(schedule: &Schedule) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCHEDULE_HEADER).expect("in-memory write");
    for (machine, o) in schedule.entries() {
        w.write_record([
            machine,
            &o.op.job,
            &o.op.stage.to_string(),
            &o.start.to_string(),
            &o.duration.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Parses a schedule file. Optimality and lower bound are not part of the
/// file; the result is marked feasible with a zero bound.
pub fn parse_schedule_csv(text: &str) -> Result<Schedule, FormatError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| FormatError::Schedule {
        line: 1,
        msg: e.to_string(),
    })?;
    if header.iter().ne(SCHEDULE_HEADER) {
        return Err(FormatError::Schedule {
            line: 1,
            msg: format!("expected header `{}`", SCHEDULE_HEADER.join(",")),
        });
    }
    let mut assignments: BTreeMap<String, Vec<ScheduledOp>> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| FormatError::Schedule {
            line,
            msg: e.to_string(),
        })?;
        let num = |idx: usize| -> Result<u64, FormatError> {
            rec[idx].trim().parse().map_err(|_| FormatError::Schedule {
                line,
                msg: format!("`{}` is not a non-negative integer", &rec[idx]),
            })
        };
        let stage = num(2)? as usize;
        if stage == 0 {
            return Err(FormatError::Schedule {
                line,
                msg: "stage indices are 1-based".into(),
            });
        }
        assignments
            .entry(rec[0].to_string())
            .or_default()
            .push(ScheduledOp {
                op: OpRef::new(&rec[1], stage),
                start: num(3)?,
                duration: num(4)?,
            });
    }
    Ok(Schedule::from_assignments(assignments))
}

pub fn write_plan(plan: &ExecutionPlan) -> String {
    let mut out = String::new();
    for s in &plan.statements {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_plan(machine_id: &str, text: &str) -> Result<ExecutionPlan, FormatError> {
    let mut statements = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| FormatError::Plan { line, msg };
        if raw.is_empty() {
            continue;
        }
        let (kw, rest) = match raw.split_once(' ') {
            Some((k, r)) => (k, Some(r)),
            None => (raw, None),
        };
        let operand = || -> Result<OpRef, FormatError> {
            let rest = rest.ok_or_else(|| err(format!("`{kw}` requires an operand")))?;
            let (job, stage) = rest
                .rsplit_once('.')
                .ok_or_else(|| err(format!("operand `{rest}` is not <job>.<stage>")))?;
            let stage: usize = stage
                .parse()
                .ok()
                .filter(|&q| q >= 1)
                .ok_or_else(|| err(format!("bad stage index in `{rest}`")))?;
            if job.is_empty() {
                return Err(err(format!("empty job id in `{rest}`")));
            }
            Ok(OpRef::new(job, stage))
        };
        let st = match kw {
            "BEGIN" | "END" if rest.is_some() => {
                return Err(err(format!("`{kw}` takes no operand")))
            }
            "BEGIN" => PlanStatement::Begin,
            "END" => PlanStatement::End,
            "EXEC" => PlanStatement::Exec(operand()?),
            "WAIT" => PlanStatement::Wait(operand()?),
            "SIGNAL" => PlanStatement::Signal(operand()?),
            other => return Err(err(format!("unknown statement `{other}`"))),
        };
        statements.push(st);
    }
    Ok(ExecutionPlan {
        machine_id: machine_id.to_string(),
        statements,
    })
}
