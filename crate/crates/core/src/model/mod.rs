//! Shared data model: jobs, machines, the per-operation time matrix,
//! schedules and execution plans.
//!
//! All durations are integer milliseconds ([`Millis`]). Identifiers are
//! strings; wherever a deterministic tie-break is needed, ids are compared
//! lexicographically.

mod io;
pub mod random;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use io::{
    parse_plan, parse_schedule_csv, parse_workload, write_plan, write_schedule_csv,
    write_workload, FormatError,
};
pub use validate::{check_schedule, validate_instance, Report, Violation, ViolationKind};

/// Duration or instant in integer milliseconds.
pub type Millis = u64;

/// A single operation: stage `stage` (1-based) of job `job`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpRef {
    pub job: String,
    pub stage: usize,
}

impl OpRef {
    pub fn new(job: impl Into<String>, stage: usize) -> Self {
        Self {
            job: job.into(),
            stage,
        }
    }
}

impl fmt::Display for OpRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.job, self.stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    /// Pipeline depth K. Stages are numbered `1..=stages`.
    pub stages: usize,
    /// Optional numeric features used by the time predictor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<BTreeMap<String, f64>>,
}

impl Job {
    pub fn new(id: impl Into<String>, stages: usize) -> Self {
        Self {
            id: id.into(),
            stages,
            features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Machine {
    pub id: String,
    /// Key selecting a predictor model, e.g. a GPU configuration class.
    pub machine_type: String,
}

impl Machine {
    pub fn new(id: impl Into<String>, machine_type: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            machine_type: machine_type.into(),
        }
    }
}

/// Map `(job, stage, machine) -> duration`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeMatrix {
    entries: BTreeMap<(String, usize, String), Millis>,
}

impl TimeMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, job: &str, stage: usize, machine: &str, ms: Millis) {
        self.entries
            .insert((job.to_string(), stage, machine.to_string()), ms);
    }

    pub fn remove(&mut self, job: &str, stage: usize, machine: &str) -> Option<Millis> {
        self.entries
            .remove(&(job.to_string(), stage, machine.to_string()))
    }

    pub fn get(&self, job: &str, stage: usize, machine: &str) -> Option<Millis> {
        self.entries
            .get(&(job.to_string(), stage, machine.to_string()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, &str, Millis)> {
        self.entries
            .iter()
            .map(|((j, q, m), &t)| (j.as_str(), *q, m.as_str(), t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadInstance {
    pub jobs: Vec<Job>,
    pub machines: Vec<Machine>,
    pub times: TimeMatrix,
}

impl WorkloadInstance {
    /// Common pipeline depth. Returns 0 for an instance without jobs.
    pub fn stages(&self) -> usize {
        self.jobs.first().map_or(0, |j| j.stages)
    }

    pub fn operation_count(&self) -> usize {
        self.jobs.iter().map(|j| j.stages).sum()
    }

    pub fn job(&self, id: &str) -> Option<&Job> {
        self.jobs.iter().find(|j| j.id == id)
    }

    pub fn machine(&self, id: &str) -> Option<&Machine> {
        self.machines.iter().find(|m| m.id == id)
    }

    /// All operations in (job order, stage) order.
    pub fn operations(&self) -> impl Iterator<Item = OpRef> + '_ {
        self.jobs
            .iter()
            .flat_map(|j| (1..=j.stages).map(move |q| OpRef::new(j.id.clone(), q)))
    }

    /// Duration of `op` on `machine`.
    pub fn time(&self, op: &OpRef, machine: &str) -> Option<Millis> {
        self.times.get(&op.job, op.stage, machine)
    }

    /// Total time of all stages of `job` on `machine` (the greedy W entry).
    pub fn job_total(&self, job: &str, machine: &str) -> Option<Millis> {
        let stages = self.job(job)?.stages;
        (1..=stages).map(|q| self.times.get(job, q, machine)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimality {
    Optimal,
    Feasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledOp {
    pub op: OpRef,
    pub start: Millis,
    pub duration: Millis,
}

impl ScheduledOp {
    pub fn end(&self) -> Millis {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// Per machine id, entries sorted by start time.
    pub assignments: BTreeMap<String, Vec<ScheduledOp>>,
    pub makespan: Millis,
    pub optimality: Optimality,
    pub lower_bound: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("empty schedule")]
    Empty,
}

impl Schedule {
    /// Builds a schedule from per-machine entries, sorting each machine's list
    /// and computing the makespan. `optimality` defaults to feasible and
    /// `lower_bound` to zero.
    pub fn from_assignments(mut assignments: BTreeMap<String, Vec<ScheduledOp>>) -> Self {
        for ops in assignments.values_mut() {
            ops.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.op.cmp(&b.op)));
        }
        let makespan = assignments
            .values()
            .flatten()
            .map(ScheduledOp::end)
            .max()
            .unwrap_or(0);
        Self {
            assignments,
            makespan,
            optimality: Optimality::Feasible,
            lower_bound: 0,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &ScheduledOp)> {
        self.assignments
            .iter()
            .flat_map(|(m, ops)| ops.iter().map(move |o| (m.as_str(), o)))
    }

    pub fn len(&self) -> usize {
        self.assignments.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Latest completion over all entries; ignores the stored `makespan` field.
pub fn schedule_makespan(schedule: &Schedule) -> Result<Millis, ScheduleError> {
    schedule
        .entries()
        .map(|(_, o)| o.end())
        .max()
        .ok_or(ScheduleError::Empty)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanStatement {
    Begin,
    Exec(OpRef),
    Wait(OpRef),
    Signal(OpRef),
    End,
}

impl PlanStatement {
    pub fn operand(&self) -> Option<&OpRef> {
        match self {
            PlanStatement::Exec(o) | PlanStatement::Wait(o) | PlanStatement::Signal(o) => Some(o),
            PlanStatement::Begin | PlanStatement::End => None,
        }
    }
}

impl fmt::Display for PlanStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanStatement::Begin => write!(f, "BEGIN"),
            PlanStatement::Exec(o) => write!(f, "EXEC {o}"),
            PlanStatement::Wait(o) => write!(f, "WAIT {o}"),
            PlanStatement::Signal(o) => write!(f, "SIGNAL {o}"),
            PlanStatement::End => write!(f, "END"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionPlan {
    pub machine_id: String,
    pub statements: Vec<PlanStatement>,
}

impl ExecutionPlan {
    pub fn execs(&self) -> impl Iterator<Item = &OpRef> {
        self.statements.iter().filter_map(|s| match s {
            PlanStatement::Exec(o) => Some(o),
            _ => None,
        })
    }

    /// Checks the framing and adjacency rules: exactly one BEGIN (first) and
    /// one END (last); every EXEC of stage q>1 is directly preceded by a WAIT
    /// on the same operation, unless it directly follows the EXEC of stage
    /// q-1 of the same job (whole-job plans); every EXEC of a stage q<K is
    /// directly followed by SIGNAL(q+1) or by EXEC(q+1) of the same job.
    pub fn structural_errors(&self, stages: usize) -> Vec<String> {
        let st = &self.statements;
        let mut errs = Vec::new();
        if st.first() != Some(&PlanStatement::Begin) {
            errs.push("plan does not start with BEGIN".to_string());
        }
        if st.last() != Some(&PlanStatement::End) || st.len() < 2 {
            errs.push("plan does not end with END".to_string());
        }
        let begins = st.iter().filter(|s| **s == PlanStatement::Begin).count();
        let ends = st.iter().filter(|s| **s == PlanStatement::End).count();
        if begins != 1 || ends != 1 {
            errs.push(format!("expected one BEGIN and one END, found {begins} and {ends}"));
        }
        for (i, s) in st.iter().enumerate() {
            let PlanStatement::Exec(op) = s else { continue };
            if op.stage > 1 {
                let prev = i.checked_sub(1).map(|p| &st[p]);
                let ok = match prev {
                    Some(PlanStatement::Wait(w)) => w == op,
                    Some(PlanStatement::Exec(e)) => e.job == op.job && e.stage + 1 == op.stage,
                    _ => false,
                };
                if !ok {
                    errs.push(format!("EXEC {op} is not preceded by WAIT {op}"));
                }
            }
            if op.stage < stages {
                let next_op = OpRef::new(op.job.clone(), op.stage + 1);
                let ok = match st.get(i + 1) {
                    Some(PlanStatement::Signal(s)) | Some(PlanStatement::Exec(s)) => *s == next_op,
                    _ => false,
                };
                if !ok {
                    errs.push(format!("EXEC {op} is not followed by SIGNAL {next_op}"));
                }
            }
        }
        errs
    }
}

/// Lower bound valid for any legal schedule: the longest job chain when
/// every stage runs on its fastest machine.
pub fn chain_lower_bound(instance: &WorkloadInstance) -> Millis {
    instance
        .jobs
        .iter()
        .map(|j| {
            (1..=j.stages)
                .map(|q| {
                    instance
                        .machines
                        .iter()
                        .filter_map(|m| instance.times.get(&j.id, q, &m.id))
                        .min()
                        .unwrap_or(0)
                })
                .sum::<Millis>()
        })
        .max()
        .unwrap_or(0)
}

/// The three-job, three-machine instance used throughout the tests, with
/// durations scaled to milliseconds (1 unit = 1000 ms).
pub fn example_instance() -> WorkloadInstance {
    // times[job][stage][machine], in units
    let times: [[[Millis; 3]; 3]; 3] = [
        [[3, 2, 5], [2, 4, 4], [4, 3, 1]],
        [[3, 3, 4], [1, 5, 3], [2, 2, 5]],
        [[3, 2, 5], [5, 3, 3], [3, 2, 4]],
    ];
    let jobs: Vec<Job> = (1..=3).map(|i| Job::new(format!("J{i}"), 3)).collect();
    let machines: Vec<Machine> = (1..=3)
        .map(|k| Machine::new(format!("m{k}"), "default"))
        .collect();
    let mut tm = TimeMatrix::new();
    for (j, job) in jobs.iter().enumerate() {
        for q in 0..3 {
            for (k, m) in machines.iter().enumerate() {
                tm.insert(&job.id, q + 1, &m.id, times[j][q][k] * 1000);
            }
        }
    }
    WorkloadInstance {
        jobs,
        machines,
        times: tm,
    }
}
