//! Compiles schedules into per-machine execution plans, and the greedy
//! whole-job assignment baseline.

mod manifest;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::exec::{simulate, Perturbation};
use crate::model::{
    check_schedule, validate_instance, ExecutionPlan, Millis, OpRef, PlanStatement, Report,
    Schedule, WorkloadInstance,
};

pub use manifest::{plan_file_name, read_manifest, write_run, ManifestError, ManifestMachine, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(Report),
    #[error("invalid instance: {0}")]
    InvalidInstance(Report),
    #[error("cannot evaluate plans: {0}")]
    Simulation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Fjsp,
    Greedy,
    Dynamic,
}

/// One plan per machine, in instance machine order. Operations appear in
/// start-time order; stage q>1 is preceded by `WAIT(job, q)` and stage q<K
/// is followed by `SIGNAL(job, q+1)`.
pub fn compile_fjsp_plans(
    instance: &WorkloadInstance,
    schedule: &Schedule,
) -> Result<Vec<ExecutionPlan>, PlanError> {
    let report = check_schedule(instance, schedule);
    if !report.is_ok() {
        return Err(PlanError::InvalidSchedule(report));
    }
    let k = instance.stages();
    Ok(instance
        .machines
        .iter()
        .map(|m| {
            let mut statements = vec![PlanStatement::Begin];
            let mut ops: Vec<_> = schedule
                .assignments
                .get(&m.id)
                .map(|v| v.iter().collect())
                .unwrap_or_default();
            ops.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.op.cmp(&b.op)));
            for o in ops {
                let q = o.op.stage;
                if q > 1 {
                    statements.push(PlanStatement::Wait(o.op.clone()));
                }
                statements.push(PlanStatement::Exec(o.op.clone()));
                if q < k {
                    statements.push(PlanStatement::Signal(OpRef::new(o.op.job.clone(), q + 1)));
                }
            }
            statements.push(PlanStatement::End);
            ExecutionPlan {
                machine_id: m.id.clone(),
                statements,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyResult {
    pub plans: Vec<ExecutionPlan>,
    /// job id -> machine id
    pub assignment: BTreeMap<String, String>,
    /// Commit order of the assignment, as (job, machine, W).
    pub order: Vec<(String, String, Millis)>,
    /// W: job id -> machine id -> summed stage time.
    pub job_costs: BTreeMap<String, BTreeMap<String, Millis>>,
    pub predicted_makespan: Millis,
}

/// Whole-job greedy assignment in rounds. In each round every machine is
/// available once; the (job, fastest available machine) pair with the
/// smallest W is committed and both leave the round, until the round runs
/// out of jobs or machines. Ties resolve by (job id, machine id).
pub fn greedy_plans(instance: &WorkloadInstance) -> Result<GreedyResult, PlanError> {
    let report = validate_instance(instance);
    if !report.is_ok() {
        return Err(PlanError::InvalidInstance(report));
    }
    let mut job_costs: BTreeMap<String, BTreeMap<String, Millis>> = BTreeMap::new();
    for j in &instance.jobs {
        for m in &instance.machines {
            let w = instance.job_total(&j.id, &m.id).expect("validated");
            job_costs.entry(j.id.clone()).or_default().insert(m.id.clone(), w);
        }
    }

    let mut unassigned: Vec<&str> = instance.jobs.iter().map(|j| j.id.as_str()).collect();
    unassigned.sort_unstable();
    let mut machine_ids: Vec<&str> = instance.machines.iter().map(|m| m.id.as_str()).collect();
    machine_ids.sort_unstable();

    let mut order = Vec::new();
    let mut execs: BTreeMap<&str, Vec<PlanStatement>> = BTreeMap::new();
    let mut loads: BTreeMap<&str, Millis> = BTreeMap::new();
    while !unassigned.is_empty() && !machine_ids.is_empty() {
        let mut available = machine_ids.clone();
        while !unassigned.is_empty() && !available.is_empty() {
            // fastest available machine per job, then the overall minimum
            let (job, machine, w) = unassigned
                .iter()
                .map(|&j| {
                    let (m, w) = available
                        .iter()
                        .map(|&m| (m, job_costs[j][m]))
                        .min_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)))
                        .expect("a machine is available");
                    (j, m, w)
                })
                .min_by(|a, b| (a.2, a.0, a.1).cmp(&(b.2, b.0, b.1)))
                .expect("a job is unassigned");
            let stages = instance.job(job).expect("known job").stages;
            execs
                .entry(machine)
                .or_default()
                .extend((1..=stages).map(|q| PlanStatement::Exec(OpRef::new(job, q))));
            *loads.entry(machine).or_default() += w;
            order.push((job.to_string(), machine.to_string(), w));
            unassigned.retain(|&j| j != job);
            available.retain(|&m| m != machine);
        }
    }

    let plans = instance
        .machines
        .iter()
        .map(|m| {
            let mut statements = vec![PlanStatement::Begin];
            statements.extend(execs.remove(m.id.as_str()).unwrap_or_default());
            statements.push(PlanStatement::End);
            ExecutionPlan {
                machine_id: m.id.clone(),
                statements,
            }
        })
        .collect();
    let assignment = order
        .iter()
        .map(|(j, m, _)| (j.clone(), m.clone()))
        .collect();
    Ok(GreedyResult {
        plans,
        assignment,
        order,
        job_costs,
        predicted_makespan: loads.values().copied().max().unwrap_or(0),
    })
}

/// What a predicted makespan is computed from.
#[derive(Debug, Clone, Copy)]
pub enum Prediction<'a> {
    Schedule(&'a Schedule),
    Plans(&'a [ExecutionPlan]),
}

/// Makespan implied by the time matrix: the schedule's makespan, or for a
/// plan set the unperturbed simulated makespan (for whole-job plans this is
/// the largest per-machine sum of job costs).
pub fn predicted_makespan(
    instance: &WorkloadInstance,
    source: Prediction<'_>,
) -> Result<Millis, PlanError> {
    match source {
        Prediction::Schedule(s) => Ok(s.entries().map(|(_, o)| o.end()).max().unwrap_or(0)),
        Prediction::Plans(plans) if plans.is_empty() => Ok(0),
        Prediction::Plans(plans) => simulate(plans, instance, &Perturbation::none())
            .map(|t| t.makespan)
            .map_err(|e| PlanError::Simulation(e.to_string())),
    }
}
