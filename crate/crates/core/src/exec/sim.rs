//! Deterministic discrete-event interpreter for execution plans.

use std::collections::{BTreeMap, BTreeSet};

use super::perturb::Perturbation;
use super::trace::{ExecutionTrace, OpRecord};
use crate::model::{ExecutionPlan, Millis, OpRef, PlanStatement, WorkloadInstance};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("dangling wait: no plan signals {}", join(.0))]
    DanglingWait(Vec<OpRef>),
    #[error("deadlock: blocked waits {}", .0.iter().map(|(m, o)| format!("{m}:WAIT {o}")).collect::<Vec<_>>().join(", "))]
    Deadlock(Vec<(String, OpRef)>),
    #[error("no time entry for {op} on machine {machine}")]
    MissingTime { op: OpRef, machine: String },
    #[error("duplicate signal for {0}")]
    DuplicateSignal(OpRef),
}

fn join(ops: &[OpRef]) -> String {
    ops.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

struct Cursor<'a> {
    plan: &'a ExecutionPlan,
    pc: usize,
    clock: Millis,
}

impl Cursor<'_> {
    fn done(&self) -> bool {
        self.pc >= self.plan.statements.len()
    }
}

/// Interprets all plans together. EXEC advances the machine clock by the
/// (perturbed) duration; WAIT(j,q) blocks until SIGNAL(j,q) has fired and
/// resumes at the signal time; SIGNAL and BEGIN/END take no time. Machines
/// step in (clock, machine id) order.
pub fn simulate(
    plans: &[ExecutionPlan],
    instance: &WorkloadInstance,
    perturb: &Perturbation,
) -> Result<ExecutionTrace, SimError> {
    let signalled: BTreeSet<&OpRef> = plans
        .iter()
        .flat_map(|p| &p.statements)
        .filter_map(|s| match s {
            PlanStatement::Signal(o) => Some(o),
            _ => None,
        })
        .collect();
    let mut dangling: Vec<OpRef> = plans
        .iter()
        .flat_map(|p| &p.statements)
        .filter_map(|s| match s {
            PlanStatement::Wait(o) if !signalled.contains(o) => Some(o.clone()),
            _ => None,
        })
        .collect();
    if !dangling.is_empty() {
        dangling.sort();
        dangling.dedup();
        return Err(SimError::DanglingWait(dangling));
    }
    for p in plans {
        for op in p.execs() {
            if instance.time(op, &p.machine_id).is_none() {
                return Err(SimError::MissingTime {
                    op: op.clone(),
                    machine: p.machine_id.clone(),
                });
            }
        }
    }

    let mut cursors: Vec<Cursor> = plans
        .iter()
        .map(|plan| Cursor {
            plan,
            pc: 0,
            clock: 0,
        })
        .collect();
    cursors.sort_by(|a, b| a.plan.machine_id.cmp(&b.plan.machine_id));

    let mut signals: BTreeMap<OpRef, Millis> = BTreeMap::new();
    let mut records = Vec::new();

    loop {
        // next runnable machine: smallest clock, then machine id
        let mut pick: Option<usize> = None;
        for (i, c) in cursors.iter().enumerate() {
            if c.done() {
                continue;
            }
            if let PlanStatement::Wait(o) = &c.plan.statements[c.pc] {
                if !signals.contains_key(o) {
                    continue;
                }
            }
            if pick.is_none_or(|p| c.clock < cursors[p].clock) {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        let c = &mut cursors[i];
        match &c.plan.statements[c.pc] {
            PlanStatement::Begin | PlanStatement::End => {}
            PlanStatement::Wait(o) => c.clock = c.clock.max(signals[o]),
            PlanStatement::Signal(o) => {
                if signals.insert(o.clone(), c.clock).is_some() {
                    return Err(SimError::DuplicateSignal(o.clone()));
                }
            }
            PlanStatement::Exec(o) => {
                let nominal = instance.time(o, &c.plan.machine_id).expect("checked above");
                let start = c.clock;
                c.clock += perturb.realize(o, nominal);
                records.push(OpRecord {
                    op: o.clone(),
                    machine: c.plan.machine_id.clone(),
                    start,
                    end: c.clock,
                });
            }
        }
        c.pc += 1;
    }

    let blocked: Vec<(String, OpRef)> = cursors
        .iter()
        .filter(|c| !c.done())
        .filter_map(|c| match &c.plan.statements[c.pc] {
            PlanStatement::Wait(o) => Some((c.plan.machine_id.clone(), o.clone())),
            _ => None,
        })
        .collect();
    if !blocked.is_empty() {
        return Err(SimError::Deadlock(blocked));
    }

    let machines = plans.iter().map(|p| p.machine_id.clone()).collect();
    let mut trace = ExecutionTrace::from_records(records, machines);
    trace.makespan = cursors.iter().map(|c| c.clock).max().unwrap_or(0);
    Ok(trace)
}
