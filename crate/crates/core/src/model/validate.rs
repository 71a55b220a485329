use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use super::{Millis, OpRef, Schedule, WorkloadInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    DuplicateJob,
    DuplicateMachine,
    EmptyMachineType,
    NoStages,
    VariableDepth,
    IncompleteTimeMatrix,
    NonPositiveDuration,
    UnknownTimeEntry,
    UnknownMachine,
    UnknownOperation,
    MachineOverlap,
    Precedence,
    DurationMismatch,
    Unscheduled,
    Duplicated,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::DuplicateJob => "duplicate job id",
            ViolationKind::DuplicateMachine => "duplicate machine id",
            ViolationKind::EmptyMachineType => "empty machine type",
            ViolationKind::NoStages => "job has no stages",
            ViolationKind::VariableDepth => "variable pipeline depth",
            ViolationKind::IncompleteTimeMatrix => "incomplete time matrix",
            ViolationKind::NonPositiveDuration => "non-positive duration",
            ViolationKind::UnknownTimeEntry => "time entry outside instance",
            ViolationKind::UnknownMachine => "unknown machine",
            ViolationKind::UnknownOperation => "unknown operation",
            ViolationKind::MachineOverlap => "machine overlap",
            ViolationKind::Precedence => "precedence violation",
            ViolationKind::DurationMismatch => "duration mismatch",
            ViolationKind::Unscheduled => "operation unscheduled",
            ViolationKind::Duplicated => "operation scheduled more than once",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub job: Option<String>,
    pub stage: Option<usize>,
    pub machine: Option<String>,
}

impl Violation {
    fn new(kind: ViolationKind) -> Self {
        Self {
            kind,
            job: None,
            stage: None,
            machine: None,
        }
    }

    fn job(mut self, job: &str) -> Self {
        self.job = Some(job.to_string());
        self
    }

    fn stage(mut self, stage: usize) -> Self {
        self.stage = Some(stage);
        self
    }

    fn machine(mut self, machine: &str) -> Self {
        self.machine = Some(machine.to_string());
        self
    }

    fn op(self, op: &OpRef) -> Self {
        self.job(&op.job).stage(op.stage)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.as_str())?;
        let mut locus = Vec::new();
        if let Some(j) = &self.job {
            locus.push(format!("job {j}"));
        }
        if let Some(q) = self.stage {
            locus.push(format!("stage {q}"));
        }
        if let Some(m) = &self.machine {
            locus.push(format!("machine {m}"));
        }
        if !locus.is_empty() {
            write!(f, " ({})", locus.join(", "))?;
        }
        Ok(())
    }
}

/// Outcome of a validation pass; violations are data, not errors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate_instance(instance: &WorkloadInstance) -> Report {
    let mut out = Vec::new();

    let mut seen = HashSet::new();
    for j in &instance.jobs {
        if !seen.insert(j.id.as_str()) {
            out.push(Violation::new(ViolationKind::DuplicateJob).job(&j.id));
        }
        if j.stages == 0 {
            out.push(Violation::new(ViolationKind::NoStages).job(&j.id));
        }
    }
    let depth = instance.stages();
    for j in &instance.jobs {
        if j.stages != depth {
            out.push(Violation::new(ViolationKind::VariableDepth).job(&j.id));
        }
    }

    let mut seen = HashSet::new();
    for m in &instance.machines {
        if !seen.insert(m.id.as_str()) {
            out.push(Violation::new(ViolationKind::DuplicateMachine).machine(&m.id));
        }
        if m.machine_type.trim().is_empty() {
            out.push(Violation::new(ViolationKind::EmptyMachineType).machine(&m.id));
        }
    }

    for j in &instance.jobs {
        for q in 1..=j.stages {
            for m in &instance.machines {
                match instance.times.get(&j.id, q, &m.id) {
                    None => out.push(
                        Violation::new(ViolationKind::IncompleteTimeMatrix)
                            .job(&j.id)
                            .stage(q)
                            .machine(&m.id),
                    ),
                    Some(0) => out.push(
                        Violation::new(ViolationKind::NonPositiveDuration)
                            .job(&j.id)
                            .stage(q)
                            .machine(&m.id),
                    ),
                    Some(_) => {}
                }
            }
        }
    }

    for (job, stage, machine, _) in instance.times.iter() {
        let known = instance
            .job(job)
            .is_some_and(|j| (1..=j.stages).contains(&stage))
            && instance.machine(machine).is_some();
        if !known {
            out.push(
                Violation::new(ViolationKind::UnknownTimeEntry)
                    .job(job)
                    .stage(stage)
                    .machine(machine),
            );
        }
    }

    Report { violations: out }
}

/// Checks machine exclusivity, job precedence, duration fidelity against the
/// time matrix, and that every operation is scheduled exactly once.
pub fn check_schedule(instance: &WorkloadInstance, schedule: &Schedule) -> Report {
    let mut out = Vec::new();

    // (job, stage) -> (start, end)
    let mut placed: BTreeMap<&OpRef, (Millis, Millis)> = BTreeMap::new();
    let mut duplicated: BTreeSet<&OpRef> = BTreeSet::new();

    for (machine, ops) in &schedule.assignments {
        if instance.machine(machine).is_none() {
            out.push(Violation::new(ViolationKind::UnknownMachine).machine(machine));
        }
        let mut sorted: Vec<_> = ops.iter().collect();
        sorted.sort_by_key(|o| (o.start, o.end()));
        let mut busy_until = 0;
        for (i, o) in sorted.iter().enumerate() {
            if i > 0 && o.start < busy_until {
                out.push(
                    Violation::new(ViolationKind::MachineOverlap)
                        .op(&o.op)
                        .machine(machine),
                );
            }
            busy_until = busy_until.max(o.end());
        }
        for o in ops {
            let known = instance
                .job(&o.op.job)
                .is_some_and(|j| (1..=j.stages).contains(&o.op.stage));
            if !known {
                out.push(Violation::new(ViolationKind::UnknownOperation).op(&o.op));
                continue;
            }
            if let Some(t) = instance.time(&o.op, machine) {
                if t != o.duration {
                    out.push(
                        Violation::new(ViolationKind::DurationMismatch)
                            .op(&o.op)
                            .machine(machine),
                    );
                }
            }
            if placed.insert(&o.op, (o.start, o.end())).is_some() {
                duplicated.insert(&o.op);
            }
        }
    }
    for op in duplicated {
        out.push(Violation::new(ViolationKind::Duplicated).op(op));
    }

    for op in instance.operations() {
        let Some(&(start, _)) = placed.get(&op) else {
            out.push(Violation::new(ViolationKind::Unscheduled).op(&op));
            continue;
        };
        if op.stage > 1 {
            let prev = OpRef::new(op.job.clone(), op.stage - 1);
            if let Some(&(_, prev_end)) = placed.get(&prev) {
                if start < prev_end {
                    out.push(Violation::new(ViolationKind::Precedence).op(&op));
                }
            }
        }
    }

    Report { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example_instance, Machine, ScheduledOp};

    pub(crate) fn example_schedule() -> Schedule {
        // Unit start times; m1 is the published S1, m2/m3 complete it to a
        // legal makespan-8 schedule.
        let raw: &[(&str, &[(&str, usize, Millis)])] = &[
            ("m1", &[("J3", 1, 0), ("J1", 2, 3), ("J2", 2, 5), ("J2", 3, 6)]),
            ("m2", &[("J1", 1, 0), ("J2", 1, 2), ("J3", 3, 6)]),
            ("m3", &[("J3", 2, 3), ("J1", 3, 6)]),
        ];
        let inst = example_instance();
        let mut a = BTreeMap::new();
        for (m, ops) in raw {
            let v = ops
                .iter()
                .map(|&(j, q, s)| {
                    let op = OpRef::new(j, q);
                    let duration = inst.time(&op, m).unwrap();
                    ScheduledOp {
                        op,
                        start: s * 1000,
                        duration,
                    }
                })
                .collect();
            a.insert(m.to_string(), v);
        }
        Schedule::from_assignments(a)
    }

    #[test]
    fn example_instance_is_valid() {
        assert!(validate_instance(&example_instance()).is_ok());
    }

    #[test]
    fn missing_entry_is_reported() {
        let mut inst = example_instance();
        inst.times.remove("J1", 2, "m3");
        let r = validate_instance(&inst);
        assert_eq!(r.violations.len(), 1);
        let v = &r.violations[0];
        assert_eq!(v.kind, ViolationKind::IncompleteTimeMatrix);
        assert_eq!(v.to_string(), "incomplete time matrix (job J1, stage 2, machine m3)");
    }

    #[test]
    fn zero_duration_is_reported() {
        let mut inst = example_instance();
        inst.times.insert("J2", 1, "m1", 0);
        assert!(validate_instance(&inst).has(ViolationKind::NonPositiveDuration));
    }

    #[test]
    fn variable_depth_and_duplicates_are_reported() {
        let mut inst = example_instance();
        inst.jobs[1].stages = 2;
        inst.machines.push(Machine::new("m1", ""));
        let r = validate_instance(&inst);
        assert!(r.has(ViolationKind::VariableDepth));
        assert!(r.has(ViolationKind::DuplicateMachine));
        assert!(r.has(ViolationKind::EmptyMachineType));
    }

    #[test]
    fn example_schedule_is_legal() {
        let s = example_schedule();
        let r = check_schedule(&example_instance(), &s);
        assert!(r.is_ok(), "{r}");
        assert_eq!(s.makespan, 8000);
    }

    #[test]
    fn early_second_stage_breaks_precedence() {
        // Shift o11 so it ends at 3000, then pull o12 forward to 2000.
        let mut s = example_schedule();
        let m2 = s.assignments.get_mut("m2").unwrap();
        m2[0].start = 1000; // o11 now ends at 3000
        m2[1].start = 3000; // keep m2 free of overlap (o21 ends at 6000)
        m2[2].start = 6000;
        let m1 = s.assignments.get_mut("m1").unwrap();
        m1[1].start = 2000; // o12 starts before o11 ends
        let r = check_schedule(&example_instance(), &s);
        assert!(r.has(ViolationKind::Precedence), "{r}");
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::Precedence && v.job.as_deref() == Some("J1")));
    }

    #[test]
    fn omitted_operation_is_reported() {
        let mut s = example_schedule();
        s.assignments.get_mut("m2").unwrap().retain(|o| o.op != OpRef::new("J3", 3));
        let r = check_schedule(&example_instance(), &s);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::Unscheduled);
        assert_eq!(r.violations[0].job.as_deref(), Some("J3"));
        assert_eq!(r.violations[0].stage, Some(3));
    }

    #[test]
    fn wrong_duration_and_overlap() {
        let mut s = example_schedule();
        s.assignments.get_mut("m3").unwrap()[0].duration = 4000;
        let r = check_schedule(&example_instance(), &s);
        assert!(r.has(ViolationKind::DurationMismatch));
        assert!(r.has(ViolationKind::MachineOverlap));
    }

    #[test]
    fn machine_order_does_not_change_verdict() {
        let mut inst = example_instance();
        inst.machines.reverse();
        assert!(check_schedule(&inst, &example_schedule()).is_ok());
    }
}
