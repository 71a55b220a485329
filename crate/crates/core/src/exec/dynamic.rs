//! Master-worker baseline: whole jobs are handed, in input order, to the
//! first free machine in machine-list order; the master polls when every
//! machine is busy.

use std::fs;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::perturb::Perturbation;
use super::real::{create_marker, render_command, run_shell, RealError, SyncNamespace};
use super::trace::{ExecutionTrace, OpRecord};
use crate::model::{validate_instance, Millis, OpRef, Report, WorkloadInstance};

pub const DEFAULT_POLL_MS: Millis = 30_000;

#[derive(Debug, Clone)]
pub enum Backend {
    Simulated(Perturbation),
    Real {
        sync: SyncNamespace,
        command_template: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicOutcome {
    pub trace: ExecutionTrace,
    /// (job, machine) in dispatch order.
    pub assignment: Vec<(String, String)>,
    pub failed_jobs: Vec<String>,
}

impl DynamicOutcome {
    pub fn is_partial(&self) -> bool {
        !self.failed_jobs.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DynamicError {
    #[error("invalid instance: {0}")]
    InvalidInstance(Report),
    #[error("no machines")]
    NoMachines,
    #[error(transparent)]
    Real(#[from] RealError),
}

pub fn dynamic_run(
    instance: &WorkloadInstance,
    poll_ms: Millis,
    backend: &Backend,
) -> Result<DynamicOutcome, DynamicError> {
    match backend {
        Backend::Simulated(p) => {
            let report = validate_instance(instance);
            if !report.is_ok() {
                return Err(DynamicError::InvalidInstance(report));
            }
            simulated(instance, poll_ms, p)
        }
        Backend::Real {
            sync,
            command_template,
        } => real(instance, poll_ms, sync, command_template),
    }
}

fn simulated(
    instance: &WorkloadInstance,
    poll_ms: Millis,
    perturb: &Perturbation,
) -> Result<DynamicOutcome, DynamicError> {
    let machines = &instance.machines;
    if machines.is_empty() && !instance.jobs.is_empty() {
        return Err(DynamicError::NoMachines);
    }
    let mut free_at: Vec<Millis> = vec![0; machines.len()];
    let mut now: Millis = 0;
    let mut records = Vec::new();
    let mut assignment = Vec::new();
    for job in &instance.jobs {
        let k = loop {
            if let Some(k) = free_at.iter().position(|&t| t <= now) {
                break k;
            }
            let earliest = *free_at.iter().min().expect("machines exist");
            now = if poll_ms == 0 {
                earliest
            } else {
                // sleep in whole poll intervals until something is free
                now + poll_ms * (earliest - now).div_ceil(poll_ms)
            };
        };
        let m = &machines[k].id;
        let mut t = now;
        for q in 1..=job.stages {
            let op = OpRef::new(job.id.clone(), q);
            let nominal = instance.time(&op, m).expect("validated");
            let end = t + perturb.realize(&op, nominal);
            records.push(OpRecord {
                op,
                machine: m.clone(),
                start: t,
                end,
            });
            t = end;
        }
        free_at[k] = t;
        assignment.push((job.id.clone(), m.clone()));
    }
    let trace = ExecutionTrace::from_records(records, machines.iter().map(|m| m.id.clone()).collect());
    Ok(DynamicOutcome {
        trace,
        assignment,
        failed_jobs: Vec::new(),
    })
}

struct WorkerReport {
    job: String,
    records: Vec<OpRecord>,
    failed: bool,
}

/// Marks the machine busy, then runs every stage of the job on a worker
/// thread; the marker is removed when the job ends either way.
fn spawn_worker(
    sync: &SyncNamespace,
    template: &str,
    machine: &str,
    job: &str,
    stages: usize,
    origin: Instant,
    tx: mpsc::Sender<WorkerReport>,
) -> Result<bool, RealError> {
    let busy = sync.busy_file(machine);
    if !create_marker(&busy)? {
        return Ok(false);
    }
    let sync = sync.clone();
    let template = template.to_string();
    let machine = machine.to_string();
    let job = job.to_string();
    thread::spawn(move || {
        let mut records = Vec::new();
        let mut failed = false;
        for q in 1..=stages {
            let op = OpRef::new(job.clone(), q);
            let start = origin.elapsed().as_millis() as Millis;
            let cmd = render_command(&template, &op, &sync.run_id, &machine);
            if run_shell(&cmd).is_err() {
                let _ = create_marker(&sync.failed_file(&op));
                failed = true;
                break;
            }
            records.push(OpRecord {
                op,
                machine: machine.clone(),
                start,
                end: origin.elapsed().as_millis() as Millis,
            });
        }
        if !failed {
            let _ = create_marker(&sync.complete_file(&job));
        }
        let _ = fs::remove_file(&busy);
        let _ = tx.send(WorkerReport { job, records, failed });
    });
    Ok(true)
}

fn real(
    instance: &WorkloadInstance,
    poll_ms: Millis,
    sync: &SyncNamespace,
    template: &str,
) -> Result<DynamicOutcome, DynamicError> {
    if instance.machines.is_empty() && !instance.jobs.is_empty() {
        return Err(DynamicError::NoMachines);
    }
    let run_dir = sync.run_dir();
    sync.ensure().map_err(|err| RealError::Io {
        path: run_dir,
        err,
    })?;
    let origin = Instant::now();
    let (tx, rx) = mpsc::channel();
    let mut assignment = Vec::new();
    let poll = Duration::from_millis(poll_ms.max(1));
    for job in &instance.jobs {
        'find: loop {
            for m in &instance.machines {
                if sync.busy_file(&m.id).exists() {
                    continue;
                }
                if spawn_worker(sync, template, &m.id, &job.id, job.stages, origin, tx.clone())? {
                    assignment.push((job.id.clone(), m.id.clone()));
                    break 'find;
                }
            }
            thread::sleep(poll);
        }
    }
    drop(tx);
    let mut records = Vec::new();
    let mut failed_jobs = Vec::new();
    for report in rx {
        records.extend(report.records);
        if report.failed {
            failed_jobs.push(report.job);
        }
    }
    failed_jobs.sort();
    let mut trace = ExecutionTrace::from_records(
        records,
        instance.machines.iter().map(|m| m.id.clone()).collect(),
    );
    trace.makespan = trace.makespan.max(origin.elapsed().as_millis() as Millis);
    Ok(DynamicOutcome {
        trace,
        assignment,
        failed_jobs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example_instance, Job, Machine, TimeMatrix};
    use crate::solver::brute_force_oracle;

    fn sim(inst: &WorkloadInstance, poll: Millis) -> DynamicOutcome {
        dynamic_run(inst, poll, &Backend::Simulated(Perturbation::none())).unwrap()
    }

    fn identical(n: usize, m: usize, k: usize, t: Millis) -> WorkloadInstance {
        let jobs: Vec<Job> = (0..n).map(|i| Job::new(format!("J{i}"), k)).collect();
        let machines: Vec<Machine> = (0..m).map(|i| Machine::new(format!("m{i}"), "x")).collect();
        let mut tm = TimeMatrix::new();
        for j in &jobs {
            for q in 1..=k {
                for mc in &machines {
                    tm.insert(&j.id, q, &mc.id, t);
                }
            }
        }
        WorkloadInstance { jobs, machines, times: tm }
    }

    #[test]
    fn example_is_no_better_than_optimum() {
        let inst = example_instance();
        let out = sim(&inst, 0);
        assert!(out.trace.makespan >= brute_force_oracle(&inst).unwrap());
        // J1->m1 (9), J2->m2 (10), J3->m3 (12)
        assert_eq!(out.trace.makespan, 12000);
        assert_eq!(out.trace.violations(), (0, 0));
    }

    #[test]
    fn single_job_takes_first_machine() {
        let mut inst = example_instance();
        inst.jobs.truncate(1);
        let mut tm = TimeMatrix::new();
        for (j, q, m, t) in inst.times.iter().filter(|e| e.0 == "J1") {
            tm.insert(j, q, m, t);
        }
        inst.times = tm;
        let out = sim(&inst, 0);
        assert_eq!(out.assignment, vec![("J1".to_string(), "m1".to_string())]);
        assert_eq!(out.trace.makespan, 9000);
    }

    #[test]
    fn identical_jobs_spread_one_per_machine() {
        let out = sim(&identical(3, 3, 2, 2500), 30_000);
        let machines: Vec<&str> = out.assignment.iter().map(|(_, m)| m.as_str()).collect();
        assert_eq!(machines, vec!["m0", "m1", "m2"]);
        assert_eq!(out.trace.makespan, 5000);
    }

    #[test]
    fn polling_delays_dispatch_to_interval_multiples() {
        // one machine, two 2 s jobs, 3 s poll: second job starts at 3 s
        let out = sim(&identical(2, 1, 1, 2000), 3000);
        assert_eq!(out.trace.records[1].start, 3000);
        assert_eq!(out.trace.makespan, 5000);
        let out = sim(&identical(2, 1, 1, 2000), 0);
        assert_eq!(out.trace.makespan, 4000);
    }

    #[test]
    fn empty_job_list() {
        let mut inst = example_instance();
        inst.jobs.clear();
        inst.times = TimeMatrix::new();
        let out = sim(&inst, 0);
        assert_eq!(out.trace.makespan, 0);
        assert!(out.trace.records.is_empty());
    }

    #[cfg(unix)]
    #[test]
    fn real_backend_runs_and_reports_failures() {
        let dir = tempfile::tempdir().unwrap();
        let inst = identical(3, 2, 2, 1000);
        let backend = Backend::Real {
            sync: SyncNamespace::new(dir.path(), "dyn"),
            command_template: "test {job} != J1".into(),
        };
        let out = dynamic_run(&inst, 5, &backend).unwrap();
        assert_eq!(out.assignment.len(), 3);
        assert_eq!(out.failed_jobs, vec!["J1".to_string()]);
        assert!(out.is_partial());
        assert_eq!(out.trace.records.len(), 4);
        assert!(dir.path().join("dyn/J1.1.failed").exists());
        assert!(dir.path().join("dyn/J0.complete").exists());
        assert!(!dir.path().join("dyn/m0.busy").exists());
    }
}
