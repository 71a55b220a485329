use std::collections::BTreeMap;

use crate::model::{Millis, OpRef, Schedule, ScheduledOp, WorkloadInstance};

/// Dense, index-based view of a validated instance. Jobs and machines are
/// sorted by id so index order is the lexicographic tie-break order.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub jobs: Vec<String>,
    pub machines: Vec<String>,
    pub stages: usize,
    times: Vec<Millis>,
    /// `suffix_min[j * (K + 1) + q]` = sum of per-stage minima for stages q..K (0-based).
    suffix_min: Vec<Millis>,
}

impl Problem {
    pub fn new(instance: &WorkloadInstance) -> Self {
        let mut jobs: Vec<String> = instance.jobs.iter().map(|j| j.id.clone()).collect();
        let mut machines: Vec<String> = instance.machines.iter().map(|m| m.id.clone()).collect();
        jobs.sort();
        machines.sort();
        let stages = instance.stages();
        let mut times = Vec::with_capacity(jobs.len() * stages * machines.len());
        for j in &jobs {
            for q in 1..=stages {
                for m in &machines {
                    times.push(
                        instance
                            .times
                            .get(j, q, m)
                            .expect("instance was validated"),
                    );
                }
            }
        }
        let mut p = Self {
            jobs,
            machines,
            stages,
            times,
            suffix_min: Vec::new(),
        };
        let mut suffix = vec![0; p.jobs.len() * (stages + 1)];
        for j in 0..p.jobs.len() {
            for q in (0..stages).rev() {
                suffix[j * (stages + 1) + q] = suffix[j * (stages + 1) + q + 1] + p.min_time(j, q);
            }
        }
        p.suffix_min = suffix;
        p
    }

    pub fn n_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn n_machines(&self) -> usize {
        self.machines.len()
    }

    pub fn n_ops(&self) -> usize {
        self.jobs.len() * self.stages
    }

    /// Duration of 0-based stage `q` of job `j` on machine `m`.
    #[inline]
    pub fn time(&self, j: usize, q: usize, m: usize) -> Millis {
        self.times[(j * self.stages + q) * self.machines.len() + m]
    }

    pub fn min_time(&self, j: usize, q: usize) -> Millis {
        (0..self.n_machines())
            .map(|m| self.time(j, q, m))
            .min()
            .unwrap_or(0)
    }

    /// Sum of per-stage minima over stages `q..K` of job `j`.
    #[inline]
    pub fn remaining_min(&self, j: usize, q: usize) -> Millis {
        self.suffix_min[j * (self.stages + 1) + q]
    }

    pub fn total_min_work(&self) -> Millis {
        (0..self.n_jobs()).map(|j| self.remaining_min(j, 0)).sum()
    }

    /// Appends operations in sequence order; each is placed at the earliest
    /// time both its job and its machine are free.
    pub fn decode(&self, seq: &[(usize, usize)]) -> Decoded {
        let mut next = vec![0usize; self.n_jobs()];
        let mut job_ready = vec![0; self.n_jobs()];
        let mut mach_ready = vec![0; self.n_machines()];
        let mut placed = Vec::with_capacity(seq.len());
        let mut makespan = 0;
        for &(j, m) in seq {
            let q = next[j];
            next[j] += 1;
            let start = job_ready[j].max(mach_ready[m]);
            let end = start + self.time(j, q, m);
            job_ready[j] = end;
            mach_ready[m] = end;
            makespan = makespan.max(end);
            placed.push(Placed { job: j, stage: q, machine: m, start });
        }
        Decoded { placed, makespan }
    }

    pub fn to_schedule(&self, placed: &[Placed]) -> Schedule {
        let mut a: BTreeMap<String, Vec<ScheduledOp>> = self
            .machines
            .iter()
            .map(|m| (m.clone(), Vec::new()))
            .collect();
        for p in placed {
            a.get_mut(&self.machines[p.machine])
                .expect("known machine")
                .push(ScheduledOp {
                    op: OpRef::new(self.jobs[p.job].clone(), p.stage + 1),
                    start: p.start,
                    duration: self.time(p.job, p.stage, p.machine),
                });
        }
        Schedule::from_assignments(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Placed {
    pub job: usize,
    pub stage: usize,
    pub machine: usize,
    pub start: Millis,
}

#[derive(Debug, Clone)]
pub(crate) struct Decoded {
    pub placed: Vec<Placed>,
    pub makespan: Millis,
}
