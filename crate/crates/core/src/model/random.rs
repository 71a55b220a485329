//! Seeded random instances for tests and comparison runs.

use rand::Rng;

use super::{Job, Machine, Millis, TimeMatrix, WorkloadInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomShape {
    pub jobs: usize,
    pub machines: usize,
    pub stages: usize,
    /// Inclusive duration range in whole seconds.
    pub min_secs: u64,
    pub max_secs: u64,
}

impl RandomShape {
    pub fn new(jobs: usize, machines: usize, stages: usize) -> Self {
        Self {
            jobs,
            machines,
            stages,
            min_secs: 1,
            max_secs: 9,
        }
    }
}

/// Draws an instance with job ids `J1..`, machine ids `m1..` and every
/// duration uniform over `min_secs..=max_secs` seconds.
pub fn random_instance<R: Rng + ?Sized>(shape: RandomShape, rng: &mut R) -> WorkloadInstance {
    let jobs: Vec<Job> = (1..=shape.jobs)
        .map(|i| Job::new(format!("J{i}"), shape.stages))
        .collect();
    let machines: Vec<Machine> = (1..=shape.machines)
        .map(|k| Machine::new(format!("m{k}"), "default"))
        .collect();
    let mut times = TimeMatrix::new();
    for j in &jobs {
        for q in 1..=shape.stages {
            for m in &machines {
                let secs: Millis = rng.random_range(shape.min_secs..=shape.max_secs);
                times.insert(&j.id, q, &m.id, secs * 1000);
            }
        }
    }
    WorkloadInstance {
        jobs,
        machines,
        times,
    }
}
