//! Exhaustive reference solver for tiny instances.
//!
//! Enumerates every machine assignment combined with every interleaving of
//! job operations, appending each operation at its earliest feasible time.
//! Identical partial states are memoized; nothing is pruned by bounds.

use std::collections::HashMap;

use crate::model::{validate_instance, Millis, WorkloadInstance};

pub const ORACLE_MAX_OPERATIONS: usize = 9;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle size limit: {ops} operations exceeds {max}")]
    SizeLimit { ops: usize, max: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

pub fn brute_force_oracle(instance: &WorkloadInstance) -> Result<Millis, OracleError> {
    let ops = instance.operation_count();
    if ops > ORACLE_MAX_OPERATIONS {
        return Err(OracleError::SizeLimit {
            ops,
            max: ORACLE_MAX_OPERATIONS,
        });
    }
    let report = validate_instance(instance);
    if !report.is_ok() {
        return Err(OracleError::InvalidInstance(report.to_string()));
    }
    let k = instance.stages();
    // t[j][q][m] in instance order
    let t: Vec<Vec<Vec<Millis>>> = instance
        .jobs
        .iter()
        .map(|j| {
            (1..=k)
                .map(|q| {
                    instance
                        .machines
                        .iter()
                        .map(|m| instance.times.get(&j.id, q, &m.id).unwrap())
                        .collect()
                })
                .collect()
        })
        .collect();
    let n = instance.jobs.len();
    let m = instance.machines.len();
    let mut state = State {
        next: vec![0; n],
        job_ready: vec![0; n],
        mach_ready: vec![0; m],
    };
    let mut memo = HashMap::new();
    Ok(explore(&t, k, &mut state, &mut memo))
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    next: Vec<usize>,
    job_ready: Vec<Millis>,
    mach_ready: Vec<Millis>,
}

fn explore(
    t: &[Vec<Vec<Millis>>],
    k: usize,
    state: &mut State,
    memo: &mut HashMap<State, Millis>,
) -> Millis {
    if let Some(&v) = memo.get(state) {
        return v;
    }
    let mut best: Option<Millis> = None;
    for j in 0..t.len() {
        let q = state.next[j];
        if q == k {
            continue;
        }
        for m in 0..state.mach_ready.len() {
            let saved = (state.job_ready[j], state.mach_ready[m]);
            let end = saved.0.max(saved.1) + t[j][q][m];
            state.next[j] += 1;
            state.job_ready[j] = end;
            state.mach_ready[m] = end;
            let v = explore(t, k, state, memo);
            state.next[j] -= 1;
            state.job_ready[j] = saved.0;
            state.mach_ready[m] = saved.1;
            best = Some(best.map_or(v, |b| b.min(v)));
        }
    }
    // leaf: everything scheduled; the makespan is the latest machine release
    let v = best.unwrap_or_else(|| state.mach_ready.iter().copied().max().unwrap_or(0));
    memo.insert(state.clone(), v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example_instance, Job, Machine, TimeMatrix};

    #[test]
    fn example_optimum_is_eight() {
        assert_eq!(brute_force_oracle(&example_instance()), Ok(8000));
    }

    #[test]
    fn single_job_chain() {
        let mut tm = TimeMatrix::new();
        tm.insert("J", 1, "a", 5000);
        tm.insert("J", 1, "b", 2000);
        tm.insert("J", 2, "a", 4000);
        tm.insert("J", 2, "b", 9000);
        let inst = WorkloadInstance {
            jobs: vec![Job::new("J", 2)],
            machines: vec![Machine::new("a", "x"), Machine::new("b", "x")],
            times: tm,
        };
        assert_eq!(brute_force_oracle(&inst), Ok(6000));
    }

    #[test]
    fn ten_operations_exceed_the_cap() {
        let mut tm = TimeMatrix::new();
        for q in 1..=5 {
            tm.insert("A", q, "m", 1000);
            tm.insert("B", q, "m", 1000);
        }
        let inst = WorkloadInstance {
            jobs: vec![Job::new("A", 5), Job::new("B", 5)],
            machines: vec![Machine::new("m", "x")],
            times: tm,
        };
        assert_eq!(
            brute_force_oracle(&inst),
            Err(OracleError::SizeLimit { ops: 10, max: 9 })
        );
    }
}
