//! Makespan minimization for flexible job shop instances.
//!
//! [`solve`] runs either an exact branch-and-bound or a dispatch + local
//! search heuristic; [`brute_force_oracle`] is an independent exhaustive
//! reference used in tests.

mod bnb;
mod heuristic;
mod oracle;
mod problem;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{validate_instance, Millis, Optimality, Report, Schedule, WorkloadInstance};
use problem::Problem;

pub use oracle::{brute_force_oracle, OracleError, ORACLE_MAX_OPERATIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Exact,
    Heuristic,
    /// Exact when the instance has at most `exact_cutoff` operations.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub time_limit_ms: u64,
    pub mode: SolveMode,
    pub seed: u64,
    pub exact_cutoff: usize,
    /// Perturb-and-descend rounds after the first local search.
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit_ms: 60_000,
            mode: SolveMode::Auto,
            seed: 0,
            exact_cutoff: 12,
            restarts: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    /// No schedule was built within the budget. Dispatch always completes,
    /// so the current strategies never report this.
    InfeasibleBudget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverResult {
    pub schedule: Schedule,
    pub status: SolveStatus,
    pub explored_nodes: u64,
    pub lower_bound: Millis,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("invalid instance: {0}")]
    InvalidInstance(Report),
    #[error("time_limit_ms must be positive")]
    ZeroTimeLimit,
}

/// `max(longest chain under per-stage minima, ceil(total minimum work / M))`.
pub fn lower_bound(instance: &WorkloadInstance) -> Millis {
    let chain = crate::model::chain_lower_bound(instance);
    let m = instance.machines.len() as Millis;
    if m == 0 {
        return chain;
    }
    let work: Millis = instance
        .jobs
        .iter()
        .flat_map(|j| (1..=j.stages).map(move |q| (j, q)))
        .map(|(j, q)| {
            instance
                .machines
                .iter()
                .filter_map(|mc| instance.times.get(&j.id, q, &mc.id))
                .min()
                .unwrap_or(0)
        })
        .sum();
    chain.max(work.div_ceil(m))
}

pub fn solve(instance: &WorkloadInstance, config: &SolverConfig) -> Result<SolverResult, SolveError> {
    if config.time_limit_ms == 0 {
        return Err(SolveError::ZeroTimeLimit);
    }
    let report = validate_instance(instance);
    if !report.is_ok() {
        return Err(SolveError::InvalidInstance(report));
    }
    let deadline = Instant::now() + Duration::from_millis(config.time_limit_ms);
    let p = Problem::new(instance);
    let root_bound = lower_bound(instance);
    let exact = match config.mode {
        SolveMode::Exact => true,
        SolveMode::Heuristic => false,
        SolveMode::Auto => p.n_ops() <= config.exact_cutoff,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let restarts = if exact { config.restarts.min(3) } else { config.restarts };
    let ls = heuristic::local_search(&p, &mut rng, restarts, deadline);
    let mut nodes = ls.evaluations;

    let (sequence, makespan, proven) = if exact {
        let out = bnb::branch_and_bound(&p, ls.sequence, ls.makespan, root_bound, deadline);
        nodes += out.nodes;
        (out.sequence, out.makespan, out.complete || out.makespan <= root_bound)
    } else {
        let proven = ls.makespan <= root_bound;
        (ls.sequence, ls.makespan, proven)
    };

    let decoded = p.decode(&sequence);
    debug_assert_eq!(decoded.makespan, makespan);
    let mut schedule = p.to_schedule(&decoded.placed);
    let (status, bound) = if proven {
        (SolveStatus::Optimal, makespan)
    } else {
        (SolveStatus::Feasible, root_bound)
    };
    schedule.optimality = match status {
        SolveStatus::Optimal => Optimality::Optimal,
        _ => Optimality::Feasible,
    };
    schedule.lower_bound = bound;
    Ok(SolverResult {
        schedule,
        status,
        explored_nodes: nodes,
        lower_bound: bound,
    })
}
