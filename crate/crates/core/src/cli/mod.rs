//! Command-line driver. Every subcommand writes its artifacts under `--out`
//! and is deterministic given its arguments and `--seed`.

mod commands;
mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::model::Millis;
use crate::predictor::{ForestParams, Hyperparams, LassoParams, ModelKind};
use crate::solver::{SolveMode, SolverConfig};

pub use commands::{derive_seed, run};
pub use report::{CompareRow, RunReport};

#[derive(Debug, Parser)]
#[command(name = "pipesched", version, about = "Plan and run multi-stage pipelines on heterogeneous machines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a stage-time model and cross-validate it.
    Train(TrainArgs),
    /// Build per-machine execution plans for a workload.
    Plan(PlanArgs),
    /// Execute a planned run, simulated or for real.
    Run(RunArgs),
    /// Run the master-worker baseline.
    Dynamic(DynamicArgs),
    /// Compare greedy, dynamic and FJSP makespans.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageMode {
    /// K = 1, stage key `full`.
    #[value(name = "one_stage")]
    OneStage,
    /// K = 2, stage keys `align` and `call`.
    #[value(name = "two_stage")]
    TwoStage,
}

impl StageMode {
    pub fn stages(self) -> usize {
        match self {
            Self::OneStage => 1,
            Self::TwoStage => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(name = "tree_ensemble")]
    TreeEnsemble,
    #[value(name = "linear")]
    Linear,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::TreeEnsemble => ModelKind::TreeEnsemble,
            KindArg::Linear => ModelKind::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    #[value(name = "fjsp")]
    Fjsp,
    #[value(name = "greedy")]
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveModeArg {
    #[value(name = "auto")]
    Auto,
    #[value(name = "exact")]
    Exact,
    #[value(name = "heuristic")]
    Heuristic,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Root of every random choice.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// CSV with feature columns plus machine_type,stage,duration_ms.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::TreeEnsemble)]
    pub kind: KindArg,
    /// Cross-validation folds; 0 skips cross-validation.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 10)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_samples_leaf: usize,
    /// Features tried per split [default: ceil(features / 3)].
    #[arg(long)]
    pub max_features: Option<usize>,
    /// Bootstrap sample size as a fraction of the rows.
    #[arg(long, default_value_t = 1.0)]
    pub bootstrap: f64,
    /// L1 penalty of the linear model.
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    /// Model file name inside the output directory.
    #[arg(long, default_value = "model.json")]
    pub model_name: String,
    #[command(flatten)]
    pub common: Common,
}

impl TrainArgs {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            forest: ForestParams {
                trees: self.trees,
                max_depth: self.max_depth,
                bootstrap: self.bootstrap,
                max_features: self.max_features,
                min_samples_leaf: self.min_samples_leaf,
            },
            lasso: LassoParams {
                lambda: self.lambda,
                ..LassoParams::default()
            },
        }
    }
}

/// Where stage times come from.
#[derive(Debug, Clone, Args)]
pub struct WorkloadArgs {
    /// Workload document (TOML).
    #[arg(long)]
    pub workload: PathBuf,
    /// Trained model; replaces any times in the workload by predictions.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Fixes K and names the predictor's stage keys.
    #[arg(long, value_enum)]
    pub stage_mode: Option<StageMode>,
    /// Fill missing job features with training means instead of failing.
    #[arg(long)]
    pub impute_missing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 60_000)]
    pub time_limit_ms: u64,
    #[arg(long, value_enum, default_value_t = SolveModeArg::Auto)]
    pub solver_mode: SolveModeArg,
    /// Largest operation count solved exactly in auto mode.
    #[arg(long, default_value_t = 12)]
    pub exact_cutoff: usize,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
}

impl SolverArgs {
    pub fn config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            time_limit_ms: self.time_limit_ms,
            mode: match self.solver_mode {
                SolveModeArg::Auto => SolveMode::Auto,
                SolveModeArg::Exact => SolveMode::Exact,
                SolveModeArg::Heuristic => SolveMode::Heuristic,
            },
            seed,
            exact_cutoff: self.exact_cutoff,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    #[arg(long, value_enum, default_value_t = StrategyArg::Fjsp)]
    pub strategy: StrategyArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Prefix of every file of this run, and the sync namespace name.
    #[arg(long, default_value = "run")]
    pub run_id: String,
    #[command(flatten)]
    pub common: Common,
}

/// Shared-filesystem execution settings.
#[derive(Debug, Clone, Args)]
pub struct RealArgs {
    /// Shared directory for marker files; selects the real backend.
    #[arg(long)]
    pub sync_root: Option<PathBuf>,
    /// Shell command per EXEC; `{job}`, `{stage}`, `{run_id}` and
    /// `{machine}` are substituted.
    #[arg(long)]
    pub template: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Manifest written by `plan`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// `none`, `uniform:LO:HI` or `lognormal:SIGMA` (simulated backend).
    #[arg(long, default_value = "none")]
    pub perturb: String,
    #[command(flatten)]
    pub real: RealArgs,
    /// Run only this machine's plan (real backend).
    #[arg(long)]
    pub machine: Option<String>,
    #[arg(long, default_value_t = crate::exec::DEFAULT_WAIT_POLL_MS)]
    pub wait_poll_ms: u64,
    #[arg(long, default_value_t = crate::exec::DEFAULT_WAIT_TIMEOUT_MS)]
    pub wait_timeout_ms: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct DynamicArgs {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    /// Master sleep while every machine is busy; 0 reacts immediately.
    #[arg(long, default_value_t = crate::exec::DEFAULT_POLL_MS)]
    pub poll_ms: Millis,
    #[arg(long, default_value = "none")]
    pub perturb: String,
    #[command(flatten)]
    pub real: RealArgs,
    #[arg(long, default_value = "dynamic")]
    pub run_id: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Workload to compare on; without it every trial draws a random instance.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stage_mode: Option<StageMode>,
    #[arg(long)]
    pub impute_missing: bool,
    /// Shape of random instances as JOBS,MACHINES,STAGES.
    #[arg(long, default_value = "5,4,2", value_parser = parse_shape)]
    pub random: (usize, usize, usize),
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Realized-time model applied to every strategy alike.
    #[arg(long, default_value = "none")]
    pub perturb: String,
    /// Master poll interval of the dynamic baseline.
    #[arg(long, default_value_t = 0)]
    pub poll_ms: Millis,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub common: Common,
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize), String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("expected JOBS,MACHINES,STAGES: {e}"))?;
    match v.as_slice() {
        [n, m, k] if *m > 0 && *k > 0 => Ok((*n, *m, *k)),
        _ => Err("expected JOBS,MACHINES,STAGES with MACHINES and STAGES > 0".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn shapes() {
        assert_eq!(parse_shape("3, 2,1"), Ok((3, 2, 1)));
        assert!(parse_shape("3,0,1").is_err());
        assert!(parse_shape("3,2").is_err());
    }

    #[test]
    fn stage_mode_values() {
        let cli = Cli::try_parse_from([
            "pipesched", "plan", "--workload", "w.toml", "--stage-mode", "two_stage", "--out", "o",
        ])
        .unwrap();
        let Command::Plan(p) = cli.command else { panic!() };
        assert_eq!(p.workload.stage_mode.map(StageMode::stages), Some(2));
        assert_eq!(p.common.seed, 0);
        assert_eq!(p.solver.config(5).seed, 5);
    }
}
