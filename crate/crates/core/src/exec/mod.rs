//! Plan execution: a discrete-event simulator, a shared-filesystem backend,
//! and the dynamic master-worker baseline.

mod dynamic;
mod perturb;
mod real;
mod sim;
mod trace;

pub use dynamic::{dynamic_run, Backend, DynamicError, DynamicOutcome, DEFAULT_POLL_MS};
pub use perturb::{PerturbError, PerturbKind, Perturbation};
pub use real::{
    create_marker, epoch_ms, execute_real, render_command, MachineTrace, RealError, RealOptions,
    RealRecord, SyncNamespace, DEFAULT_WAIT_POLL_MS, DEFAULT_WAIT_TIMEOUT_MS,
};
pub use sim::{simulate, SimError};
pub use trace::{
    format_hundredths, relative_error, relative_error_hundredths, render_summary, DomainError,
    ExecutionTrace, MachineUsage, OpRecord, TraceSummary,
};
