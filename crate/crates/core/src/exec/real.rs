//! Shared-filesystem backend: runs one machine's plan, launching a shell
//! command per EXEC and synchronizing with peers through marker files.
//!
//! Layout under `<root>/<run_id>/`:
//! - `<job>.<stage>.done`: SIGNAL(job, stage); stage-1 finished.
//! - `<job>.<stage>.failed`: that stage will never complete.
//! - `<job>.complete`: the job's last stage finished.
//! - `<machine>.busy`: a dynamic-strategy worker is running on the machine.

use std::fs::{self, OpenOptions};
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::model::{ExecutionPlan, Millis, OpRef, PlanStatement};

pub const DEFAULT_WAIT_POLL_MS: u64 = 1_000;
pub const DEFAULT_WAIT_TIMEOUT_MS: u64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncNamespace {
    pub root: PathBuf,
    pub run_id: String,
}

impl SyncNamespace {
    pub fn new(root: impl Into<PathBuf>, run_id: impl Into<String>) -> Self {
        Self {
            root: root.into(),
            run_id: run_id.into(),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.root.join(&self.run_id)
    }

    pub fn done_file(&self, op: &OpRef) -> PathBuf {
        self.run_dir().join(format!("{}.{}.done", op.job, op.stage))
    }

    pub fn failed_file(&self, op: &OpRef) -> PathBuf {
        self.run_dir().join(format!("{}.{}.failed", op.job, op.stage))
    }

    pub fn complete_file(&self, job: &str) -> PathBuf {
        self.run_dir().join(format!("{job}.complete"))
    }

    pub fn busy_file(&self, machine: &str) -> PathBuf {
        self.run_dir().join(format!("{machine}.busy"))
    }

    pub fn ensure(&self) -> io::Result<()> {
        fs::create_dir_all(self.run_dir())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RealError {
    #[error("stage {op} failed: {reason}")]
    StageFailed { op: OpRef, reason: String },
    #[error("timed out waiting for {0}")]
    WaitTimeout(OpRef),
    #[error("upstream stage of {0} failed")]
    UpstreamFailed(OpRef),
    #[error("duplicate signal: {} already exists", .0.display())]
    DuplicateSignal(PathBuf),
    #[error("{}: {err}", .path.display())]
    Io { path: PathBuf, err: io::Error },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> RealError + '_ {
    move |err| RealError::Io {
        path: path.to_path_buf(),
        err,
    }
}

pub fn epoch_ms() -> Millis {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as Millis)
        .unwrap_or(0)
}

/// Atomically creates an empty marker; `Ok(false)` if it already exists.
pub fn create_marker(path: &Path) -> Result<bool, RealError> {
    match OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(_) => Ok(true),
        Err(e) if e.kind() == ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(io_at(path)(e)),
    }
}

/// Fills `{job}`, `{stage}`, `{run_id}` and `{machine}` in a command template.
pub fn render_command(template: &str, op: &OpRef, run_id: &str, machine: &str) -> String {
    template
        .replace("{job}", &op.job)
        .replace("{stage}", &op.stage.to_string())
        .replace("{run_id}", run_id)
        .replace("{machine}", machine)
}

/// Runs a rendered command through the platform shell.
pub fn run_shell(command: &str) -> Result<(), String> {
    let status = shell(command)
        .stdin(Stdio::null())
        .status()
        .map_err(|e| format!("cannot launch shell: {e}"))?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("command `{command}` exited with {status}"))
    }
}

#[cfg(unix)]
fn shell(command: &str) -> Command {
    let mut c = Command::new("sh");
    c.arg("-c").arg(command);
    c
}

#[cfg(windows)]
fn shell(command: &str) -> Command {
    let mut c = Command::new("cmd");
    c.arg("/C").arg(command);
    c
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealRecord {
    pub op: OpRef,
    pub start_epoch_ms: Millis,
    pub end_epoch_ms: Millis,
}

/// Wall-clock trace of one machine's plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineTrace {
    pub machine: String,
    pub begin_epoch_ms: Millis,
    pub end_epoch_ms: Millis,
    pub records: Vec<RealRecord>,
    /// (operand, creation time) per SIGNAL issued.
    pub signals: Vec<(OpRef, Millis)>,
}

impl MachineTrace {
    /// `endTime - beginTime`.
    pub fn makespan(&self) -> Millis {
        self.end_epoch_ms.saturating_sub(self.begin_epoch_ms)
    }
}

#[derive(Debug, Clone)]
pub struct RealOptions {
    pub command_template: String,
    pub wait_poll_ms: u64,
    pub wait_timeout_ms: u64,
}

impl RealOptions {
    pub fn new(command_template: impl Into<String>) -> Self {
        Self {
            command_template: command_template.into(),
            wait_poll_ms: DEFAULT_WAIT_POLL_MS,
            wait_timeout_ms: DEFAULT_WAIT_TIMEOUT_MS,
        }
    }
}

/// Whether the EXEC at `idx` is the last stage of its job in this plan: it
/// is followed neither by SIGNAL(job, q+1) nor by EXEC(job, q+1).
fn is_terminal(statements: &[PlanStatement], idx: usize) -> bool {
    let PlanStatement::Exec(op) = &statements[idx] else {
        return false;
    };
    match statements.get(idx + 1) {
        Some(PlanStatement::Signal(n)) | Some(PlanStatement::Exec(n)) => {
            !(n.job == op.job && n.stage == op.stage + 1)
        }
        _ => true,
    }
}

/// Interprets one plan against the shared directory. On any abort, every
/// EXEC from the failing point on gets a `.failed` marker so that peers
/// waiting on those stages stop instead of timing out.
pub fn execute_real(
    plan: &ExecutionPlan,
    sync: &SyncNamespace,
    opts: &RealOptions,
) -> Result<MachineTrace, RealError> {
    let run_dir = sync.run_dir();
    sync.ensure().map_err(io_at(&run_dir))?;
    let mut trace = MachineTrace {
        machine: plan.machine_id.clone(),
        begin_epoch_ms: epoch_ms(),
        end_epoch_ms: 0,
        records: Vec::new(),
        signals: Vec::new(),
    };
    let st = &plan.statements;
    // a leftover signal means the run id was reused; stop before running anything
    for s in st {
        if let PlanStatement::Signal(op) = s {
            let path = sync.done_file(op);
            if path.exists() {
                return Err(RealError::DuplicateSignal(path));
            }
        }
    }
    for (i, s) in st.iter().enumerate() {
        let step = match s {
            PlanStatement::Begin => {
                trace.begin_epoch_ms = epoch_ms();
                Ok(())
            }
            PlanStatement::End => {
                trace.end_epoch_ms = epoch_ms();
                Ok(())
            }
            PlanStatement::Wait(op) => wait_for(sync, op, opts),
            PlanStatement::Exec(op) => {
                let start = epoch_ms();
                let cmd = render_command(&opts.command_template, op, &sync.run_id, &plan.machine_id);
                match run_shell(&cmd) {
                    Ok(()) => {
                        trace.records.push(RealRecord {
                            op: op.clone(),
                            start_epoch_ms: start,
                            end_epoch_ms: epoch_ms(),
                        });
                        if is_terminal(st, i) {
                            create_marker(&sync.complete_file(&op.job)).map(|_| ())
                        } else {
                            Ok(())
                        }
                    }
                    Err(reason) => Err(RealError::StageFailed {
                        op: op.clone(),
                        reason,
                    }),
                }
            }
            PlanStatement::Signal(op) => {
                let path = sync.done_file(op);
                // stamped before creation: peers can only observe the file later
                let at = epoch_ms();
                match create_marker(&path) {
                    Ok(true) => {
                        trace.signals.push((op.clone(), at));
                        Ok(())
                    }
                    Ok(false) => Err(RealError::DuplicateSignal(path)),
                    Err(e) => Err(e),
                }
            }
        };
        if let Err(e) = step {
            fail_remaining(sync, st, i);
            return Err(e);
        }
    }
    if trace.end_epoch_ms == 0 {
        trace.end_epoch_ms = epoch_ms();
    }
    Ok(trace)
}

fn wait_for(sync: &SyncNamespace, op: &OpRef, opts: &RealOptions) -> Result<(), RealError> {
    let done = sync.done_file(op);
    let upstream_failed = (op.stage > 1)
        .then(|| sync.failed_file(&OpRef::new(op.job.clone(), op.stage - 1)));
    let started = Instant::now();
    let timeout = Duration::from_millis(opts.wait_timeout_ms);
    let poll = Duration::from_millis(opts.wait_poll_ms.max(1));
    loop {
        if done.exists() {
            return Ok(());
        }
        if upstream_failed.as_ref().is_some_and(|f| f.exists()) {
            return Err(RealError::UpstreamFailed(op.clone()));
        }
        let elapsed = started.elapsed();
        if elapsed >= timeout {
            return Err(RealError::WaitTimeout(op.clone()));
        }
        thread::sleep(poll.min(timeout - elapsed));
    }
}

fn fail_remaining(sync: &SyncNamespace, statements: &[PlanStatement], from: usize) {
    let mut pending: Vec<&OpRef> = Vec::new();
    // a failed WAIT means its EXEC never runs
    if let Some(PlanStatement::Wait(op)) = statements.get(from) {
        pending.push(op);
    }
    for s in &statements[from..] {
        if let PlanStatement::Exec(op) = s {
            pending.push(op);
        }
    }
    for op in pending {
        // best effort: the original error is what gets reported
        let _ = create_marker(&sync.failed_file(op));
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::model::parse_plan;

    fn opts(template: &str) -> RealOptions {
        RealOptions {
            command_template: template.into(),
            wait_poll_ms: 10,
            wait_timeout_ms: 100,
        }
    }

    #[test]
    fn single_exec_and_signal() {
        let dir = tempfile::tempdir().unwrap();
        let sync = SyncNamespace::new(dir.path(), "r");
        let plan = parse_plan("m1", "BEGIN\nEXEC j1.1\nSIGNAL j1.2\nEND\n").unwrap();
        let t = execute_real(&plan, &sync, &opts("sleep 0.2")).unwrap();
        assert_eq!(t.records.len(), 1);
        let d = t.records[0].end_epoch_ms - t.records[0].start_epoch_ms;
        assert!((180..2000).contains(&d), "{d}");
        assert!(dir.path().join("r/j1.2.done").exists());
        assert!(t.makespan() >= d);
    }

    #[test]
    fn wait_times_out_naming_operand() {
        let dir = tempfile::tempdir().unwrap();
        let sync = SyncNamespace::new(dir.path(), "r");
        let plan = parse_plan("m2", "BEGIN\nWAIT j1.2\nEXEC j1.2\nEND\n").unwrap();
        let err = execute_real(&plan, &sync, &opts("true")).unwrap_err();
        assert!(matches!(&err, RealError::WaitTimeout(o) if *o == OpRef::new("j1", 2)));
        assert!(err.to_string().contains("j1.2"));
        assert!(dir.path().join("r/j1.2.failed").exists());
    }

    #[test]
    fn failed_stage_marks_downstream() {
        let dir = tempfile::tempdir().unwrap();
        let sync = SyncNamespace::new(dir.path(), "r");
        let a = parse_plan("a", "BEGIN\nEXEC j.1\nSIGNAL j.2\nEND\n").unwrap();
        let err = execute_real(&a, &sync, &opts("exit 3")).unwrap_err();
        assert!(matches!(err, RealError::StageFailed { .. }));
        assert!(dir.path().join("r/j.1.failed").exists());
        assert!(!dir.path().join("r/j.2.done").exists());

        let b = parse_plan("b", "BEGIN\nWAIT j.2\nEXEC j.2\nEND\n").unwrap();
        let mut o = opts("true");
        o.wait_timeout_ms = 60_000;
        let err = execute_real(&b, &sync, &o).unwrap_err();
        assert!(matches!(err, RealError::UpstreamFailed(_)));
    }

    #[test]
    fn rerun_hits_duplicate_signal() {
        let dir = tempfile::tempdir().unwrap();
        let sync = SyncNamespace::new(dir.path(), "r");
        let plan = parse_plan("m1", "BEGIN\nEXEC j.1\nSIGNAL j.2\nWAIT j.2\nEXEC j.2\nEND\n").unwrap();
        execute_real(&plan, &sync, &opts("true")).unwrap();
        assert!(dir.path().join("r/j.complete").exists());
        let err = execute_real(&plan, &sync, &opts("true")).unwrap_err();
        assert!(matches!(err, RealError::DuplicateSignal(_)));
        assert!(err.to_string().contains("duplicate signal"));
    }

    #[test]
    fn template_substitution() {
        let op = OpRef::new("S1", 2);
        assert_eq!(
            render_command("run --job {job} --stage {stage} --run {run_id} on {machine}", &op, "r7", "vm3"),
            "run --job S1 --stage 2 --run r7 on vm3"
        );
    }

    #[test]
    fn terminal_detection() {
        let p = parse_plan("m", "BEGIN\nEXEC a.1\nEXEC a.2\nEXEC b.1\nSIGNAL b.2\nEND\n").unwrap();
        let flags: Vec<bool> = (0..p.statements.len()).map(|i| is_terminal(&p.statements, i)).collect();
        assert_eq!(flags, vec![false, false, true, false, false, false]);
    }
}
