use serde::{Deserialize, Serialize};

use crate::exec::{render_summary, MachineTrace, Perturbation, TraceSummary};
use crate::model::Millis;
use crate::plan::Strategy;
use crate::solver::SolveStatus;

/// Machine-readable outcome of `run` and `dynamic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub strategy: Strategy,
    /// `simulated` or `real`.
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    pub summary: TraceSummary,
    /// Relative error in percent, truncated to two decimals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<String>,
    /// Wall-clock detail per machine (real backend).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub machine_traces: Vec<MachineTrace>,
    /// (job, machine) in dispatch order (dynamic strategy).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assignment: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_jobs: Vec<String>,
}

impl RunReport {
    pub fn render(&self) -> String {
        let strategy = match self.strategy {
            Strategy::Fjsp => "fjsp",
            Strategy::Greedy => "greedy",
            Strategy::Dynamic => "dynamic",
        };
        let mut out = format!(
            "run: {}\nstrategy: {strategy}\nbackend: {}\n",
            self.run_id, self.backend
        );
        out.push_str(&render_summary(&self.summary));
        for (job, machine) in &self.assignment {
            out.push_str(&format!("assigned {job} -> {machine}\n"));
        }
        if !self.failed_jobs.is_empty() {
            out.push_str(&format!("failed jobs: {}\n", self.failed_jobs.join(", ")));
        }
        out
    }
}

/// One comparison trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub trial: usize,
    pub jobs: usize,
    pub machines: usize,
    pub stages: usize,
    pub greedy_ms: Millis,
    pub dynamic_ms: Millis,
    pub fjsp_ms: Millis,
    pub fjsp_status: SolveStatus,
    /// greedy / fjsp
    pub speedup_vs_greedy: f64,
    /// dynamic / fjsp
    pub speedup_vs_dynamic: f64,
}

/// `other / fjsp`, rounded to four decimals; 1 when both are zero.
pub fn speedup(other: Millis, fjsp: Millis) -> f64 {
    if fjsp == 0 {
        return if other == 0 { 1.0 } else { f64::INFINITY };
    }
    (other as f64 / fjsp as f64 * 1e4).round() / 1e4
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record([
        "trial",
        "jobs",
        "machines",
        "stages",
        "greedy_ms",
        "dynamic_ms",
        "fjsp_ms",
        "fjsp_status",
        "speedup_vs_greedy",
        "speedup_vs_dynamic",
    ])
    .expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn render_compare(rows: &[CompareRow]) -> String {
    let mut out = format!(
        "{:>5} {:>9} {:>10} {:>10} {:>10} {:>9} {:>9} {:>9}\n",
        "trial", "shape", "greedy_ms", "dynamic_ms", "fjsp_ms", "status", "x_greedy", "x_dynamic"
    );
    for r in rows {
        let status = match r.fjsp_status {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::InfeasibleBudget => "budget",
        };
        out.push_str(&format!(
            "{:>5} {:>9} {:>10} {:>10} {:>10} {:>9} {:>9.3} {:>9.3}\n",
            r.trial,
            format!("{}x{}x{}", r.jobs, r.machines, r.stages),
            r.greedy_ms,
            r.dynamic_ms,
            r.fjsp_ms,
            status,
            r.speedup_vs_greedy,
            r.speedup_vs_dynamic
        ));
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let g = rows.iter().map(|r| r.speedup_vs_greedy).sum::<f64>() / n;
        let d = rows.iter().map(|r| r.speedup_vs_dynamic).sum::<f64>() / n;
        out.push_str(&format!("mean speedup: {g:.3}x vs greedy, {d:.3}x vs dynamic\n"));
    }
    out
}
