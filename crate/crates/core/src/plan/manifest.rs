use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Strategy;
use crate::model::{parse_plan, write_plan, ExecutionPlan, Millis};
use crate::solver::SolveStatus;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{}: {err}", .path.display())]
    Io {
        path: PathBuf,
        err: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |err| ManifestError::Io {
        path: path.to_path_buf(),
        err,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestMachine {
    pub id: String,
    /// Relative to the manifest's directory.
    pub plan_file: String,
}

/// Everything needed to execute or re-simulate a planned run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub strategy: Strategy,
    pub stages: usize,
    /// Workload with the resolved time matrix, relative to the manifest.
    pub workload_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_file: Option<String>,
    pub machines: Vec<ManifestMachine>,
    pub predicted_makespan_ms: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_status: Option<SolveStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound_ms: Option<Millis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<BTreeMap<String, String>>,
}

pub fn plan_file_name(run_id: &str, machine_id: &str) -> String {
    format!("{run_id}.{machine_id}.plan")
}

impl RunManifest {
    pub fn file_name(run_id: &str) -> String {
        format!("{run_id}.manifest.json")
    }

    /// Loads every plan listed in the manifest; `dir` is the manifest's directory.
    pub fn load_plans(&self, dir: &Path) -> Result<Vec<ExecutionPlan>, ManifestError> {
        self.machines
            .iter()
            .map(|m| self.load_plan(dir, &m.id))
            .collect()
    }

    pub fn load_plan(&self, dir: &Path, machine_id: &str) -> Result<ExecutionPlan, ManifestError> {
        let entry = self
            .machines
            .iter()
            .find(|m| m.id == machine_id)
            .ok_or_else(|| ManifestError::Parse {
                path: dir.join(Self::file_name(&self.run_id)),
                msg: format!("machine `{machine_id}` is not part of this run"),
            })?;
        let path = dir.join(&entry.plan_file);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        parse_plan(&entry.id, &text).map_err(|e| ManifestError::Parse {
            path: path.clone(),
            msg: e.to_string(),
        })
    }
}

/// Writes one `<run_id>.<machine>.plan` per plan plus the manifest itself,
/// filling `manifest.machines`. Returns the manifest path.
pub fn write_run(
    dir: &Path,
    manifest: &mut RunManifest,
    plans: &[ExecutionPlan],
) -> Result<PathBuf, ManifestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    manifest.machines.clear();
    for plan in plans {
        let name = plan_file_name(&manifest.run_id, &plan.machine_id);
        let path = dir.join(&name);
        fs::write(&path, write_plan(plan)).map_err(io_err(&path))?;
        manifest.machines.push(ManifestMachine {
            id: plan.machine_id.clone(),
            plan_file: name,
        });
    }
    let path = dir.join(RunManifest::file_name(&manifest.run_id));
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ManifestError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
