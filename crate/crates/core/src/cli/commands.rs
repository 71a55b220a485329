use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::{compare_csv, render_compare, speedup, CompareRow, RunReport};
use super::{Cli, Command, CompareArgs, DynamicArgs, PlanArgs, RealArgs, RunArgs, StrategyArg, TrainArgs, WorkloadArgs};
use crate::exec::{
    dynamic_run, execute_real, format_hundredths, relative_error_hundredths, simulate, Backend,
    ExecutionTrace, MachineTrace, OpRecord, Perturbation, RealError, RealOptions, SyncNamespace,
};
use crate::model::random::{random_instance, RandomShape};
use crate::model::{parse_workload, validate_instance, write_schedule_csv, write_workload, ExecutionPlan, Millis, WorkloadInstance};
use crate::plan::{compile_fjsp_plans, greedy_plans, read_manifest, write_run, RunManifest, Strategy};
use crate::predictor::{build_time_matrix, evaluate_kfold, stage_label, train, Missing};
use crate::solver::solve;
use crate::{PredictorModel, TrainingTable};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Plan(a) => cmd_plan(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Dynamic(a) => cmd_dynamic(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

/// Independent seed for one consumer of the run seed.
pub fn derive_seed(seed: u64, consumer: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in consumer.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn check_run_id(run_id: &str) -> Result<()> {
    if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id.starts_with('.') {
        bail!("invalid run id `{run_id}`");
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    require_file(&a.table, "training table")?;
    if a.trees == 0 || !(a.bootstrap > 0.0 && a.bootstrap.is_finite()) {
        bail!("--trees must be positive and --bootstrap a positive fraction");
    }
    if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
        bail!("--lambda must be finite and >= 0");
    }
    let table = TrainingTable::from_path(&a.table)
        .with_context(|| format!("training table {}", a.table.display()))?;
    let hp = a.hyperparams();
    let kind = a.kind.into();
    let model = train(&table, kind, &hp, derive_seed(a.common.seed, "train"))?;
    let metrics = if a.folds == 0 {
        Vec::new()
    } else {
        evaluate_kfold(&table, kind, &hp, a.folds, derive_seed(a.common.seed, "kfold"))?
    };

    prepare_out(&a.common.out)?;
    let model_path = write(&a.common.out, &a.model_name, &model.to_json())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["machine_type", "stage", "rows", "folds", "r2", "mse_s2", "mae_s"])?;
    let mut text = format!(
        "{:<14} {:<8} {:>5} {:>9} {:>12} {:>10}\n",
        "machine_type", "stage", "rows", "r2", "mse_s2", "mae_s"
    );
    for g in &metrics {
        let m = g.metrics;
        w.write_record([
            g.machine_type.clone(),
            g.stage.clone(),
            g.rows.to_string(),
            g.folds.to_string(),
            m.r2.to_string(),
            m.mse.to_string(),
            m.mae.to_string(),
        ])?;
        text.push_str(&format!(
            "{:<14} {:<8} {:>5} {:>9.4} {:>12.4} {:>10.4}\n",
            g.machine_type, g.stage, g.rows, m.r2, m.mse, m.mae
        ));
    }
    let csv_text = String::from_utf8(w.into_inner()?)?;
    write(&a.common.out, "metrics.csv", &csv_text)?;
    write(&a.common.out, "metrics.json", &json(&metrics))?;
    write(&a.common.out, "metrics.txt", &text)?;
    print!("model: {}\ngroups: {}\n{text}", model_path.display(), model.groups.len());
    Ok(())
}

/// Parses the workload and resolves its time matrix.
fn load_instance(a: &WorkloadArgs) -> Result<WorkloadInstance> {
    require_file(&a.workload, "workload")?;
    if let Some(m) = &a.model {
        require_file(m, "model")?;
    }
    let k = a.stage_mode.map(|s| s.stages());
    let mut inst = parse_workload(&read(&a.workload)?, k)
        .with_context(|| format!("workload {}", a.workload.display()))?;
    if let Some(k) = k {
        if let Some(j) = inst.jobs.iter().find(|j| j.stages != k) {
            bail!("job `{}` has {} stages but the stage mode needs {k}", j.id, j.stages);
        }
    }
    if let Some(path) = &a.model {
        let model = PredictorModel::from_json(&read(path)?)
            .with_context(|| format!("model {}", path.display()))?;
        let kmax = inst.jobs.iter().map(|j| j.stages).max().unwrap_or(0);
        let labels: Vec<String> = (1..=kmax)
            .map(|q| if k.is_some() { stage_label(q, kmax) } else { q.to_string() })
            .collect();
        let missing = if a.impute_missing { Missing::ImputeMean } else { Missing::Error };
        inst.times = build_time_matrix(&model, &inst.jobs, &inst.machines, &labels, missing)?;
    } else if inst.times.is_empty() && !inst.jobs.is_empty() {
        bail!(
            "no time source: {} has no times and no --model was given",
            a.workload.display()
        );
    }
    let report = validate_instance(&inst);
    if !report.is_ok() {
        bail!("invalid workload {}: {report}", a.workload.display());
    }
    Ok(inst)
}

fn cmd_plan(a: &PlanArgs) -> Result<()> {
    check_run_id(&a.run_id)?;
    let inst = load_instance(&a.workload)?;
    prepare_out(&a.common.out)?;
    let out = &a.common.out;
    let workload_file = format!("{}.workload.toml", a.run_id);
    let mut manifest = RunManifest {
        run_id: a.run_id.clone(),
        strategy: Strategy::Fjsp,
        stages: inst.stages(),
        workload_file: workload_file.clone(),
        schedule_file: None,
        machines: Vec::new(),
        predicted_makespan_ms: 0,
        solver_status: None,
        lower_bound_ms: None,
        assignment: None,
    };
    let mut text = format!("run: {}\n", a.run_id);
    let plans = match a.strategy {
        StrategyArg::Fjsp => {
            let cfg = a.solver.config(derive_seed(a.common.seed, "solver"));
            let r = solve(&inst, &cfg)?;
            let plans = compile_fjsp_plans(&inst, &r.schedule)?;
            let schedule_file = format!("{}.schedule.csv", a.run_id);
            write(out, &schedule_file, &write_schedule_csv(&r.schedule))?;
            manifest.schedule_file = Some(schedule_file);
            manifest.predicted_makespan_ms = r.schedule.makespan;
            manifest.solver_status = Some(r.status);
            manifest.lower_bound_ms = Some(r.lower_bound);
            text.push_str(&format!(
                "strategy: fjsp\nsolver status: {}\nlower bound: {} ms\nexplored nodes: {}\n",
                serde_json::to_value(r.status)?.as_str().unwrap_or("?"),
                r.lower_bound,
                r.explored_nodes
            ));
            plans
        }
        StrategyArg::Greedy => {
            let g = greedy_plans(&inst)?;
            manifest.strategy = Strategy::Greedy;
            manifest.predicted_makespan_ms = g.predicted_makespan;
            text.push_str("strategy: greedy\n");
            for (job, machine, w) in &g.order {
                text.push_str(&format!("assigned {job} -> {machine} (W = {w} ms)\n"));
            }
            manifest.assignment = Some(g.assignment);
            g.plans
        }
    };
    write(out, &workload_file, &write_workload(&inst))?;
    let path = write_run(out, &mut manifest, &plans)?;
    text.push_str(&format!(
        "predicted makespan: {} ms\n",
        manifest.predicted_makespan_ms
    ));
    for p in &plans {
        text.push_str(&format!("{}: {} operations\n", p.machine_id, p.execs().count()));
    }
    write(out, &format!("{}.plan-summary.txt", a.run_id), &text)?;
    print!("{text}manifest: {}\n", path.display());
    Ok(())
}

enum Exec<'a> {
    Simulated(Perturbation),
    Real { root: &'a Path, template: &'a str },
}

fn exec_mode<'a>(real: &'a RealArgs, perturb: &str, seed: u64) -> Result<Exec<'a>> {
    match (&real.sync_root, &real.template) {
        (None, None) => Ok(Exec::Simulated(Perturbation::parse(
            perturb,
            derive_seed(seed, "perturb"),
        )?)),
        (Some(root), Some(template)) => {
            if perturb != "none" {
                bail!("--perturb applies to the simulated backend only");
            }
            Ok(Exec::Real { root, template })
        }
        _ => bail!("the real backend needs both --sync-root and --template"),
    }
}

fn write_report(out: &Path, stem: &str, trace: &ExecutionTrace, report: &RunReport) -> Result<()> {
    write(out, &format!("{stem}.trace.csv"), &trace.to_csv())?;
    write(out, &format!("{stem}.summary.json"), &json(report))?;
    let text = report.render();
    write(out, &format!("{stem}.summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn report_for(
    run_id: &str,
    strategy: Strategy,
    trace: &ExecutionTrace,
    predicted: Option<Millis>,
) -> RunReport {
    let summary = trace.summary(predicted);
    let relative_error = predicted
        .and_then(|p| relative_error_hundredths(p, trace.makespan).ok())
        .map(format_hundredths);
    RunReport {
        run_id: run_id.to_string(),
        strategy,
        backend: "simulated".into(),
        perturbation: None,
        summary,
        relative_error,
        machine_traces: Vec::new(),
        assignment: Vec::new(),
        failed_jobs: Vec::new(),
    }
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    require_file(&a.manifest, "manifest")?;
    let manifest = read_manifest(&a.manifest)?;
    let dir = a.manifest.parent().unwrap_or(Path::new("."));
    let workload = dir.join(&manifest.workload_file);
    require_file(&workload, "workload")?;
    let inst = parse_workload(&read(&workload)?, None)
        .with_context(|| format!("workload {}", workload.display()))?;
    let mode = exec_mode(&a.real, &a.perturb, a.common.seed)?;
    let plans: Vec<ExecutionPlan> = match &a.machine {
        Some(m) => {
            if matches!(mode, Exec::Simulated(_)) {
                bail!("--machine needs the real backend (--sync-root and --template)");
            }
            vec![manifest.load_plan(dir, m)?]
        }
        None => manifest.load_plans(dir)?,
    };
    prepare_out(&a.common.out)?;
    let out = &a.common.out;
    match mode {
        Exec::Simulated(p) => {
            let trace = simulate(&plans, &inst, &p)?;
            let mut report = report_for(
                &manifest.run_id,
                manifest.strategy,
                &trace,
                Some(manifest.predicted_makespan_ms),
            );
            report.perturbation = Some(p);
            write_report(out, &manifest.run_id, &trace, &report)
        }
        Exec::Real { root, template } => {
            let sync = SyncNamespace::new(root, &manifest.run_id);
            let opts = RealOptions {
                command_template: template.to_string(),
                wait_poll_ms: a.wait_poll_ms,
                wait_timeout_ms: a.wait_timeout_ms,
            };
            let results: Vec<Result<MachineTrace, RealError>> = thread::scope(|s| {
                let handles: Vec<_> = plans
                    .iter()
                    .map(|p| s.spawn(|| execute_real(p, &sync, &opts)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("machine thread panicked"))
                    .collect()
            });
            // report the root cause rather than its downstream aborts
            let failure = results
                .iter()
                .zip(&plans)
                .filter_map(|(r, p)| r.as_ref().err().map(|e| (p, e)))
                .min_by_key(|(_, e)| matches!(e, RealError::UpstreamFailed(_)));
            if let Some((p, e)) = failure {
                return Err(anyhow!("machine {}: {e}", p.machine_id));
            }
            let traces: Vec<MachineTrace> = results.into_iter().map(|r| r.expect("checked")).collect();
            let trace = wall_clock_trace(&traces);
            let (stem, predicted) = match &a.machine {
                Some(m) => (format!("{}.{m}", manifest.run_id), None),
                None => (manifest.run_id.clone(), Some(manifest.predicted_makespan_ms)),
            };
            let mut report = report_for(&manifest.run_id, manifest.strategy, &trace, predicted);
            report.backend = "real".into();
            report.machine_traces = traces;
            write_report(out, &stem, &trace, &report)
        }
    }
}

/// Trace relative to the earliest BEGIN among `traces`.
fn wall_clock_trace(traces: &[MachineTrace]) -> ExecutionTrace {
    let origin = traces.iter().map(|t| t.begin_epoch_ms).min().unwrap_or(0);
    let records = traces
        .iter()
        .flat_map(|t| {
            t.records.iter().map(move |r| OpRecord {
                op: r.op.clone(),
                machine: t.machine.clone(),
                start: r.start_epoch_ms.saturating_sub(origin),
                end: r.end_epoch_ms.saturating_sub(origin),
            })
        })
        .collect();
    let mut trace = ExecutionTrace::from_records(records, traces.iter().map(|t| t.machine.clone()).collect());
    trace.makespan = traces
        .iter()
        .map(|t| t.end_epoch_ms.saturating_sub(origin))
        .max()
        .unwrap_or(0);
    trace
}

fn cmd_dynamic(a: &DynamicArgs) -> Result<()> {
    check_run_id(&a.run_id)?;
    let inst = load_instance(&a.workload)?;
    let mode = exec_mode(&a.real, &a.perturb, a.common.seed)?;
    prepare_out(&a.common.out)?;
    let (backend, perturbation, name) = match mode {
        Exec::Simulated(p) => (Backend::Simulated(p), Some(p), "simulated"),
        Exec::Real { root, template } => (
            Backend::Real {
                sync: SyncNamespace::new(root, &a.run_id),
                command_template: template.to_string(),
            },
            None,
            "real",
        ),
    };
    let outcome = dynamic_run(&inst, a.poll_ms, &backend)?;
    let mut report = report_for(&a.run_id, Strategy::Dynamic, &outcome.trace, None);
    report.backend = name.into();
    report.perturbation = perturbation;
    report.assignment = outcome.assignment.clone();
    report.failed_jobs = outcome.failed_jobs.clone();
    write_report(&a.common.out, &a.run_id, &outcome.trace, &report)?;
    if outcome.is_partial() {
        bail!("partial run: failed jobs {}", outcome.failed_jobs.join(", "));
    }
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let fixed = match &a.workload {
        Some(w) => Some(load_instance(&WorkloadArgs {
            workload: w.clone(),
            model: a.model.clone(),
            stage_mode: a.stage_mode,
            impute_missing: a.impute_missing,
        })?),
        None => {
            if a.model.is_some() {
                bail!("--model needs --workload");
            }
            None
        }
    };
    let (n, m, k) = a.random;
    let cfg = a.solver.config(derive_seed(a.common.seed, "solver"));
    let mut rows = Vec::with_capacity(a.trials);
    for trial in 0..a.trials {
        let inst = match &fixed {
            Some(i) => i.clone(),
            None => {
                let seed = derive_seed(derive_seed(a.common.seed, "instance"), &trial.to_string());
                random_instance(RandomShape::new(n, m, k), &mut ChaCha8Rng::seed_from_u64(seed))
            }
        };
        let perturb = Perturbation::parse(
            &a.perturb,
            derive_seed(derive_seed(a.common.seed, "perturb"), &trial.to_string()),
        )?;
        let r = solve(&inst, &cfg)?;
        let fjsp = simulate(&compile_fjsp_plans(&inst, &r.schedule)?, &inst, &perturb)?;
        let greedy = simulate(&greedy_plans(&inst)?.plans, &inst, &perturb)?;
        let dynamic = dynamic_run(&inst, a.poll_ms, &Backend::Simulated(perturb))?;
        rows.push(CompareRow {
            trial,
            jobs: inst.jobs.len(),
            machines: inst.machines.len(),
            stages: inst.stages(),
            greedy_ms: greedy.makespan,
            dynamic_ms: dynamic.trace.makespan,
            fjsp_ms: fjsp.makespan,
            fjsp_status: r.status,
            speedup_vs_greedy: speedup(greedy.makespan, fjsp.makespan),
            speedup_vs_dynamic: speedup(dynamic.trace.makespan, fjsp.makespan),
        });
    }
    prepare_out(&a.common.out)?;
    write(&a.common.out, "compare.csv", &compare_csv(&rows))?;
    write(&a.common.out, "compare.json", &json(&rows))?;
    let text = render_compare(&rows);
    write(&a.common.out, "compare.txt", &text)?;
    print!("{text}");
    Ok(())
}
