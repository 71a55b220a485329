use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_pipesched");

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/example1.toml")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(dir: &Path, rel: &str) -> String {
    dir.join(rel).display().to_string()
}

fn linear_csv(rows: usize) -> String {
    let mut s = String::from("size_mb,bases,machine_type,stage,duration_ms\n");
    for i in 0..rows {
        let size = 100 + 37 * i;
        let bases = 1000 + (i * 7919) % 5000;
        s.push_str(&format!("{size},{bases},gpu,1,{}\n", 10 * size));
    }
    s
}

#[test]
fn train_reports_metrics_and_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("t.csv"), linear_csv(40)).unwrap();
    let t = p(d.path(), "t.csv");
    ok(&["train", "--table", &t, "--kind", "linear", "--out", &p(d.path(), "a")]);
    let m = json(&d.path().join("a/metrics.json"));
    assert!(m[0]["metrics"]["r2"].as_f64().unwrap() >= 0.999);
    let csv = fs::read_to_string(d.path().join("a/metrics.csv")).unwrap();
    assert!(csv.starts_with("machine_type,stage,rows,folds,r2,mse_s2,mae_s\ngpu,1,40,10,"));

    ok(&["train", "--table", &t, "--trees", "10", "--seed", "7", "--out", &p(d.path(), "b")]);
    ok(&["train", "--table", &t, "--trees", "10", "--seed", "7", "--out", &p(d.path(), "c")]);
    assert_eq!(
        fs::read(d.path().join("b/model.json")).unwrap(),
        fs::read(d.path().join("c/model.json")).unwrap()
    );
}

#[test]
fn train_rejects_malformed_tables() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.csv"), "size_mb,stage\n1,1\n").unwrap();
    let err = fails(&["train", "--table", &p(d.path(), "bad.csv"), "--out", &p(d.path(), "o")]);
    assert!(err.contains("schema error"), "{err}");
    fs::write(d.path().join("empty.csv"), "").unwrap();
    let err = fails(&["train", "--table", &p(d.path(), "empty.csv"), "--out", &p(d.path(), "o")]);
    assert!(err.contains("schema error"), "{err}");
    let err = fails(&["train", "--table", &p(d.path(), "none.csv"), "--out", &p(d.path(), "o")]);
    assert!(err.contains("not found"), "{err}");
    assert!(!d.path().join("o").exists());
}

#[test]
fn plan_and_run_example() {
    let d = tempfile::tempdir().unwrap();
    let w = example().display().to_string();
    ok(&["plan", "--workload", &w, "--run-id", "ex", "--out", &p(d.path(), "fj")]);
    let m = json(&d.path().join("fj/ex.manifest.json"));
    assert_eq!(m["predicted_makespan_ms"], 8000);
    assert_eq!(m["solver_status"], "optimal");
    let sched = fs::read_to_string(d.path().join("fj/ex.schedule.csv")).unwrap();
    assert!(sched.starts_with("machine,job,stage,start_ms,duration_ms\n"));

    ok(&["run", "--manifest", &p(d.path(), "fj/ex.manifest.json"), "--out", &p(d.path(), "r")]);
    let s = json(&d.path().join("r/ex.summary.json"));
    assert_eq!(s["summary"]["makespan_ms"], 8000);
    assert_eq!(s["relative_error"], "0.00");
    let trace = fs::read_to_string(d.path().join("r/ex.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 10);

    ok(&["plan", "--workload", &w, "--strategy", "greedy", "--run-id", "gr", "--out", &p(d.path(), "g")]);
    let m = json(&d.path().join("g/gr.manifest.json"));
    assert_eq!(m["predicted_makespan_ms"], 10000);
    assert_eq!(m["assignment"]["J1"], "m3");
    for out in ["g1", "g2"] {
        ok(&[
            "run", "--manifest", &p(d.path(), "g/gr.manifest.json"), "--perturb", "uniform:0.9:1.1",
            "--out", &p(d.path(), out),
        ]);
    }
    for f in ["gr.summary.json", "gr.trace.csv", "gr.summary.txt"] {
        assert_eq!(
            fs::read(d.path().join("g1").join(f)).unwrap(),
            fs::read(d.path().join("g2").join(f)).unwrap()
        );
    }
}

#[test]
fn run_errors() {
    let d = tempfile::tempdir().unwrap();
    let w = example().display().to_string();
    ok(&["plan", "--workload", &w, "--run-id", "ex", "--out", &p(d.path(), "fj")]);
    let manifest = p(d.path(), "fj/ex.manifest.json");
    let err = fails(&["run", "--manifest", &manifest, "--machine", "m1", "--out", &p(d.path(), "o")]);
    assert!(err.contains("real backend"), "{err}");
    let err = fails(&["run", "--manifest", &manifest, "--sync-root", &p(d.path(), "s"), "--out", &p(d.path(), "o")]);
    assert!(err.contains("--template"), "{err}");
    let err = fails(&["run", "--manifest", &manifest, "--perturb", "gauss", "--out", &p(d.path(), "o")]);
    assert!(err.contains("gauss"), "{err}");
    fs::remove_file(d.path().join("fj/ex.m2.plan")).unwrap();
    let err = fails(&["run", "--manifest", &manifest, "--out", &p(d.path(), "o")]);
    assert!(err.contains("ex.m2.plan"), "{err}");
}

#[test]
fn plan_needs_a_time_source() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("w.toml"),
        "stages = 1\n[[machines]]\nid = \"a\"\nmachine_type = \"t\"\n[[jobs]]\nid = \"j\"\n",
    )
    .unwrap();
    let err = fails(&["plan", "--workload", &p(d.path(), "w.toml"), "--out", &p(d.path(), "o")]);
    assert!(err.contains("no time source"), "{err}");
}

#[test]
fn plan_from_model_with_named_stages() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("size_mb,machine_type,stage,duration_ms\n");
    for i in 1..=20 {
        for (mt, f) in [("fast", 1), ("slow", 3)] {
            csv.push_str(&format!("{},{mt},align,{}\n", 10 * i, 100 * i * f));
            csv.push_str(&format!("{},{mt},call,{}\n", 10 * i, 50 * i * f));
        }
    }
    fs::write(d.path().join("t.csv"), csv).unwrap();
    ok(&["train", "--table", &p(d.path(), "t.csv"), "--kind", "linear", "--out", &p(d.path(), "m")]);
    let workload = r#"
[[machines]]
id = "g1"
machine_type = "fast"
[[machines]]
id = "c1"
machine_type = "slow"
[[jobs]]
id = "A"
features = { size_mb = 100.0 }
[[jobs]]
id = "B"
features = { size_mb = 50.0 }
"#;
    fs::write(d.path().join("w.toml"), workload).unwrap();
    let args = |mode: &str, out: &str| {
        vec![
            "plan".to_string(), "--workload".into(), p(d.path(), "w.toml"), "--model".into(),
            p(d.path(), "m/model.json"), "--stage-mode".into(), mode.into(), "--out".into(), p(d.path(), out),
        ]
    };
    let a: Vec<String> = args("two_stage", "p");
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let resolved = fs::read_to_string(d.path().join("p/run.workload.toml")).unwrap();
    // A on the fast type: align 1000 ms, call 500 ms
    assert!(resolved.contains("g1 = [1000, 500]"), "{resolved}");
    let a: Vec<String> = args("one_stage", "q");
    let err = fails(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(err.contains("no model for group (slow, full)") || err.contains("(fast, full)"), "{err}");
}

#[test]
fn dynamic_cases() {
    let d = tempfile::tempdir().unwrap();
    let w = example().display().to_string();
    ok(&["dynamic", "--workload", &w, "--poll-ms", "0", "--out", &p(d.path(), "a")]);
    let s = json(&d.path().join("a/dynamic.summary.json"));
    assert!(s["summary"]["makespan_ms"].as_u64().unwrap() >= 8000);

    fs::write(d.path().join("empty.toml"), "stages = 2\n[[machines]]\nid = \"a\"\nmachine_type = \"t\"\n").unwrap();
    ok(&["dynamic", "--workload", &p(d.path(), "empty.toml"), "--out", &p(d.path(), "e")]);
    let s = json(&d.path().join("e/dynamic.summary.json"));
    assert_eq!(s["summary"]["makespan_ms"], 0);
    let trace = fs::read_to_string(d.path().join("e/dynamic.trace.csv")).unwrap();
    assert_eq!(trace, "machine,job,stage,start_ms,end_ms\n");

    let mut sym = String::from("stages = 2\n");
    for m in ["a", "b", "c"] {
        sym.push_str(&format!("[[machines]]\nid = \"{m}\"\nmachine_type = \"t\"\n"));
    }
    for j in ["x", "y", "z"] {
        sym.push_str(&format!("[[jobs]]\nid = \"{j}\"\n"));
    }
    for j in ["x", "y", "z"] {
        sym.push_str(&format!("[times.{j}]\na = [300, 200]\nb = [300, 200]\nc = [300, 200]\n"));
    }
    fs::write(d.path().join("sym.toml"), sym).unwrap();
    ok(&["dynamic", "--workload", &p(d.path(), "sym.toml"), "--out", &p(d.path(), "s")]);
    assert_eq!(json(&d.path().join("s/dynamic.summary.json"))["summary"]["makespan_ms"], 500);
}

#[test]
fn compare_cases() {
    let d = tempfile::tempdir().unwrap();
    let w = example().display().to_string();
    let out = ok(&["compare", "--workload", &w, "--out", &p(d.path(), "a")]);
    assert!(out.contains("1.250"), "{out}");
    let rows = json(&d.path().join("a/compare.json"));
    assert_eq!(rows[0]["greedy_ms"], 10000);
    assert_eq!(rows[0]["fjsp_ms"], 8000);
    assert_eq!(rows[0]["speedup_vs_greedy"], 1.25);

    ok(&["compare", "--trials", "20", "--seed", "4", "--out", &p(d.path(), "r")]);
    let rows = json(&d.path().join("r/compare.json"));
    assert_eq!(rows.as_array().unwrap().len(), 20);
    for r in rows.as_array().unwrap() {
        if r["fjsp_status"] == "optimal" {
            assert!(r["fjsp_ms"].as_u64() <= r["greedy_ms"].as_u64(), "{r}");
        }
    }

    ok(&["compare", "--trials", "0", "--out", &p(d.path(), "z")]);
    let csv = fs::read_to_string(d.path().join("z/compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}
