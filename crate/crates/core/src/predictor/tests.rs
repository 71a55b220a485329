use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn names(n: usize) -> Vec<String> {
    CANONICAL_FEATURES[..n].iter().map(|s| s.to_string()).collect()
}

/// 12 canonical features; `duration` maps the feature row to milliseconds.
fn table_with(
    rows: usize,
    seed: u64,
    machine_type: &str,
    duration: impl Fn(&[f64], &mut ChaCha8Rng) -> f64,
) -> TrainingTable<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = TrainingTable::new(names(12));
    for _ in 0..rows {
        let x: Vec<f64> = vec![
            rng.random_range(100.0..2000.0),
            rng.random_range(100.0..150.0),
            rng.random_range(200.0..500.0),
            rng.random_range(1e5..1e7),
            rng.random_range(1e5..1e6),
            rng.random_range(1e5..1e7),
            rng.random_range(0.0..60.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
        ];
        let d = duration(&x, &mut rng);
        t.push(x, machine_type, "1", d).unwrap();
    }
    t
}

fn linear_table(rows: usize, seed: u64) -> TrainingTable<f64> {
    table_with(rows, seed, "gpu", |x, _| 10.0 * x[0])
}

fn fv(t: &TrainingTable<f64>, row: usize) -> FeatureVector<f64> {
    let mut v = FeatureVector::new();
    for (n, &x) in t.features.iter().zip(&t.rows[row].features) {
        v = v.with(n, x);
    }
    v
}

fn fast() -> Hyperparams {
    Hyperparams {
        forest: ForestParams {
            trees: 20,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn linear_fit_predicts_closed_form_value() {
    let t = linear_table(60, 1);
    let m = train(&t, ModelKind::Linear, &Hyperparams::default(), 0).unwrap();
    let mut probe = fv(&t, 0);
    probe.values.insert("size_mb".into(), 500.0);
    // y = 10 * size_mb; the L1 shrinkage is far below 1 ms here
    let p = m.predict_raw(&probe, "gpu", "1", Missing::Error).unwrap();
    assert!((p - 5000.0).abs() < 1.0, "{p}");
    assert_eq!(m.predict(&probe, "gpu", "1").unwrap(), 5000);
    for i in 0..t.len() {
        let err = m.predict_raw(&fv(&t, i), "gpu", "1", Missing::Error).unwrap() - t.rows[i].duration_ms;
        assert!(err.abs() < 1.0);
    }
}

#[test]
fn constant_durations_predict_the_constant() {
    let t = table_with(30, 2, "gpu", |_, _| 4000.0);
    for kind in [ModelKind::TreeEnsemble, ModelKind::Linear] {
        let m = train(&t, kind, &fast(), 7).unwrap();
        assert_eq!(m.predict(&fv(&t, 3), "gpu", "1").unwrap(), 4000);
    }
}

#[test]
fn training_is_deterministic_to_the_byte() {
    let t = table_with(50, 3, "gpu", |x, r| 10.0 * x[0] * r.random_range(0.9..1.1));
    let a = train(&t, ModelKind::TreeEnsemble, &Hyperparams::default(), 7).unwrap();
    let b = train(&t, ModelKind::TreeEnsemble, &Hyperparams::default(), 7).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let c = train(&t, ModelKind::TreeEnsemble, &Hyperparams::default(), 8).unwrap();
    assert_ne!(a.to_json(), c.to_json());
}

#[test]
fn model_json_round_trips_exactly() {
    let t = table_with(40, 4, "gpu", |x, r| 3.3 * x[0] + r.random_range(0.0..1.0));
    for kind in [ModelKind::TreeEnsemble, ModelKind::Linear] {
        let m = train(&t, kind, &fast(), 1).unwrap();
        let back = Model::<f64>::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), m.to_json());
    }
    assert!(matches!(Model::<f64>::from_json("{"), Err(PredictError::Format(_))));
}

#[test]
fn one_group_per_machine_type_and_stage() {
    let mut t = linear_table(10, 5);
    let extra = table_with(10, 6, "cpu", |x, _| 20.0 * x[0]);
    t.rows.extend(extra.rows);
    let m = train(&t, ModelKind::Linear, &Hyperparams::default(), 0).unwrap();
    let keys: Vec<_> = m.groups.iter().map(|g| (g.machine_type.as_str(), g.stage.as_str())).collect();
    assert_eq!(keys, vec![("cpu", "1"), ("gpu", "1")]);
    let probe = fv(&t, 0).with("size_mb", 100.0);
    assert_eq!(m.predict(&probe, "gpu", "1").unwrap(), 1000);
    assert_eq!(m.predict(&probe, "cpu", "1").unwrap(), 2000);
}

#[test]
fn predict_errors() {
    let t = linear_table(10, 7);
    let m = train(&t, ModelKind::Linear, &Hyperparams::default(), 0).unwrap();
    let mut probe = fv(&t, 0);
    assert_eq!(
        m.predict(&probe, "tpu", "1"),
        Err(PredictError::NoModel {
            machine_type: "tpu".into(),
            stage: "1".into()
        })
    );
    probe.values.remove("bases");
    let err = m.predict(&probe, "gpu", "1").unwrap_err();
    assert!(err.to_string().starts_with("feature mismatch"), "{err}");
    assert!(err.to_string().contains("bases"));
    assert!(m.predict_with(&probe, "gpu", "1", Missing::ImputeMean).is_ok());
    let bad = fv(&t, 0).with("pct_duplicates", 150.0);
    assert!(matches!(m.predict(&bad, "gpu", "1"), Err(PredictError::FeatureMismatch(_))));
}

#[test]
fn small_groups_are_rejected() {
    let mut t = linear_table(5, 8);
    t.rows.truncate(1);
    assert_eq!(
        train(&t, ModelKind::Linear, &Hyperparams::default(), 0).unwrap_err(),
        PredictError::InsufficientData {
            machine_type: "gpu".into(),
            stage: "1".into(),
            rows: 1
        }
    );
    let t = linear_table(5, 8);
    let err = evaluate_kfold(&t, ModelKind::Linear, &Hyperparams::default(), 10, 0).unwrap_err();
    assert!(err.to_string().starts_with("insufficient data for k folds"));
    assert!(evaluate_kfold(&t, ModelKind::Linear, &Hyperparams::default(), 1, 0).is_err());
}

#[test]
fn kfold_linear_on_noiseless_data() {
    let t = linear_table(80, 9);
    let g = evaluate_kfold(&t, ModelKind::Linear, &Hyperparams::default(), 10, 0).unwrap();
    assert_eq!(g.len(), 1);
    assert!(g[0].metrics.r2 >= 0.999, "{:?}", g[0]);
    assert!(g[0].metrics.mae < 0.01);
    assert_eq!(g, evaluate_kfold(&t, ModelKind::Linear, &Hyperparams::default(), 10, 0).unwrap());
}

#[test]
fn kfold_on_pure_noise_finds_no_signal() {
    let t = table_with(100, 10, "gpu", |_, r| r.random_range(1000.0..9000.0));
    for kind in [ModelKind::TreeEnsemble, ModelKind::Linear] {
        let g = evaluate_kfold(&t, kind, &fast(), 10, 3).unwrap();
        assert!(g[0].metrics.r2 <= 0.2, "{kind:?}: {:?}", g[0].metrics);
    }
}

#[test]
fn constant_column_does_not_change_predictions() {
    let t = table_with(60, 11, "gpu", |x, r| 2.5 * x[0] + 0.01 * x[4] * r.random_range(0.9..1.1));
    let mut wide = TrainingTable::new([t.features.clone(), vec!["batch".to_string()]].concat());
    for r in &t.rows {
        wide.push([r.features.clone(), vec![42.0]].concat(), "gpu", "1", r.duration_ms)
            .unwrap();
    }
    for kind in [ModelKind::TreeEnsemble, ModelKind::Linear] {
        let a = train(&t, kind, &fast(), 5).unwrap();
        let b = train(&wide, kind, &fast(), 5).unwrap();
        for i in 0..t.len() {
            let p = a.predict_raw(&fv(&t, i), "gpu", "1", Missing::Error).unwrap();
            let q = b
                .predict_raw(&fv(&wide, i), "gpu", "1", Missing::Error)
                .unwrap();
            match kind {
                ModelKind::TreeEnsemble => assert_eq!(p, q),
                ModelKind::Linear => assert!((p - q).abs() <= 1e-9 * p.abs()),
            }
        }
    }
}

#[test]
fn single_precision_instantiation() {
    let t64 = linear_table(40, 12);
    let mut t = TrainingTable::<f32>::new(t64.features.clone());
    for r in &t64.rows {
        let x = r.features.iter().map(|&v| v as f32).collect();
        t.push(x, "gpu", "1", r.duration_ms as f32).unwrap();
    }
    let m = train(&t, ModelKind::Linear, &Hyperparams::default(), 0).unwrap();
    let probe = FeatureVector::<f32>::from_f64_map(&fv(&t64, 0).values).with("size_mb", 500.0);
    let p = m.predict(&probe, "gpu", "1").unwrap();
    assert!(p.abs_diff(5000) <= 5, "{p}");
    let f = train(&t, ModelKind::TreeEnsemble, &fast(), 0).unwrap();
    assert_eq!(Model::<f32>::from_json(&f.to_json()).unwrap(), f);
}

#[test]
fn csv_ingest() {
    let t = table_with(80, 13, "gpu", |x, _| 10.0 * x[0]);
    let parsed = TrainingTable::<f64>::from_csv(t.to_csv().as_bytes()).unwrap();
    assert_eq!(parsed.len(), 80);
    assert_eq!(parsed, t);

    let text = "size_mb,stage,duration_ms,machine_type\n10,01,5,a\n20,align,7,b\n";
    let p = TrainingTable::<f64>::from_csv(text.as_bytes()).unwrap();
    assert_eq!(p.features, vec!["size_mb"]);
    assert_eq!(p.rows[0].stage, "1");
    assert_eq!(p.rows[1].machine_type, "b");
}

#[test]
fn csv_errors() {
    let parse = |s: &str| TrainingTable::<f64>::from_csv(s.as_bytes()).unwrap_err().to_string();
    assert!(parse("").starts_with("schema error"));
    assert!(parse("size_mb,stage,duration_ms\n").contains("`machine_type`"));
    assert!(parse("a,a,machine_type,stage,duration_ms\n").contains("duplicate column"));
    let e = parse("size_mb,machine_type,stage,duration_ms\n1,a,1,5\nx,a,1,5\n");
    assert_eq!(e, "parse error at row 2, column `size_mb`: `x` is not a finite number");
    assert!(parse("size_mb,machine_type,stage,duration_ms\n1,a,1,0\n").starts_with("invalid duration at row 1"));
    assert!(parse("size_mb,machine_type,stage,duration_ms\n1,a,1,-3\n").starts_with("invalid duration"));
    let e = parse("pct_duplicates,machine_type,stage,duration_ms\n150,a,1,5\n");
    assert!(e.starts_with("invariant violation at row 1"), "{e}");
    assert!(parse("size_mb,machine_type,stage,duration_ms\n0,a,1,5\n").contains("size_mb"));
    assert!(parse("size_mb,machine_type,stage,duration_ms\n1,,1,5\n").contains("`machine_type`"));
    assert!(parse("size_mb,machine_type,stage,duration_ms\n1,a,1\n").starts_with("parse error"));
    assert!(matches!(
        TrainingTable::<f64>::from_path(std::path::Path::new("/nonexistent/t.csv")),
        Err(PredictError::Io { .. })
    ));
}

fn jobs_and_machines() -> (Vec<Job>, Vec<Machine>) {
    let mut jobs = vec![Job::new("J1", 2), Job::new("J2", 2)];
    for (j, size) in jobs.iter_mut().zip([100.0, 300.0]) {
        let mut f = std::collections::BTreeMap::new();
        for n in CANONICAL_FEATURES {
            f.insert(n.to_string(), 1.0);
        }
        f.insert("size_mb".into(), size);
        j.features = Some(f);
    }
    let machines = vec![Machine::new("m1", "gpu"), Machine::new("m2", "gpu")];
    (jobs, machines)
}

#[test]
fn time_matrix_from_model() {
    let mut t = linear_table(20, 14);
    let mut second = linear_table(20, 15);
    for r in &mut second.rows {
        r.stage = "2".into();
        r.duration_ms *= 2.0;
    }
    t.rows.extend(second.rows);
    let m = train(&t, ModelKind::Linear, &Hyperparams::default(), 0).unwrap();
    let (jobs, machines) = jobs_and_machines();
    let labels = vec!["1".to_string(), "2".to_string()];
    let tm = build_time_matrix(&m, &jobs, &machines, &labels, Missing::Error).unwrap();
    assert_eq!(tm.len(), 8);
    for (j, q, _, ms) in tm.iter() {
        assert!(ms >= 1);
        let base = if j == "J1" { 1000 } else { 3000 };
        assert_eq!(ms, base * q as u64);
    }
    for j in ["J1", "J2"] {
        for q in 1..=2 {
            assert_eq!(tm.get(j, q, "m1"), tm.get(j, q, "m2"));
        }
    }
    let err = build_time_matrix(&m, &jobs, &machines, &["1".into(), "call".into()], Missing::Error)
        .unwrap_err();
    assert_eq!(
        err.to_string(),
        "time matrix entry (J1, 2, m1): no model for group (gpu, call)"
    );
}

#[test]
fn constant_model_fills_matrix_with_constant() {
    let t = table_with(10, 16, "gpu", |_, _| 4000.0);
    let m = train(&t, ModelKind::TreeEnsemble, &fast(), 0).unwrap();
    let (jobs, machines) = jobs_and_machines();
    let tm = build_time_matrix(&m, &jobs, &machines, &["1".into()], Missing::Error).unwrap();
    assert!(tm.iter().all(|(_, _, _, ms)| ms == 4000));
}

#[test]
fn stage_labels() {
    assert_eq!(stage_label(1, 1), "full");
    assert_eq!(stage_label(1, 2), "align");
    assert_eq!(stage_label(2, 2), "call");
    assert_eq!(stage_label(3, 4), "3");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forest_predictions_within_training_range(
        seed in any::<u64>(),
        ys in prop::collection::vec(1.0f64..1e6, 4..40),
        probe in prop::collection::vec(-1e7f64..1e7, 3),
    ) {
        let mut t = TrainingTable::new(names(3));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &y in &ys {
            let x = vec![rng.random_range(1.0..10.0), rng.random_range(0.0..1.0), rng.random_range(0.0..100.0)];
            t.push(x, "g", "1", y).unwrap();
        }
        let m = train(&t, ModelKind::TreeEnsemble, &fast(), seed).unwrap();
        let (lo, hi) = ys.iter().fold((f64::MAX, f64::MIN), |(a, b), &y| (a.min(y), b.max(y)));
        let v = FeatureVector::new()
            .with("size_mb", probe[0].abs() + 1.0)
            .with("avg_read_length", probe[1])
            .with("avg_insert_size", probe[2]);
        let p = m.predict_raw(&v, "g", "1", Missing::Error).unwrap();
        prop_assert!(p >= lo - 1e-6 * lo && p <= hi + 1e-6 * hi, "{} not in [{}, {}]", p, lo, hi);
    }
}
