use std::path::PathBuf;

use peb_pinn::diagnostics::GridField;
use peb_pinn::harness::io::{read_pgm, Table};
use peb_pinn::harness::{
    cmd_diagnose, cmd_eval, cmd_reference, cmd_sweep, cmd_train, diagnose_field, evaluate_field, exit_code,
    read_history, read_metrics, snapshot, RunConfig, SweepRow, SweepSpec, INDICATOR_COLUMNS,
};
use peb_pinn::model::Variant;
use peb_pinn::reference::AnalyticSolution;
use peb_pinn::Error;

fn small(backbone: &str, iterations: usize) -> (RunConfig, String) {
    let text = format!(
        r#"{{
  "model": {{ "backbone": "{backbone}", "width": 12 }},
  "train": {{ "iterations": {iterations}, "n_int": 256, "n_bnd": 64, "checkpoint_every": 5 }},
  "eval": {{ "resolution": 81, "ring": 240 }}
}}"#
    );
    (RunConfig::parse(&text).unwrap(), text)
}

fn reparse_all(files: &[PathBuf]) {
    for f in files {
        let name = f.to_string_lossy();
        if name.ends_with(".csv") {
            let t = Table::read(f).unwrap();
            assert!(!t.rows.is_empty(), "{name}");
        } else if name.ends_with(".pgm") {
            let p = read_pgm(f).unwrap();
            assert_eq!(p.pixels.len(), p.width * p.height);
        } else if name.ends_with(".json") {
            let _: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f).unwrap()).unwrap();
        }
        assert!(f.exists(), "{name}");
    }
}

#[test]
fn train_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, text) = small("PINN", 10);
    let art = cmd_train(&cfg, &text, dir.path()).unwrap();
    reparse_all(&art.files);
    for name in ["config.json", "checkpoint.json", "history.csv", "metrics.csv", "prediction.pgm", "abs_error.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("config.json")).unwrap(), text);
    assert_eq!(std::fs::read_dir(dir.path().join("checkpoints")).unwrap().count(), 2);
    let h = read_history(&dir.path().join("history.csv")).unwrap();
    assert_eq!(h.records.len(), 10);
    let m = read_metrics(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(m, art.metrics);
    assert!(((m.seconds_per_iteration * 10.0) - m.seconds_total).abs() <= 1e-9 * m.seconds_total);
}

#[test]
fn repeated_runs_match_apart_from_wall_clock() {
    let (cfg, text) = small("LSTM_LNN_PINN", 6);
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let a = cmd_train(&cfg, &text, dir.path()).unwrap();
            let ck = std::fs::read(dir.path().join("checkpoint.json")).unwrap();
            let field = std::fs::read(dir.path().join("prediction.csv")).unwrap();
            (a.history, ck, field)
        })
        .collect();
    let strip = |h: &peb_pinn::training::LossHistory| {
        h.records.iter().map(|r| (r.iteration, r.loss_total.to_bits(), r.loss_pde.to_bits(), r.loss_bc.to_bits())).collect::<Vec<_>>()
    };
    assert_eq!(strip(&runs[0].0), strip(&runs[1].0));
    assert_eq!(runs[0].1, runs[1].1);
    assert_eq!(runs[0].2, runs[1].2);
}

#[test]
fn missing_field_is_named_with_exit_two() {
    let e = RunConfig::parse(r#"{ "model": { "backbone": "PINN" }, "train": {} }"#).unwrap_err();
    assert_eq!(exit_code(&e), 2);
    assert!(e.to_string().contains("iterations"), "{e}");
    let e = RunConfig::parse(r#"{ "model": { "backbone": "PINN", "widht": 3 }, "train": { "iterations": 1 } }"#).unwrap_err();
    assert_eq!(exit_code(&e), 2);
    assert!(e.to_string().contains("widht"), "{e}");
    let e = RunConfig::parse(r#"{ "model": { "backbone": "PINN" }, "train": { "iterations": 0 } }"#).unwrap_err();
    assert_eq!(exit_code(&e), 2);
}

#[test]
fn numerical_abort_has_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cfg, text) = small("PINN", 5);
    cfg.train.lr = Some(1e300);
    let e = cmd_train(&cfg, &text, dir.path()).unwrap_err();
    assert_eq!(exit_code(&e), 3, "{e}");
}

#[test]
fn eval_of_trained_checkpoint_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, text) = small("LNN_PINN", 10);
    cmd_train(&cfg, &text, &dir.path().join("run")).unwrap();
    let ck = dir.path().join("run/checkpoint.json");
    let (m, files) = cmd_eval(&cfg, &ck, &dir.path().join("eval")).unwrap();
    reparse_all(&files);
    assert!(m.rmse_u > 0.0);
    let err = Table::read(&dir.path().join("eval/abs_error.csv")).unwrap().floats("value").unwrap();
    assert!(err.iter().any(|&v| v > 0.0));

    let (other, _) = small("PINN", 10);
    let e = cmd_eval(&other, &ck, &dir.path().join("x")).unwrap_err();
    assert!(matches!(e, Error::Config(_)));
    assert_eq!(exit_code(&e), 2);
    let e = cmd_diagnose(&other, &ck, &dir.path().join("y")).unwrap_err();
    assert_eq!(exit_code(&e), 2);
}

#[test]
fn rmse_is_stable_under_grid_refinement() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cfg, text) = small("PINN", 10);
    cmd_train(&cfg, &text, &dir.path().join("run")).unwrap();
    let ck = dir.path().join("run/checkpoint.json");
    cfg.eval.resolution = 201;
    let (a, _) = cmd_eval(&cfg, &ck, &dir.path().join("a")).unwrap();
    cfg.eval.resolution = 401;
    let (b, _) = cmd_eval(&cfg, &ck, &dir.path().join("b")).unwrap();
    assert!((a.rmse_u - b.rmse_u).abs() <= 0.02 * b.rmse_u, "{} {}", a.rmse_u, b.rmse_u);
}

fn exact_field(cfg: &RunConfig) -> GridField {
    let exact = AnalyticSolution::new(cfg.problem).unwrap();
    GridField::from_fn(&cfg.grid().unwrap(), |p| exact.jet(p))
}

#[test]
fn exact_field_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = small("PINN", 1);
    let (m, files) = evaluate_field(&exact_field(&cfg), &cfg, 0.0, 0, dir.path()).unwrap();
    reparse_all(&files);
    assert_eq!(m.rmse_u, 0.0);
    assert_eq!(m.mae_u, 0.0);
    assert_eq!(m.energy_norm_error, 0.0);

    let (d, files) = diagnose_field(&exact_field(&cfg), &cfg, &dir.path().join("d")).unwrap();
    reparse_all(&files);
    assert!(d.indicators.eta2.iter().all(|&e| e.sqrt() <= 1e-9));
}

#[test]
fn diagnose_exports_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, text) = small("LSTM_PINN", 5);
    cmd_train(&cfg, &text, &dir.path().join("run")).unwrap();
    let (d, files) = cmd_diagnose(&cfg, &dir.path().join("run/checkpoint.json"), &dir.path().join("diag")).unwrap();
    reparse_all(&files);
    let t = Table::read(&dir.path().join("diag/indicators.csv")).unwrap();
    assert_eq!(t.header, INDICATOR_COLUMNS);
    assert_eq!(t.rows.len(), d.indicators.eta2.len());
    assert!(d.two_sided.spearman.is_some());
    assert!(d.bounds.unwrap().dominated);
}

#[test]
fn reference_exports_reparse() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = small("PINN", 1);
    let files = cmd_reference(&cfg, dir.path()).unwrap();
    reparse_all(&files);
    let t = Table::read(&dir.path().join("reference.csv")).unwrap();
    let exact = AnalyticSolution::new(cfg.problem).unwrap();
    let (x, y, u) = (t.floats("x").unwrap(), t.floats("y").unwrap(), t.floats("u").unwrap());
    for k in (0..u.len()).step_by(97) {
        assert!((u[k] - exact.u(x[k].hypot(y[k])).unwrap()).abs() <= 1e-14);
    }
    let diff = Table::read(&dir.path().join("radial_oracle.csv")).unwrap().floats("abs_diff").unwrap();
    assert!(diff.iter().all(|&d| d <= 1e-7));
}

#[test]
fn sweep_runs_every_rate_and_picks_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{ "backbones": ["PINN"], "lr": [1e-4, 1e-3], "iterations": 100, "n_int": 128, "n_bnd": 32, "width": 8,
                    "eval": { "resolution": 61, "ring": 120 } }"#;
    let spec = SweepSpec::parse(text).unwrap();
    let (rows, files) = cmd_sweep(&spec, text, dir.path()).unwrap();
    reparse_all(&files);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.failure.is_none()));
    let best = rows.iter().min_by(|a, b| a.rmse.total_cmp(&b.rmse)).unwrap();
    let snap = Table::read(&dir.path().join("snapshot_full.csv")).unwrap();
    assert_eq!(snap.rows.len(), 1);
    assert_eq!(snap.floats("lr").unwrap()[0], best.lr);
    let table = Table::read(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.rows[0][1], "1.00e-4");
    for r in &rows {
        assert!((r.seconds_per_iteration * 100.0 - r.seconds_total).abs() <= 1e-9 * r.seconds_total);
    }
}

#[test]
fn sweep_marks_failed_runs_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{ "backbones": ["PINN"], "lr": [1e-3, 1e300], "iterations": 5, "n_int": 64, "n_bnd": 16, "width": 6,
                    "eval": { "resolution": 41, "ring": 60 } }"#;
    let spec = SweepSpec::parse(text).unwrap();
    let (rows, _) = cmd_sweep(&spec, text, dir.path()).unwrap();
    assert!(rows[0].failure.is_none());
    assert!(rows[1].failure.is_some());
    let t = Table::read(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(t.rows[1].last().unwrap(), "FAILED");
}

fn row(lr: f64, rmse: f64, mae: f64, mse: f64, stability: f64) -> SweepRow {
    SweepRow {
        backbone: Variant::Pinn,
        lr,
        seconds_total: 1.0,
        seconds_per_iteration: 0.01,
        rmse,
        mae,
        mse,
        stability,
        failure: None,
    }
}

#[test]
fn snapshot_tie_rule() {
    let rows = [row(1e-4, 3.04e-4, 2e-4, 1e-7, 0.1), row(2e-4, 2.96e-4, 1e-4, 1e-7, 0.1)];
    assert_eq!(snapshot(&rows)[0].lr, 2e-4);
    let rows = [row(1e-4, 2.96e-4, 1e-4, 1e-7, 0.1), row(2e-4, 3.04e-4, 1e-4, 0.5e-7, 0.1)];
    assert_eq!(snapshot(&rows)[0].lr, 2e-4);
    let rows = [row(1e-4, 3.0e-4, 1e-4, 1e-7, 0.3), row(2e-4, 3.0e-4, 1e-4, 1e-7, 0.1)];
    assert_eq!(snapshot(&rows)[0].lr, 2e-4);
    let rows = [row(1e-4, 3.0e-4, 1e-4, 1e-7, 0.1), row(2e-4, 3.0e-4, 1e-4, 1e-7, 0.1)];
    assert_eq!(snapshot(&rows)[0].lr, 1e-4);
    let rows = [row(1e-4, 3.1e-4, 1e-5, 1e-9, 0.0), row(2e-4, 2.9e-4, 1e-3, 1e-5, 9.0)];
    assert_eq!(snapshot(&rows)[0].lr, 2e-4);
}

#[test]
fn sweep_spec_validation() {
    let e = SweepSpec::parse(r#"{ "backbones": ["PINN"], "lr": [1e-3, 1e-4], "iterations": 5 }"#).unwrap_err();
    assert_eq!(exit_code(&e), 2);
    let s = SweepSpec::parse(r#"{ "backbones": ["PINN", "LNN_PINN"], "iterations": 5 }"#).unwrap();
    assert_eq!(s.lr.len(), 10);
    assert_eq!(s.runs().len(), 20);
}

