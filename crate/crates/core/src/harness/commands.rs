use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    local_energy, local_indicators, second_order_bound, smoothed_density_maps, two_sided_check, EvalGrid, GridField,
    IndicatorField, MetricsReport, OperatorBoundReport, PatchPartition, ResidualFields, TwoSidedReport,
};
use crate::error::{Error, Result};
use crate::physics::{sample_interior, NonDimScheme};
use crate::reference::{radial_fd_solve, AnalyticSolution};
use crate::training::{Checkpoint, HistoryRecord, LossHistory, Trainer};

use super::config::{RunConfig, SweepSpec};
use super::io::{full, two, write_field_csv, write_pgm, Table};

/// Process exit code for an error: 2 for bad input, 3 for numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Format { .. }
        | Error::Io { .. }
        | Error::Domain(_)
        | Error::Mode(_)
        | Error::Resolution(_)
        | Error::DegenerateReference(_) => 2,
        Error::TrainingAborted { .. } | Error::NumericalOverflow { .. } | Error::Numerical(_) | Error::Structural(_) => 3,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    write_text(path, &text)
}

pub const HISTORY_COLUMNS: [&str; 5] = ["iteration", "loss_total", "loss_pde", "loss_bc", "seconds"];

pub fn write_history(path: &Path, history: &LossHistory) -> Result<()> {
    let mut t = Table::new(&HISTORY_COLUMNS);
    for r in &history.records {
        t.push(vec![
            r.iteration.to_string(),
            full(r.loss_total),
            full(r.loss_pde),
            full(r.loss_bc),
            full(r.seconds),
        ]);
    }
    t.write(path)
}

pub fn read_history(path: &Path) -> Result<LossHistory> {
    let t = Table::read(path)?;
    if t.header != HISTORY_COLUMNS {
        return Err(Error::format(path, format!("unexpected columns {:?}", t.header)));
    }
    let it = t.floats("iteration").map_err(|e| Error::format(path, e.to_string()))?;
    let cols: Vec<Vec<f64>> = HISTORY_COLUMNS[1..]
        .iter()
        .map(|c| t.floats(c))
        .collect::<Result<_>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(LossHistory {
        records: (0..t.rows.len())
            .map(|k| HistoryRecord {
                iteration: it[k] as usize,
                loss_total: cols[0][k],
                loss_pde: cols[1][k],
                loss_bc: cols[2][k],
                seconds: cols[3][k],
            })
            .collect(),
    })
}

pub fn write_metrics(path: &Path, m: &MetricsReport) -> Result<()> {
    let mut t = Table::new(&MetricsReport::COLUMNS);
    t.push(m.values().iter().map(|&v| full(v)).collect());
    t.write(path)
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport> {
    let t = Table::read(path)?;
    if t.header != MetricsReport::COLUMNS || t.rows.len() != 1 {
        return Err(Error::format(path, "expected one metrics row with the documented columns"));
    }
    let v: Vec<f64> = t.rows[0]
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| Error::format(path, format!("`{s}` is not a number"))))
        .collect::<Result<_>>()?;
    Ok(MetricsReport {
        rmse_u: v[0],
        mae_u: v[1],
        mse_u: v[2],
        rmse_k: v[3],
        mae_k: v[4],
        mse_k: v[5],
        relerr_boundary: v[6],
        energy_norm_error: v[7],
        seconds_total: v[8],
        seconds_per_iteration: v[9],
    })
}

/// Writes a masked field as `<stem>.csv` and `<stem>.pgm` (+ sidecar).
fn export_field(dir: &Path, stem: &str, grid: &EvalGrid, values: &[f64], files: &mut Vec<PathBuf>) -> Result<()> {
    let csv = dir.join(format!("{stem}.csv"));
    let pgm = dir.join(format!("{stem}.pgm"));
    write_field_csv(&csv, grid, values)?;
    write_pgm(&pgm, grid, values)?;
    files.push(csv);
    files.push(super::io::sidecar(&pgm));
    files.push(pgm);
    Ok(())
}

fn solution(cfg: &RunConfig) -> Result<AnalyticSolution> {
    AnalyticSolution::new(cfg.problem).map_err(|e| Error::Config(e.to_string()))
}

/// Metrics and field exports of a predicted potential against the exact solution.
pub fn evaluate_field(
    pred: &GridField,
    cfg: &RunConfig,
    seconds: f64,
    iterations: usize,
    out: &Path,
) -> Result<(MetricsReport, Vec<PathBuf>)> {
    create_dir(out)?;
    let grid = cfg.grid()?;
    let exact = solution(cfg)?;
    let truth = GridField::from_fn(&grid, |p| exact.jet(p));
    let report = MetricsReport::from_fields(pred, &truth, &exact.scheme, &grid, seconds, iterations)?;
    let mut files = vec![out.join("metrics.csv")];
    write_metrics(&files[0], &report)?;
    let u = pred.values();
    let err: Vec<f64> = u.iter().zip(truth.values()).map(|(a, b)| (a - b).abs()).collect();
    export_field(out, "prediction", &grid, &u, &mut files)?;
    export_field(out, "abs_error", &grid, &err, &mut files)?;
    Ok((report, files))
}

/// Artifacts of one training run.
#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub metrics: MetricsReport,
    pub history: LossHistory,
    pub checkpoint: Checkpoint,
    pub files: Vec<PathBuf>,
}

/// Trains per `cfg` and writes config echo, checkpoints, history, metrics and field exports.
pub fn cmd_train(cfg: &RunConfig, cfg_text: &str, out: &Path) -> Result<TrainArtifacts> {
    create_dir(out)?;
    let mut files = vec![out.join("config.json")];
    write_text(&files[0], cfg_text)?;
    let exact = solution(cfg)?;
    let config = cfg.train_config();
    let outcome = Trainer::new(config.clone(), exact.scheme)?.run()?;
    if !outcome.checkpoints.is_empty() {
        let dir = out.join("checkpoints");
        create_dir(&dir)?;
        for c in &outcome.checkpoints {
            let path = dir.join(format!("ckpt_{:07}.json", c.iteration));
            c.save(&path)?;
            files.push(path);
        }
    }
    let checkpoint = Checkpoint {
        backbone: config.backbone,
        seed: config.init_seed,
        iteration: config.iterations,
        params: outcome.params,
        adam: outcome.adam,
    };
    let ck = out.join("checkpoint.json");
    checkpoint.save(&ck)?;
    files.push(ck);
    let hist = out.join("history.csv");
    write_history(&hist, &outcome.history)?;
    files.push(hist);
    let grid = cfg.grid()?;
    let pred = GridField::from_params(&checkpoint.params, &grid)?;
    let (metrics, more) = evaluate_field(&pred, cfg, outcome.seconds, config.iterations, out)?;
    files.extend(more);
    Ok(TrainArtifacts {
        metrics,
        history: outcome.history,
        checkpoint,
        files,
    })
}

fn load_matching(cfg: &RunConfig, checkpoint: &Path) -> Result<Checkpoint> {
    let c = Checkpoint::load(checkpoint)?;
    if c.backbone != cfg.backbone() {
        return Err(Error::Config(format!(
            "checkpoint {} holds {:?}, config describes {:?}",
            checkpoint.display(),
            c.backbone,
            cfg.backbone()
        )));
    }
    Ok(c)
}

/// Evaluates a saved checkpoint on the configured grid.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<(MetricsReport, Vec<PathBuf>)> {
    let c = load_matching(cfg, checkpoint)?;
    let pred = GridField::from_params(&c.params, &cfg.grid()?)?;
    evaluate_field(&pred, cfg, 0.0, c.iteration, out)
}

pub const REFERENCE_COLUMNS: [&str; 6] = ["i", "j", "x", "y", "u", "kelvin"];
pub const ORACLE_COLUMNS: [&str; 4] = ["r", "u_fd", "u_exact", "abs_diff"];
pub const ORACLE_NODES: usize = 4001;

/// Exact field on the grid, plus the radial finite-volume oracle beside it.
pub fn cmd_reference(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let grid = cfg.grid()?;
    let exact = solution(cfg)?;
    let mut t = Table::new(&REFERENCE_COLUMNS);
    let n = grid.resolution;
    let mut u = Vec::with_capacity(grid.points.len());
    for (&flat, p) in grid.inside.iter().zip(&grid.points) {
        let v = exact.jet(*p).v;
        u.push(v);
        t.push(vec![
            (flat / n).to_string(),
            (flat % n).to_string(),
            full(p[0]),
            full(p[1]),
            full(v),
            full(exact.scheme.to_kelvin(v)),
        ]);
    }
    let mut files = vec![out.join("reference.csv"), out.join("reference.pgm")];
    t.write(&files[0])?;
    write_pgm(&files[1], &grid, &u)?;
    files.push(super::io::sidecar(&files[1]));

    let fd = radial_fd_solve(ORACLE_NODES, &exact.scheme)?;
    let mut o = Table::new(&ORACLE_COLUMNS);
    for (&r, &v) in fd.r_nodes.iter().zip(&fd.u_nodes) {
        let e = exact.u(r)?;
        o.push(vec![full(r), full(v), full(e), full((v - e).abs())]);
    }
    let path = out.join("radial_oracle.csv");
    o.write(&path)?;
    files.push(path);
    Ok(files)
}

pub const INDICATOR_COLUMNS: [&str; 9] = [
    "patch_id", "center_x", "center_y", "h", "eta2", "twist", "div", "port", "local_energy",
];

/// Everything `diagnose` computes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub indicators: IndicatorField,
    pub local_energy: Vec<f64>,
    pub two_sided: TwoSidedReport,
    pub core_ratio: Option<(f64, f64)>,
    pub bandwidth: f64,
    pub bounds: Option<OperatorBoundReport>,
}

/// Indicator, alignment and smoothed-map diagnostics of a predicted field.
pub fn diagnose_field(pred: &GridField, cfg: &RunConfig, out: &Path) -> Result<(DiagnoseReport, Vec<PathBuf>)> {
    create_dir(out)?;
    let grid = cfg.grid()?;
    let exact = solution(cfg)?;
    let scheme: NonDimScheme = exact.scheme;
    let d = &cfg.diagnostics;
    let truth = GridField::from_fn(&grid, |p| exact.jet(p));
    let e = pred.minus(&truth)?;
    let part = PatchPartition::new(&grid, d.patch_side)?;
    let res = ResidualFields::from_error(&e, &grid, &scheme)?;
    let eta = local_indicators(&res, &part, &grid, d.alpha)?;
    let energy = local_energy(&e, &part, &grid, &scheme)?;
    let two_sided = two_sided_check(&eta, &e, &part, &grid, &scheme, (d.interval[0], d.interval[1]))?;
    let maps = smoothed_density_maps(&res, &e, &part, &grid, &scheme, d.alpha, d.bandwidth)?;

    let mut t = Table::new(&INDICATOR_COLUMNS);
    for (i, p) in part.patches.iter().enumerate() {
        t.push(vec![
            p.id.to_string(),
            full(p.center[0]),
            full(p.center[1]),
            full(p.h),
            full(eta.eta2[i]),
            full(eta.twist[i]),
            full(eta.div[i]),
            full(eta.port[i]),
            full(energy[i]),
        ]);
    }
    let mut files = vec![out.join("indicators.csv")];
    t.write(&files[0])?;
    let masked = |raster: &[f64]| grid.inside.iter().map(|&k| raster[k]).collect::<Vec<_>>();
    export_field(out, "e_map", &grid, &masked(&maps.e_map), &mut files)?;
    export_field(out, "r_map", &grid, &masked(&maps.r_map), &mut files)?;
    let report = DiagnoseReport {
        indicators: eta,
        local_energy: energy,
        two_sided,
        core_ratio: maps.core_ratio,
        bandwidth: maps.bandwidth,
        bounds: None,
    };
    Ok((report, files))
}

/// Diagnostics of a checkpoint, including the operator bounds of its network.
pub fn cmd_diagnose(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<(DiagnoseReport, Vec<PathBuf>)> {
    let c = load_matching(cfg, checkpoint)?;
    let grid = cfg.grid()?;
    let pred = GridField::from_params(&c.params, &grid)?;
    let (mut report, mut files) = diagnose_field(&pred, cfg, out)?;
    let d = &cfg.diagnostics;
    let samples = sample_interior(d.bound_samples, d.bound_seed);
    report.bounds = Some(second_order_bound(&c.params, &samples, d.beta_g, d.bound_seed)?);
    let path = out.join("diagnose.json");
    write_json(&path, &report)?;
    files.push(path);
    Ok((report, files))
}

/// Outcome of one `(backbone, lr)` run of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub backbone: crate::model::Variant,
    pub lr: f64,
    pub seconds_total: f64,
    pub seconds_per_iteration: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mse: f64,
    /// Standard deviation of `log10(loss)` over the final 20% of iterations.
    pub stability: f64,
    /// `None` on success, the abort message otherwise.
    pub failure: Option<String>,
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "backbone", "lr", "total_s", "s_per_iter", "rmse", "mae", "mse", "tail_log_std", "status",
];

fn sweep_table(rows: &[&SweepRow], fmt: fn(f64) -> String) -> Table {
    let mut t = Table::new(&SWEEP_COLUMNS);
    for r in rows {
        let mut cells = vec![r.backbone.tag().to_string(), fmt(r.lr)];
        match &r.failure {
            None => {
                cells.extend(
                    [r.seconds_total, r.seconds_per_iteration, r.rmse, r.mae, r.mse, r.stability].map(fmt),
                );
                cells.push("OK".into());
            }
            Some(_) => {
                cells.extend(std::iter::repeat_n(String::new(), 6));
                cells.push("FAILED".into());
            }
        }
        t.push(cells);
    }
    t
}

/// Rounds to two significant digits, the resolution at which RMSE ties are called.
fn sig2(x: f64) -> f64 {
    format!("{x:.1e}").parse().unwrap_or(x)
}

/// Best successful row per backbone: smallest RMSE at two significant digits,
/// ties broken by MAE, then MSE, then tail stability, then the smaller rate.
pub fn snapshot(rows: &[SweepRow]) -> Vec<&SweepRow> {
    let mut best: Vec<&SweepRow> = Vec::new();
    for r in rows.iter().filter(|r| r.failure.is_none()) {
        let key = |r: &SweepRow| (sig2(r.rmse), sig2(r.mae), sig2(r.mse), r.stability, r.lr);
        match best.iter_mut().find(|b| b.backbone == r.backbone) {
            Some(b) => {
                let (kr, kb) = (key(r), key(b));
                let better = [kr.0.total_cmp(&kb.0), kr.1.total_cmp(&kb.1), kr.2.total_cmp(&kb.2), kr.3.total_cmp(&kb.3), kr.4.total_cmp(&kb.4)]
                    .into_iter()
                    .find(|o| o.is_ne())
                    == Some(std::cmp::Ordering::Less);
                if better {
                    *b = r;
                }
            }
            None => best.push(r),
        }
    }
    best
}

/// Runs every `(backbone, lr)` pair, one subdirectory each, and writes the
/// sweep and snapshot tables in display and full precision.
pub fn cmd_sweep(spec: &SweepSpec, spec_text: &str, out: &Path) -> Result<(Vec<SweepRow>, Vec<PathBuf>)> {
    create_dir(out)?;
    let mut files = vec![out.join("sweep_spec.json")];
    write_text(&files[0], spec_text)?;
    let mut rows = Vec::new();
    for cfg in spec.runs() {
        let lr = cfg.train.lr.expect("sweep runs carry a rate");
        let dir = out.join(format!("{}_lr{lr:.1e}", cfg.model.backbone.tag()));
        let text = serde_json::to_string_pretty(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        let row = match cmd_train(&cfg, &text, &dir) {
            Ok(a) => SweepRow {
                backbone: cfg.model.backbone,
                lr,
                seconds_total: a.metrics.seconds_total,
                seconds_per_iteration: a.metrics.seconds_per_iteration,
                rmse: a.metrics.rmse_u,
                mae: a.metrics.mae_u,
                mse: a.metrics.mse_u,
                stability: a.history.tail_log10_std(0.2).unwrap_or(0.0),
                failure: None,
            },
            Err(e) => SweepRow {
                backbone: cfg.model.backbone,
                lr,
                seconds_total: f64::NAN,
                seconds_per_iteration: f64::NAN,
                rmse: f64::NAN,
                mae: f64::NAN,
                mse: f64::NAN,
                stability: f64::NAN,
                failure: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    let all: Vec<&SweepRow> = rows.iter().collect();
    let best = snapshot(&rows);
    for (name, table) in [
        ("sweep.csv", sweep_table(&all, two)),
        ("sweep_full.csv", sweep_table(&all, full)),
        ("snapshot.csv", sweep_table(&best, two)),
        ("snapshot_full.csv", sweep_table(&best, full)),
    ] {
        let path = out.join(name);
        table.write(&path)?;
        files.push(path);
    }
    Ok((rows, files))
}
