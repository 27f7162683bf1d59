use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::NonDimScheme;

use super::grid::{EvalGrid, GridField};
use super::stats::{median, spearman};

/// One square micro-patch clipped to the disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub id: usize,
    pub center: [f64; 2],
    /// Scale `h_i`; the square's diameter unless frozen.
    pub h: f64,
    /// Indices into `EvalGrid::points`.
    pub cells: Vec<usize>,
    /// Indices into `EvalGrid::ring`.
    pub arcs: Vec<usize>,
}

/// Hard partition of the grid and ring into axis-aligned squares.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPartition {
    pub side: f64,
    pub patches: Vec<Patch>,
    /// Squares that received no grid or ring node.
    pub skipped: usize,
    /// Owning patch (position in `patches`) of every grid node.
    pub cell_owner: Vec<usize>,
    pub arc_owner: Vec<usize>,
}

impl PatchPartition {
    pub const DEFAULT_SIDE: f64 = 0.125;

    pub fn new(grid: &EvalGrid, side: f64) -> Result<Self> {
        if !(side > 0.0 && side <= 2.0) {
            return Err(Error::Domain(format!("patch side {side} outside (0, 2]")));
        }
        let per_axis = (2.0 / side - 1e-9).ceil() as usize;
        let square = |p: [f64; 2]| {
            let k = |c: f64| (((c + 1.0) / side).floor().max(0.0) as usize).min(per_axis - 1);
            k(p[1]) * per_axis + k(p[0])
        };
        let mut cells = vec![Vec::new(); per_axis * per_axis];
        let mut arcs = vec![Vec::new(); per_axis * per_axis];
        for (k, &p) in grid.points.iter().enumerate() {
            cells[square(p)].push(k);
        }
        for (k, &p) in grid.ring.iter().enumerate() {
            arcs[square(p)].push(k);
        }
        let mut patches = Vec::new();
        let mut skipped = 0;
        let mut cell_owner = vec![0; grid.points.len()];
        let mut arc_owner = vec![0; grid.ring.len()];
        for (s, (c, a)) in cells.into_iter().zip(arcs).enumerate() {
            if c.is_empty() && a.is_empty() {
                skipped += 1;
                continue;
            }
            let pos = patches.len();
            c.iter().for_each(|&k| cell_owner[k] = pos);
            a.iter().for_each(|&k| arc_owner[k] = pos);
            let (iy, ix) = (s / per_axis, s % per_axis);
            patches.push(Patch {
                id: s,
                center: [-1.0 + (ix as f64 + 0.5) * side, -1.0 + (iy as f64 + 0.5) * side],
                h: side * std::f64::consts::SQRT_2,
                cells: c,
                arcs: a,
            });
        }
        Ok(PatchPartition {
            side,
            patches,
            skipped,
            cell_owner,
            arc_owner,
        })
    }

    /// Same partition with every `h_i` replaced by `h`.
    pub fn with_fixed_scale(mut self, h: f64) -> Self {
        self.patches.iter_mut().for_each(|p| p.h = h);
        self
    }

    /// Partition-of-unity weights `(patch position, φ_i)` at grid node `k`.
    pub fn weights_at(&self, k: usize) -> Vec<(usize, f64)> {
        vec![(self.cell_owner[k], 1.0)]
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// The three residual channels of a potential field sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualFields {
    pub twist: Vec<[f64; 2]>,
    pub div: Vec<f64>,
    pub port: Vec<f64>,
}

impl ResidualFields {
    /// Channels of an error field `e`: `∇e`, `Δe` and `n·∇e + Bi·e`.
    pub fn from_error(e: &GridField, grid: &EvalGrid, scheme: &NonDimScheme) -> Result<Self> {
        e.check(grid)?;
        Ok(ResidualFields {
            twist: e.interior.iter().map(|j| [j.gx, j.gy]).collect(),
            div: e.interior.iter().map(|j| j.laplacian()).collect(),
            port: e
                .ring
                .iter()
                .zip(&grid.ring)
                .map(|(j, n)| n[0] * j.gx + n[1] * j.gy + scheme.bi * j.v)
                .collect(),
        })
    }

    /// Model residuals of a predicted potential `u`: zero twist,
    /// `−Δu − q̂` and `−∂u/∂n − Bi·u`.
    pub fn from_potential(u: &GridField, grid: &EvalGrid, scheme: &NonDimScheme) -> Result<Self> {
        u.check(grid)?;
        Ok(ResidualFields {
            twist: vec![[0.0; 2]; u.interior.len()],
            div: u.interior.iter().map(|j| -j.laplacian() - scheme.q_hat).collect(),
            port: u
                .ring
                .iter()
                .zip(&grid.ring)
                .map(|(j, n)| -(n[0] * j.gx + n[1] * j.gy) - scheme.bi * j.v)
                .collect(),
        })
    }

    pub fn zeros(grid: &EvalGrid) -> Self {
        ResidualFields {
            twist: vec![[0.0; 2]; grid.points.len()],
            div: vec![0.0; grid.points.len()],
            port: vec![0.0; grid.ring.len()],
        }
    }

    fn check(&self, grid: &EvalGrid) -> Result<()> {
        if self.twist.len() != grid.points.len() || self.div.len() != grid.points.len() || self.port.len() != grid.ring.len() {
            return Err(Error::Domain("residual fields do not match the grid".into()));
        }
        Ok(())
    }
}

/// Per-patch indicators `η_i²` with their channel split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorField {
    pub alpha: [f64; 3],
    pub eta2: Vec<f64>,
    pub twist: Vec<f64>,
    pub div: Vec<f64>,
    pub port: Vec<f64>,
}

impl IndicatorField {
    pub fn total(&self) -> f64 {
        self.eta2.iter().sum()
    }
}

/// `η_i² = α1∫_ωi |R_twist|² + α2 h_i² ∫_ωi R_div² + α3 h_i ∫_Γi R_port²`.
pub fn local_indicators(
    res: &ResidualFields,
    partition: &PatchPartition,
    grid: &EvalGrid,
    alpha: [f64; 3],
) -> Result<IndicatorField> {
    res.check(grid)?;
    let (a, s) = (grid.area_weight(), grid.ring_weight());
    let n = partition.len();
    let mut out = IndicatorField {
        alpha,
        eta2: vec![0.0; n],
        twist: vec![0.0; n],
        div: vec![0.0; n],
        port: vec![0.0; n],
    };
    for (i, p) in partition.patches.iter().enumerate() {
        let tw: f64 = p.cells.iter().map(|&k| res.twist[k][0].powi(2) + res.twist[k][1].powi(2)).sum();
        let dv: f64 = p.cells.iter().map(|&k| res.div[k].powi(2)).sum();
        let pt: f64 = p.arcs.iter().map(|&k| res.port[k].powi(2)).sum();
        out.twist[i] = alpha[0] * a * tw;
        out.div[i] = alpha[1] * p.h * p.h * a * dv;
        out.port[i] = alpha[2] * p.h * s * pt;
        out.eta2[i] = out.twist[i] + out.div[i] + out.port[i];
    }
    Ok(out)
}

/// Per-patch share of `‖e‖_E²`.
pub fn local_energy(e: &GridField, partition: &PatchPartition, grid: &EvalGrid, scheme: &NonDimScheme) -> Result<Vec<f64>> {
    e.check(grid)?;
    let (a, s) = (grid.area_weight(), grid.ring_weight());
    Ok(partition
        .patches
        .iter()
        .map(|p| {
            let bulk: f64 = p.cells.iter().map(|&k| e.interior[k].gx.powi(2) + e.interior[k].gy.powi(2)).sum();
            let trace: f64 = p.arcs.iter().map(|&k| e.ring[k].v.powi(2)).sum();
            a * bulk + scheme.bi * s * trace
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Global and per-patch comparison of indicators with the energy error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedReport {
    /// `‖e‖_E² / Σ η_i²`.
    pub global_ratio: Option<f64>,
    /// Summary of `(local energy)_i / η_i²` over patches with `η_i > 0`.
    pub local: Option<RatioSummary>,
    pub spearman: Option<f64>,
    /// 0-based rank, by descending `η_i`, of the patch holding `argmax |e|`.
    pub argmax_rank: Option<usize>,
    pub patches: usize,
    pub interval: (f64, f64),
    pub passed: bool,
    pub note: String,
}

impl TwoSidedReport {
    /// `argmax_rank` as a fraction of the patch count, in `(0, 1]`.
    pub fn argmax_rank_fraction(&self) -> Option<f64> {
        self.argmax_rank.map(|r| (r + 1) as f64 / self.patches as f64)
    }
}

pub const SPEARMAN_THRESHOLD: f64 = 0.8;

/// Checks `c_low ≤ ratio ≤ c_up` globally and per patch, and rank agreement
/// between `η_i` and the local energy error.
pub fn two_sided_check(
    eta: &IndicatorField,
    e: &GridField,
    partition: &PatchPartition,
    grid: &EvalGrid,
    scheme: &NonDimScheme,
    interval: (f64, f64),
) -> Result<TwoSidedReport> {
    if eta.eta2.len() != partition.len() {
        return Err(Error::Domain("indicator field does not match the partition".into()));
    }
    let local = local_energy(e, partition, grid, scheme)?;
    let energy: f64 = local.iter().sum();
    let total = eta.total();
    let mut report = TwoSidedReport {
        global_ratio: None,
        local: None,
        spearman: None,
        argmax_rank: None,
        patches: partition.len(),
        interval,
        passed: true,
        note: String::new(),
    };
    if total == 0.0 {
        if energy > 0.0 {
            report.passed = false;
            report.note = format!("all indicators vanish but the energy error is {energy:e}");
        } else {
            report.note = "zero error and zero residuals".into();
        }
        return Ok(report);
    }
    let inside = |r: f64| r >= interval.0 && r <= interval.1;
    let global = energy / total;
    report.global_ratio = Some(global);
    let mut ratios: Vec<f64> = local
        .iter()
        .zip(&eta.eta2)
        .filter(|(_, &h)| h > 0.0)
        .map(|(&l, &h)| l / h)
        .collect();
    ratios.sort_by(f64::total_cmp);
    report.local = Some(RatioSummary {
        min: ratios[0],
        median: median(&ratios),
        max: ratios[ratios.len() - 1],
    });
    let eta_i: Vec<f64> = eta.eta2.iter().map(|x| x.sqrt()).collect();
    report.spearman = spearman(&eta_i, &local);

    if let Some(k) = (0..e.interior.len()).max_by(|&a, &b| e.interior[a].v.abs().total_cmp(&e.interior[b].v.abs())) {
        let owner = partition.cell_owner[k];
        report.argmax_rank = Some(eta.eta2.iter().filter(|&&x| x > eta.eta2[owner]).count());
    }

    let mut failures = Vec::new();
    if !inside(global) {
        failures.push(format!("global ratio {global:e} outside interval"));
    }
    if !(inside(ratios[0]) && inside(ratios[ratios.len() - 1])) {
        failures.push("local ratios leave the interval".to_string());
    }
    match report.spearman {
        Some(r) if r >= SPEARMAN_THRESHOLD => {}
        Some(r) => failures.push(format!("rank correlation {r:.3} below {SPEARMAN_THRESHOLD}")),
        None => failures.push("rank correlation undefined".to_string()),
    }
    report.passed = failures.is_empty();
    report.note = failures.join("; ");
    Ok(report)
}
