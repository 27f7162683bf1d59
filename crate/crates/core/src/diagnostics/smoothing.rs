use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::NonDimScheme;

use super::grid::{EvalGrid, GridField};
use super::patches::{PatchPartition, ResidualFields};

/// Smoothed energy and residual densities on the full raster (zero off the mask).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMaps {
    pub bandwidth: f64,
    pub e_map: Vec<f64>,
    pub r_map: Vec<f64>,
    /// Smallest and largest `R/E` over patch cores where `E > 0`.
    pub core_ratio: Option<(f64, f64)>,
}

/// Gaussian smoothing of the energy density `|∇e|² (+ Bi e² on the ring)`
/// and of the indicator density built from the residual channels.
///
/// Each node's mass is spread with a Gaussian truncated at three bandwidths
/// and renormalised over the masked nodes it reaches, so integrals are
/// conserved. Ring masses are deposited on the nearest masked node first.
/// `bandwidth` defaults to half the first patch's `h_i`.
pub fn smoothed_density_maps(
    res: &ResidualFields,
    e: &GridField,
    partition: &PatchPartition,
    grid: &EvalGrid,
    scheme: &NonDimScheme,
    alpha: [f64; 3],
    bandwidth: Option<f64>,
) -> Result<DensityMaps> {
    e.check(grid)?;
    let bw = match bandwidth {
        Some(b) => b,
        None => partition.patches.first().map_or(0.0, |p| 0.5 * p.h),
    };
    if !(bw >= grid.spacing) {
        return Err(Error::Resolution(format!(
            "bandwidth {bw} below grid spacing {}",
            grid.spacing
        )));
    }
    let (a, s) = (grid.area_weight(), grid.ring_weight());
    let m = grid.points.len();
    let mut e_mass = vec![0.0; m];
    let mut r_mass = vec![0.0; m];
    for k in 0..m {
        let j = &e.interior[k];
        let h = partition.patches[partition.cell_owner[k]].h;
        e_mass[k] = a * (j.gx * j.gx + j.gy * j.gy);
        let t = res.twist[k];
        r_mass[k] = a * (alpha[0] * (t[0] * t[0] + t[1] * t[1]) + alpha[1] * h * h * res.div[k].powi(2));
    }
    for (k, p) in grid.ring.iter().enumerate() {
        let target = nearest_inside(grid, *p);
        let h = partition.patches[partition.arc_owner[k]].h;
        e_mass[target] += s * scheme.bi * e.ring[k].v.powi(2);
        r_mass[target] += s * alpha[2] * h * res.port[k].powi(2);
    }
    let e_sm = spread(grid, &e_mass, bw);
    let r_sm = spread(grid, &r_mass, bw);
    let e_den: Vec<f64> = e_sm.iter().map(|x| x / a).collect();
    let r_den: Vec<f64> = r_sm.iter().map(|x| x / a).collect();

    let mut core_ratio: Option<(f64, f64)> = None;
    for p in &partition.patches {
        for &k in &p.cells {
            let q = grid.points[k];
            if (q[0] - p.center[0]).abs() > 0.25 * partition.side || (q[1] - p.center[1]).abs() > 0.25 * partition.side {
                continue;
            }
            if e_den[k] > 0.0 {
                let ratio = r_den[k] / e_den[k];
                core_ratio = Some(match core_ratio {
                    None => (ratio, ratio),
                    Some((lo, hi)) => (lo.min(ratio), hi.max(ratio)),
                });
            }
        }
    }
    Ok(DensityMaps {
        bandwidth: bw,
        e_map: grid.raster(&e_den, 0.0),
        r_map: grid.raster(&r_den, 0.0),
        core_ratio,
    })
}

fn nearest_inside(grid: &EvalGrid, p: [f64; 2]) -> usize {
    (0..grid.points.len())
        .min_by(|&i, &j| {
            let d = |k: usize| (grid.points[k][0] - p[0]).powi(2) + (grid.points[k][1] - p[1]).powi(2);
            d(i).total_cmp(&d(j))
        })
        .expect("grid has masked nodes")
}

/// Spreads per-node masses with a mask-renormalised truncated Gaussian.
pub(crate) fn spread(grid: &EvalGrid, mass: &[f64], bw: f64) -> Vec<f64> {
    let n = grid.resolution;
    let reach = (3.0 * bw / grid.spacing).floor() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|d| (-0.5 * (d as f64 * grid.spacing / bw).powi(2)).exp())
        .collect();
    let cut = (3.0 * bw).powi(2) + 1e-12;
    let mut position = vec![usize::MAX; n * n];
    for (pos, &k) in grid.inside.iter().enumerate() {
        position[k] = pos;
    }
    let mut out = vec![0.0; mass.len()];
    let mut touched: Vec<(usize, f64)> = Vec::new();
    for (src, &mval) in mass.iter().enumerate() {
        if mval == 0.0 {
            continue;
        }
        let flat = grid.inside[src];
        let (i0, j0) = ((flat / n) as isize, (flat % n) as isize);
        touched.clear();
        let mut norm = 0.0;
        for di in -reach..=reach {
            let i = i0 + di;
            if i < 0 || i >= n as isize {
                continue;
            }
            for dj in -reach..=reach {
                let j = j0 + dj;
                if j < 0 || j >= n as isize {
                    continue;
                }
                let dist2 = ((di * di + dj * dj) as f64) * grid.spacing * grid.spacing;
                if dist2 > cut {
                    continue;
                }
                let pos = position[i as usize * n + j as usize];
                if pos == usize::MAX {
                    continue;
                }
                let w = kernel[(di + reach) as usize] * kernel[(dj + reach) as usize];
                norm += w;
                touched.push((pos, w));
            }
        }
        for &(pos, w) in &touched {
            out[pos] += mval * w / norm;
        }
    }
    out
}
