use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Channel, Jet2, JetTensor};
use crate::error::{Error, Result};
use crate::model::{seed_points, LayerLayout, ModelParams};

pub const POWER_STEPS: usize = 20;
pub const POWER_TOL: f64 = 1e-8;
pub const MIN_SAMPLES: usize = 64;
const RANDOM_DIRECTIONS: usize = 8;

/// First- and second-order constants of the layer maps and the bounds built from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorBoundReport {
    /// `L_j`: largest sampled Jacobian spectral norm of map `j` (last entry is the readout).
    pub lipschitz: Vec<f64>,
    /// `H_j`: largest sampled `‖D²f_j[v,v]‖` over unit directions `v`.
    pub curvature: Vec<f64>,
    /// `Σ_ℓ (Π_{j>ℓ} L_j) H_ℓ (Π_{j<ℓ} L_j)²`.
    pub sum_product: f64,
    /// Spectral norm of the first layer's input weights.
    pub w_norm: f64,
    pub w_out_norm: f64,
    pub beta_g: f64,
    /// `β_g ‖W‖² ‖W_out‖²`.
    pub gated_bound: f64,
    /// True for a single gated layer, the setting the gated bound is stated for.
    pub gated_applicable: bool,
    /// Largest sampled spectral norm of the input Hessian of `u`.
    pub sampled_hessian: f64,
    /// Power iterations that hit the step limit before the tolerance.
    pub unconverged: usize,
    pub dominated: bool,
}

/// Largest singular value of a row-major `rows × cols` matrix by power
/// iteration on `AᵀA`. Returns the last iterate and whether it converged.
pub fn spectral_norm(rows: usize, cols: usize, a: &[f64]) -> (f64, bool) {
    let mut v: Vec<f64> = (0..cols).map(|k| 1.0 + 0.1 * k as f64 / cols as f64).collect();
    normalize(&mut v);
    let mut sigma = 0.0;
    for _ in 0..POWER_STEPS {
        let av: Vec<f64> = (0..rows).map(|r| dot(&a[r * cols..][..cols], &v)).collect();
        let next_sigma = norm(&av);
        if next_sigma == 0.0 {
            return (0.0, true);
        }
        let mut atav = vec![0.0; cols];
        for (r, &x) in av.iter().enumerate() {
            for (c, t) in atav.iter_mut().enumerate() {
                *t += a[r * cols + c] * x;
            }
        }
        normalize(&mut atav);
        v = atav;
        let done = (next_sigma - sigma).abs() <= POWER_TOL * next_sigma;
        sigma = next_sigma;
        if done {
            return (sigma, true);
        }
    }
    (sigma, false)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
}

/// Unit eigenvector of the Hessian eigenvalue of largest magnitude.
fn principal_direction(j: &Jet2) -> [f64; 2] {
    let mean = 0.5 * (j.hxx + j.hyy);
    let rad = (0.5 * (j.hxx - j.hyy)).hypot(j.hxy);
    let lam = if mean >= 0.0 { mean + rad } else { mean - rad };
    let c1 = [lam - j.hyy, j.hxy];
    let c2 = [j.hxy, lam - j.hxx];
    let c = if c1[0].hypot(c1[1]) >= c2[0].hypot(c2[1]) { c1 } else { c2 };
    let n = c[0].hypot(c[1]);
    if n == 0.0 {
        [1.0, 0.0]
    } else {
        [c[0] / n, c[1] / n]
    }
}

/// Rows where each point is repeated once per direction, value from `values`,
/// first derivative channel from `dirs`.
fn directional_input(values: &[Vec<f64>], dirs: &[Vec<Vec<f64>>]) -> JetTensor {
    let width = values[0].len();
    let rows: usize = dirs.iter().map(Vec::len).sum();
    let mut t = JetTensor::zeros(rows, width);
    let plane = rows * width;
    let mut r = 0;
    for (x, ds) in values.iter().zip(dirs) {
        for d in ds {
            t.data[r * width..][..width].copy_from_slice(x);
            t.data[plane + r * width..][..width].copy_from_slice(d);
            r += 1;
        }
    }
    t
}

fn row(t: &JetTensor, ch: Channel, r: usize) -> &[f64] {
    &t.channel(ch)[r * t.cols..][..t.cols]
}

fn input_weights(params: &ModelParams) -> Option<(usize, usize, &[f64])> {
    let layer = params.layout.layers.first()?;
    let spec = layer.spec();
    let (off, rows) = match layer {
        LayerLayout::Dense { w, .. } => (*w, spec.width),
        LayerLayout::Liquid { w_in, .. } => (*w_in, spec.width),
        LayerLayout::Gated { w, .. } | LayerLayout::GatedLiquid { w, .. } => (*w, 4 * spec.width),
    };
    let n = spec.input_width;
    Some((rows, n, &params.flat[off..off + rows * n]))
}

/// Sup-estimates of layer constants over `points` and the resulting
/// second-order bounds on the input Hessian of the predictor.
pub fn second_order_bound(params: &ModelParams, points: &[[f64; 2]], beta_g: f64, seed: u64) -> Result<OperatorBoundReport> {
    if points.len() < MIN_SAMPLES {
        return Err(Error::Domain(format!(
            "{} sample points, need at least {MIN_SAMPLES}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = params.forward_points(points)?.column(0);
    let sampled_hessian = out.iter().map(Jet2::hessian_norm).fold(0.0, f64::max);

    // Inputs seeded along each sample's principal Hessian direction, so the
    // directions reaching every layer are among those probed for curvature.
    let mut state = seed_points(points);
    let plane = state.plane();
    for (s, j) in out.iter().enumerate() {
        let u = principal_direction(j);
        state.data[plane + 2 * s] = u[0];
        state.data[plane + 2 * s + 1] = u[1];
        state.data[2 * plane + 2 * s] = 0.0;
        state.data[2 * plane + 2 * s + 1] = 0.0;
    }

    let maps = params.num_maps();
    let mut lipschitz = Vec::with_capacity(maps);
    let mut curvature = Vec::with_capacity(maps);
    let mut unconverged = 0;
    for l in 0..maps {
        let n = state.cols;
        let values: Vec<Vec<f64>> = (0..state.rows).map(|s| row(&state, Channel::V, s).to_vec()).collect();

        let basis: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                e
            })
            .collect();
        let jac_in = directional_input(&values, &vec![basis; values.len()]);
        let jac_out = params.apply_map(l, &jac_in)?;
        let d = jac_out.cols;
        let mut lip: f64 = 0.0;
        for s in 0..values.len() {
            let mut jm = vec![0.0; d * n];
            for k in 0..n {
                let col = row(&jac_out, Channel::Gx, s * n + k);
                for r in 0..d {
                    jm[r * n + k] = col[r];
                }
            }
            let (sigma, ok) = spectral_norm(d, n, &jm);
            unconverged += usize::from(!ok);
            lip = lip.max(sigma);
        }
        lipschitz.push(lip);

        let dirs: Vec<Vec<Vec<f64>>> = (0..values.len())
            .map(|s| {
                let mut ds = Vec::with_capacity(RANDOM_DIRECTIONS + 1);
                let mut own = row(&state, Channel::Gx, s).to_vec();
                if norm(&own) > 0.0 {
                    normalize(&mut own);
                    ds.push(own);
                }
                for _ in 0..RANDOM_DIRECTIONS {
                    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    normalize(&mut v);
                    ds.push(v);
                }
                ds
            })
            .collect();
        let curv_out = params.apply_map(l, &directional_input(&values, &dirs))?;
        let h = (0..curv_out.rows)
            .map(|r| norm(row(&curv_out, Channel::Hxx, r)))
            .fold(0.0, f64::max);
        curvature.push(h);

        state = params.apply_map(l, &state)?;
    }

    let mut sum_product = 0.0;
    for l in 0..maps {
        let after: f64 = lipschitz[l + 1..].iter().product();
        let before: f64 = lipschitz[..l].iter().product();
        sum_product += after * curvature[l] * before * before;
    }

    let (w_norm, ok_w) = match input_weights(params) {
        Some((r, c, w)) => spectral_norm(r, c, w),
        None => (0.0, true),
    };
    let ro = &params.layout.readout;
    let (w_out_norm, ok_o) = spectral_norm(ro.outputs, ro.inputs, &params.flat[ro.w..ro.w + ro.outputs * ro.inputs]);
    unconverged += usize::from(!ok_w) + usize::from(!ok_o);
    let gated_applicable = params.layout.layers.len() == 1
        && matches!(
            params.layout.layers[0],
            LayerLayout::Gated { .. } | LayerLayout::GatedLiquid { .. }
        );
    Ok(OperatorBoundReport {
        lipschitz,
        curvature,
        sum_product,
        w_norm,
        w_out_norm,
        beta_g,
        gated_bound: beta_g * w_norm * w_norm * w_out_norm * w_out_norm,
        gated_applicable,
        sampled_hessian,
        unconverged,
        dominated: sampled_hessian <= sum_product * (1.0 + 1e-9) + 1e-300,
    })
}
