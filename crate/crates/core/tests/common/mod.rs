//! Finite-difference probes shared by the autodiff tests and the acceptance suite.
#![allow(dead_code)]

use peb_pinn::autodiff::{jet_seed, Axis};
use peb_pinn::model::ModelParams;
use peb_pinn::physics::{objective, CollocationSet, LossWeights, NonDimScheme};

pub fn loss(params: &ModelParams, set: &CollocationSet, scheme: &NonDimScheme, w: &LossWeights) -> f64 {
    objective(params, set, scheme, w, 1024, false).unwrap().0.total
}

pub fn gradient(params: &ModelParams, set: &CollocationSet, scheme: &NonDimScheme, w: &LossWeights) -> Vec<f64> {
    objective(params, set, scheme, w, 1024, true).unwrap().1.unwrap()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Richardson-extrapolated central difference of `f` at step `h`.
pub fn richardson(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let d = |s: f64| (f(s) - f(-s)) / (2.0 * s);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Largest per-coordinate relative error between the tape gradient and
/// central differences of the loss over `coords`.
pub fn gradient_error(
    params: &ModelParams,
    set: &CollocationSet,
    scheme: &NonDimScheme,
    w: &LossWeights,
    coords: &[usize],
) -> f64 {
    let g = gradient(params, set, scheme, w);
    let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for &k in coords {
        let fd = richardson(
            |s| {
                let mut p = params.clone();
                p.flat[k] += s;
                loss(&p, set, scheme, w)
            },
            1e-4 * params.flat[k].abs().max(1.0),
        );
        worst = worst.max(rel(g[k], fd, 1e-4 * scale));
    }
    worst
}

/// Relative error of the jet Laplacian of head 0 against a Richardson-combined
/// five-point stencil at `p`.
pub fn laplacian_error(params: &ModelParams, p: [f64; 2]) -> f64 {
    let u = |x: f64, y: f64| params.forward(jet_seed(x, Axis::X), jet_seed(y, Axis::Y)).unwrap()[0].v;
    let jet = params.forward(jet_seed(p[0], Axis::X), jet_seed(p[1], Axis::Y)).unwrap()[0];
    let stencil = |h: f64| {
        (u(p[0] + h, p[1]) + u(p[0] - h, p[1]) + u(p[0], p[1] + h) + u(p[0], p[1] - h) - 4.0 * u(p[0], p[1])) / (h * h)
    };
    let h = 1e-2;
    let fd = (4.0 * stencil(h / 2.0) - stencil(h)) / 3.0;
    rel(jet.laplacian(), fd, 1e-3)
}
