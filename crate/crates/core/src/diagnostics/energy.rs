use crate::error::Result;
use crate::physics::{LossWeights, NonDimScheme};

use super::grid::{EvalGrid, GridField};

/// Squared energy norm `‖e‖_E² = ∫_Ω |∇e|² + Bi ∫_∂Ω e²` of an error field.
pub fn energy_norm(e: &GridField, grid: &EvalGrid, scheme: &NonDimScheme) -> Result<f64> {
    e.check(grid)?;
    let bulk: f64 = e.interior.iter().map(|j| j.gx * j.gx + j.gy * j.gy).sum();
    let trace: f64 = e.ring.iter().map(|j| j.v * j.v).sum();
    Ok(grid.area_weight() * bulk + scheme.bi * grid.ring_weight() * trace)
}

/// The weighted residual functional evaluated on an error field.
///
/// Channels are `R_twist = ∇e`, `R_div = Δe`, `R_port = n·∇e + Bi·e`; the
/// closure channel vanishes identically for a potential.
pub fn energy_functional(e: &GridField, grid: &EvalGrid, w: &LossWeights, scheme: &NonDimScheme) -> Result<f64> {
    e.check(grid)?;
    let (mut twist, mut div) = (0.0, 0.0);
    for j in &e.interior {
        twist += j.gx * j.gx + j.gy * j.gy;
        div += j.laplacian().powi(2);
    }
    let port: f64 = e
        .ring
        .iter()
        .zip(&grid.ring)
        .map(|(j, n)| (n[0] * j.gx + n[1] * j.gy + scheme.bi * j.v).powi(2))
        .sum();
    let a = grid.area_weight();
    Ok(w.w1 * w.w1 * a * twist
        + w.w2 * w.w2 * w.h_omega * w.h_omega * a * div
        + w.w4 * w.w4 * w.h_gamma * grid.ring_weight() * port)
}
