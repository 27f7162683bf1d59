use std::f64::consts::PI;

use crate::autodiff::Jet2;
use crate::error::{Error, Result};

use super::constants::{LossWeights, NonDimScheme};

/// Tolerance on `x² + y² = 1` for boundary points.
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Where {
    Interior,
    Boundary,
}

/// Residual channels at one point. `r_port` is only present on the boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualBundle {
    pub r_twist: [f64; 2],
    pub r_div: f64,
    pub r_clo: f64,
    pub r_port: Option<f64>,
}

fn outward_normal(at: [f64; 2], place: Where) -> Result<Option<[f64; 2]>> {
    if !(at[0].is_finite() && at[1].is_finite()) {
        return Err(Error::Domain(format!("non-finite point {at:?}")));
    }
    match place {
        Where::Interior => Ok(None),
        Where::Boundary => {
            let r2 = at[0] * at[0] + at[1] * at[1];
            if (r2 - 1.0).abs() > UNIT_TOL {
                return Err(Error::Domain(format!(
                    "boundary point {at:?} is off the unit circle (|x|² = {r2})"
                )));
            }
            Ok(Some(at))
        }
    }
}

/// Channels for a potential-only head: `r_div = −Δu − q̂`, `r_port = −∂u/∂n − Bi·u`.
pub fn residual_potential(u: Jet2, at: [f64; 2], place: Where, scheme: &NonDimScheme) -> Result<ResidualBundle> {
    let n = outward_normal(at, place)?;
    Ok(ResidualBundle {
        r_twist: [0.0, 0.0],
        r_div: -u.laplacian() - scheme.q_hat,
        r_clo: 0.0,
        r_port: n.map(|n| -(n[0] * u.gx + n[1] * u.gy) - scheme.bi * u.v),
    })
}

/// Channels for the mixed head `(u, ωx, ωy)`, where `ω` stands for `−∇u`.
///
/// `r_twist = ω + ∇u`, `r_clo = ∂x ωy − ∂y ωx`, `r_div = ∇·ω − q̂`,
/// `r_port = ω·n − Bi·u`.
pub fn residual_mixed(heads: &[Jet2], at: [f64; 2], place: Where, scheme: &NonDimScheme) -> Result<ResidualBundle> {
    let [u, wx, wy] = heads else {
        return Err(Error::Mode(format!(
            "mixed residuals need 3 heads (u, ωx, ωy), got {}",
            heads.len()
        )));
    };
    let n = outward_normal(at, place)?;
    Ok(ResidualBundle {
        r_twist: [wx.v + u.gx, wy.v + u.gy],
        r_div: wx.gx + wy.gy - scheme.q_hat,
        r_clo: wy.gx - wx.gy,
        r_port: n.map(|n| n[0] * wx.v + n[1] * wy.v - scheme.bi * u.v),
    })
}

/// Quadrature-weighted interior loss with area weight `π/N` per bundle.
pub fn loss_pde(bundles: &[ResidualBundle], w: &LossWeights) -> Result<f64> {
    if bundles.is_empty() {
        return Err(Error::Domain("loss_pde over an empty point set".into()));
    }
    let area = PI / bundles.len() as f64;
    let h2 = w.h_omega * w.h_omega;
    Ok(bundles
        .iter()
        .map(|b| {
            let twist = b.r_twist[0] * b.r_twist[0] + b.r_twist[1] * b.r_twist[1];
            area * (w.w1 * twist + w.w2 * h2 * b.r_div * b.r_div + w.w3 * b.r_clo * b.r_clo)
        })
        .sum())
}

/// Port loss with arc-length weight `2π/N` per bundle.
pub fn loss_bc(bundles: &[ResidualBundle], w: &LossWeights) -> Result<f64> {
    if bundles.is_empty() {
        return Err(Error::Domain("loss_bc over an empty point set".into()));
    }
    let arc = 2.0 * PI / bundles.len() as f64;
    bundles
        .iter()
        .map(|b| {
            b.r_port
                .map(|r| arc * w.w4 * w.h_gamma * r * r)
                .ok_or_else(|| Error::Domain("loss_bc given an interior bundle".into()))
        })
        .sum()
}

pub fn loss_total(pde: f64, bc: f64) -> f64 {
    pde + bc
}
