use serde::{Deserialize, Serialize};

use crate::autodiff::Jet2;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::physics::NonDimScheme;
use crate::reference::AnalyticSolution;

use super::energy::energy_norm;
use super::grid::{EvalGrid, GridField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub mae: f64,
    pub mse: f64,
}

/// Root mean square, mean absolute and mean square deviation of `pred` from `reference`.
pub fn rmse(pred: &[f64], reference: &[f64]) -> Result<ErrorStats> {
    if pred.len() != reference.len() {
        return Err(Error::Domain(format!(
            "prediction has {} values, reference {}",
            pred.len(),
            reference.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Domain("empty field".into()));
    }
    let n = pred.len() as f64;
    let (mut sq, mut abs) = (0.0, 0.0);
    for (p, r) in pred.iter().zip(reference) {
        let d = p - r;
        sq += d * d;
        abs += d.abs();
    }
    let mse = sq / n;
    Ok(ErrorStats {
        rmse: mse.sqrt(),
        mae: abs / n,
        mse,
    })
}

/// Relative port mismatch `‖−∂u/∂n − Bi·u‖ / ‖Bi·u‖` over boundary points.
pub fn relerr_port(u_ring: &[Jet2], ring: &[[f64; 2]], scheme: &NonDimScheme) -> Result<f64> {
    if u_ring.len() != ring.len() || ring.is_empty() {
        return Err(Error::Domain("boundary ring not populated".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (u, n) in u_ring.iter().zip(ring) {
        let port = -(n[0] * u.gx + n[1] * u.gy) - scheme.bi * u.v;
        num += port * port;
        den += (scheme.bi * u.v).powi(2);
    }
    if den.sqrt() < 1e-14 {
        return Err(Error::DegenerateReference(format!(
            "boundary norm of Bi·u is {:e}",
            den.sqrt()
        )));
    }
    Ok((num / den).sqrt())
}

/// Evaluation summary of one trained predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse_u: f64,
    pub mae_u: f64,
    pub mse_u: f64,
    pub rmse_k: f64,
    pub mae_k: f64,
    pub mse_k: f64,
    pub relerr_boundary: f64,
    /// `‖u − u*‖_E²`.
    pub energy_norm_error: f64,
    pub seconds_total: f64,
    pub seconds_per_iteration: f64,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 10] = [
        "rmse_u",
        "mae_u",
        "mse_u",
        "rmse_k",
        "mae_k",
        "mse_k",
        "relerr_boundary",
        "energy_norm_error",
        "seconds_total",
        "seconds_per_iteration",
    ];

    /// Compares `params` with the analytic solution on `grid`.
    ///
    /// `relerr_boundary` is `NaN` when the predicted trace is degenerate.
    pub fn evaluate(
        params: &ModelParams,
        exact: &AnalyticSolution,
        grid: &EvalGrid,
        seconds_total: f64,
        iterations: usize,
    ) -> Result<Self> {
        let pred = GridField::from_params(params, grid)?;
        let truth = GridField::from_fn(grid, |p| exact.jet(p));
        Self::from_fields(&pred, &truth, &exact.scheme, grid, seconds_total, iterations)
    }

    pub fn from_fields(
        pred: &GridField,
        truth: &GridField,
        scheme: &NonDimScheme,
        grid: &EvalGrid,
        seconds_total: f64,
        iterations: usize,
    ) -> Result<Self> {
        pred.check(grid)?;
        let (p, t) = (pred.values(), truth.values());
        let u = rmse(&p, &t)?;
        let kelvin = |v: &[f64]| v.iter().map(|&x| scheme.to_kelvin(x)).collect::<Vec<_>>();
        let k = rmse(&kelvin(&p), &kelvin(&t))?;
        let relerr_boundary = match relerr_port(&pred.ring, &grid.ring, scheme) {
            Ok(r) => r,
            Err(Error::DegenerateReference(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        let e = pred.minus(truth)?;
        Ok(MetricsReport {
            rmse_u: u.rmse,
            mae_u: u.mae,
            mse_u: u.mse,
            rmse_k: k.rmse,
            mae_k: k.mae,
            mse_k: k.mse,
            relerr_boundary,
            energy_norm_error: energy_norm(&e, grid, scheme)?,
            seconds_total,
            seconds_per_iteration: if iterations == 0 {
                0.0
            } else {
                seconds_total / iterations as f64
            },
        })
    }

    pub fn values(&self) -> [f64; 10] {
        [
            self.rmse_u,
            self.mae_u,
            self.mse_u,
            self.rmse_k,
            self.mae_k,
            self.mse_k,
            self.relerr_boundary,
            self.energy_norm_error,
            self.seconds_total,
            self.seconds_per_iteration,
        ]
    }
}
