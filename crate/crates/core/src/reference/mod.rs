//! Ground truth for the disk problem: the closed-form radial solution and an
//! independent finite-volume solve of the same radial boundary-value problem.

use serde::{Deserialize, Serialize};

use crate::autodiff::Jet2;
use crate::error::{Error, Result};
use crate::physics::{NonDimScheme, PhysicalConstants};

/// `u*(r) = (c1 + c2(1 − r²))/(c1 + c2)` with `c1 = QR/(2h)`, `c2 = QR²/(4k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticSolution {
    pub constants: PhysicalConstants,
    pub scheme: NonDimScheme,
}

impl AnalyticSolution {
    pub fn new(constants: PhysicalConstants) -> Result<Self> {
        Ok(AnalyticSolution {
            scheme: NonDimScheme::new(&constants)?,
            constants,
        })
    }

    fn curvature(&self) -> f64 {
        let (c1, c2) = (self.constants.c1(), self.constants.c2());
        c2 / (c1 + c2)
    }

    /// Dimensionless temperature at dimensionless radius `r ∈ [0, 1]`.
    pub fn u(&self, r: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [0, 1]")));
        }
        Ok(self.u_unchecked(r * r))
    }

    fn u_unchecked(&self, r2: f64) -> f64 {
        let (c1, c2) = (self.constants.c1(), self.constants.c2());
        (c1 + c2 * (1.0 - r2)) / (c1 + c2)
    }

    /// Temperature in kelvin, `T∞ + QR/(2h) + QR²(1 − r²)/(4k)`.
    pub fn kelvin(&self, r: f64) -> Result<f64> {
        self.u(r)?;
        let c = &self.constants;
        Ok(c.t_inf + c.c1() + c.c2() * (1.0 - r * r))
    }

    /// Value, gradient and Hessian of `u*` at a point; the polynomial is used as is outside the disk.
    pub fn jet(&self, p: [f64; 2]) -> Jet2 {
        let a = self.curvature();
        Jet2 {
            v: self.u_unchecked(p[0] * p[0] + p[1] * p[1]),
            gx: -2.0 * a * p[0],
            gy: -2.0 * a * p[1],
            hxx: -2.0 * a,
            hxy: 0.0,
            hyy: -2.0 * a,
        }
    }
}

/// Nodal values of the radial finite-volume solution on `r_i = i/(n−1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGridSolution {
    pub n: usize,
    pub r_nodes: Vec<f64>,
    pub u_nodes: Vec<f64>,
}

impl RadialGridSolution {
    /// Largest nodal deviation from `u*`.
    pub fn max_error(&self, exact: &AnalyticSolution) -> Result<f64> {
        self.r_nodes
            .iter()
            .zip(&self.u_nodes)
            .map(|(&r, &u)| Ok((u - exact.u(r)?).abs()))
            .try_fold(0.0f64, |m, e: Result<f64>| Ok(m.max(e?)))
    }
}

/// Solves `(1/r)(r u′)′ + q̂ = 0`, `u′(0) = 0`, `−u′(1) = Bi·u(1)`.
///
/// Vertex-centred finite volumes: exact two-point fluxes at the cell faces,
/// the source lumped to `q̂·r_i·|V_i|` at each node, and the Robin flux
/// closing the outermost half cell. Second order in `1/(n−1)`.
pub fn radial_fd_solve(n: usize, scheme: &NonDimScheme) -> Result<RadialGridSolution> {
    if n < 16 {
        return Err(Error::Domain(format!("radial grid needs at least 16 nodes, got {n}")));
    }
    let h = 1.0 / (n - 1) as f64;
    let r: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let (mut lo, mut di, mut up, mut rhs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let half = if i == 0 || i == n - 1 { 0.5 * h } else { h };
        rhs[i] = scheme.q_hat * r[i] * half;
        if i > 0 {
            let k = (r[i] - 0.5 * h) / h;
            lo[i] = -k;
            di[i] += k;
        }
        if i < n - 1 {
            let k = (r[i] + 0.5 * h) / h;
            up[i] = -k;
            di[i] += k;
        }
    }
    di[n - 1] += scheme.bi;
    let u = thomas(&lo, &di, &up, &rhs)?;
    Ok(RadialGridSolution { n, r_nodes: r, u_nodes: u })
}

/// Tridiagonal solve without pivoting.
fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = di.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let denom = di[i] - if i > 0 { lo[i] * c[i - 1] } else { 0.0 };
        if denom.abs() < 1e-300 || !denom.is_finite() {
            return Err(Error::Numerical(format!("singular tridiagonal pivot at row {i}")));
        }
        c[i] = up[i] / denom;
        d[i] = (rhs[i] - if i > 0 { lo[i] * d[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}
