use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical data of the bake plate problem, SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// Conductivity, W/(m·K).
    pub k: f64,
    /// Volumetric source, W/m³.
    #[serde(rename = "Q")]
    pub q: f64,
    /// Convection coefficient, W/(m²·K).
    pub h: f64,
    /// Ambient temperature, K.
    pub t_inf: f64,
    /// Wafer radius, m.
    #[serde(rename = "R")]
    pub r: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            k: 159.0,
            q: 2000.0,
            h: 50.0,
            t_inf: 800.0,
            r: 0.15,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k", self.k), ("Q", self.q), ("h", self.h), ("t_inf", self.t_inf), ("R", self.r)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("constant {name} must be finite and positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Edge rise above ambient `QR/(2h)`.
    pub fn c1(&self) -> f64 {
        self.q * self.r / (2.0 * self.h)
    }

    /// Centre-to-edge rise `QR²/(4k)`.
    pub fn c2(&self) -> f64 {
        self.q * self.r * self.r / (4.0 * self.k)
    }
}

/// Scales mapping the physical problem onto the unit disk.
///
/// The network predicts `u = (T − T_∞)/dT` at `x' = x/L`. With this choice the
/// problem reads `−Δu = q̂` in the disk and `−∂u/∂n = Bi·u` on the circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonDimScheme {
    pub length: f64,
    pub dt: f64,
    pub bi: f64,
    pub q_hat: f64,
    /// `QL²/k`, the plain conduction temperature scale.
    pub paper_scale: f64,
    pub t_inf: f64,
}

impl NonDimScheme {
    pub fn new(c: &PhysicalConstants) -> Result<Self> {
        c.validate()?;
        Ok(NonDimScheme {
            length: c.r,
            dt: c.c1() + c.c2(),
            bi: c.h * c.r / c.k,
            q_hat: 1.0 / (c.k / (2.0 * c.h * c.r) + 0.25),
            paper_scale: c.q * c.r * c.r / c.k,
            t_inf: c.t_inf,
        })
    }

    pub fn to_kelvin(&self, u: f64) -> f64 {
        self.t_inf + self.dt * u
    }

    pub fn from_kelvin(&self, t: f64) -> f64 {
        (t - self.t_inf) / self.dt
    }

    /// Temperature differences: dimensionless to kelvin.
    pub fn delta_to_kelvin(&self, du: f64) -> f64 {
        self.dt * du
    }

    /// `T/(QL²/k)` for a dimensionless value `u`.
    pub fn to_paper_scale(&self, u: f64) -> f64 {
        self.to_kelvin(u) / self.paper_scale
    }

    pub fn from_paper_scale(&self, t: f64) -> f64 {
        self.from_kelvin(t * self.paper_scale)
    }

    pub fn to_physical_point(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] * self.length, p[1] * self.length]
    }

    pub fn to_dimensionless_point(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] / self.length, p[1] / self.length]
    }
}

/// Channel weights of the training objective and of the energy functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub eps_clo: f64,
    pub h_omega: f64,
    pub h_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::nondimensional(1e-2)
    }
}

impl LossWeights {
    /// Unit weights for the scaled problem, with the closure channel set to `eps_clo`.
    pub fn nondimensional(eps_clo: f64) -> Self {
        LossWeights {
            w1: 1.0,
            w2: 1.0,
            w3: eps_clo,
            w4: 1.0,
            eps_clo,
            h_omega: 1.0,
            h_gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.w3, self.w4, self.eps_clo, self.h_omega, self.h_gamma];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and nonnegative: {self:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_groups() {
        let s = NonDimScheme::new(&PhysicalConstants::default()).unwrap();
        assert!((s.bi - 4.716_981e-2).abs() < 1e-8);
        assert!((s.q_hat - 9.216_590e-2).abs() < 1e-8);
        assert!((s.dt - 3.070_754_7).abs() < 1e-6);
        // q̂ is QR²/k over dT
        assert!((s.q_hat - s.paper_scale / s.dt).abs() < 1e-15);
    }

    #[test]
    fn conversions_invert() {
        let s = NonDimScheme::new(&PhysicalConstants::default()).unwrap();
        for t in [780.0, 800.0, 803.0, 803.070_754_7, 850.0] {
            let back = s.to_kelvin(s.from_kelvin(t));
            assert!((back - t).abs() <= 1e-14 * t);
        }
        for u in [-0.3, 0.0, 0.976_958_5, 1.0, 12.5] {
            let back = s.from_kelvin(s.to_kelvin(u));
            assert!((back - u).abs() <= 1e-12 * u.abs().max(1.0));
            let back = s.from_paper_scale(s.to_paper_scale(u));
            assert!((back - u).abs() <= 1e-12 * u.abs().max(1.0));
        }
        let p = s.to_dimensionless_point(s.to_physical_point([0.3, -0.7]));
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_constants() {
        let c = PhysicalConstants {
            h: 0.0,
            ..Default::default()
        };
        assert!(matches!(NonDimScheme::new(&c), Err(Error::Config(_))));
    }
}
