//! Second-order jets in two spatial variables.
//!
//! A [`Jet2`] carries the truncated Taylor data of a scalar field at a point:
//! value, gradient and the three independent Hessian entries. Arithmetic on
//! jets is exact to second order, so a network evaluated on seeded coordinate
//! jets yields `u`, `∇u` and `∇²u` in one pass.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Coordinate axis a jet is seeded along.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Index of one jet component inside a six-channel layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    V = 0,
    Gx = 1,
    Gy = 2,
    Hxx = 3,
    Hxy = 4,
    Hyy = 5,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::V,
        Channel::Gx,
        Channel::Gy,
        Channel::Hxx,
        Channel::Hxy,
        Channel::Hyy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Value, gradient and Hessian of a scalar field of `(x, y)`.
///
/// Only one mixed partial is stored, so Hessian symmetry holds by construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub v: f64,
    pub gx: f64,
    pub gy: f64,
    pub hxx: f64,
    pub hxy: f64,
    pub hyy: f64,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 {
        v: 0.0,
        gx: 0.0,
        gy: 0.0,
        hxx: 0.0,
        hxy: 0.0,
        hyy: 0.0,
    };

    /// A jet with no spatial dependence.
    pub fn constant(v: f64) -> Self {
        Jet2 { v, ..Jet2::ZERO }
    }

    pub fn from_array(c: [f64; 6]) -> Self {
        Jet2 {
            v: c[0],
            gx: c[1],
            gy: c[2],
            hxx: c[3],
            hxy: c[4],
            hyy: c[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.v, self.gx, self.gy, self.hxx, self.hxy, self.hyy]
    }

    pub fn get(&self, ch: Channel) -> f64 {
        self.to_array()[ch.index()]
    }

    pub fn laplacian(&self) -> f64 {
        self.hxx + self.hyy
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn scale(self, s: f64) -> Self {
        Jet2::from_array(self.to_array().map(|c| c * s))
    }

    /// Spectral norm of the symmetric 2×2 Hessian.
    pub fn hessian_norm(&self) -> f64 {
        let mean = 0.5 * (self.hxx + self.hyy);
        let half_diff = 0.5 * (self.hxx - self.hyy);
        let rad = half_diff.hypot(self.hxy);
        mean.abs() + rad
    }
}

/// Jet of the coordinate `x` seeded along `axis`.
pub fn jet_seed(x: f64, axis: Axis) -> Jet2 {
    match axis {
        Axis::X => Jet2 {
            v: x,
            gx: 1.0,
            ..Jet2::ZERO
        },
        Axis::Y => Jet2 {
            v: x,
            gy: 1.0,
            ..Jet2::ZERO
        },
    }
}

/// Leibniz rule truncated at second order.
pub fn jet_mul(a: Jet2, b: Jet2) -> Jet2 {
    Jet2 {
        v: a.v * b.v,
        gx: a.gx * b.v + a.v * b.gx,
        gy: a.gy * b.v + a.v * b.gy,
        hxx: a.hxx * b.v + 2.0 * a.gx * b.gx + a.v * b.hxx,
        hxy: a.hxy * b.v + a.gx * b.gy + a.gy * b.gx + a.v * b.hxy,
        hyy: a.hyy * b.v + 2.0 * a.gy * b.gy + a.v * b.hyy,
    }
}

/// Second-order chain rule for `f(a)` given `f(a.v)`, `f'(a.v)` and `f''(a.v)`.
pub fn jet_chain(a: Jet2, f0: f64, f1: f64, f2: f64) -> Jet2 {
    Jet2 {
        v: f0,
        gx: f1 * a.gx,
        gy: f1 * a.gy,
        hxx: f2 * a.gx * a.gx + f1 * a.hxx,
        hxy: f2 * a.gx * a.gy + f1 * a.hxy,
        hyy: f2 * a.gy * a.gy + f1 * a.hyy,
    }
}

/// Cotangent of `a` in `a·b`, given the cotangent `g` of the product.
///
/// Cotangents are stored in a [`Jet2`] channel by channel.
#[inline]
pub(crate) fn mul_adjoint(g: Jet2, b: Jet2) -> Jet2 {
    Jet2 {
        v: g.v * b.v + g.gx * b.gx + g.gy * b.gy + g.hxx * b.hxx + g.hxy * b.hxy + g.hyy * b.hyy,
        gx: g.gx * b.v + 2.0 * g.hxx * b.gx + g.hxy * b.gy,
        gy: g.gy * b.v + 2.0 * g.hyy * b.gy + g.hxy * b.gx,
        hxx: g.hxx * b.v,
        hxy: g.hxy * b.v,
        hyy: g.hyy * b.v,
    }
}

/// Cotangent of `a` in `f(a)`, given the first three derivatives of `f` at `a.v`.
#[inline]
pub(crate) fn chain_adjoint(g: Jet2, a: Jet2, f1: f64, f2: f64, f3: f64) -> Jet2 {
    let (x, y) = (a.gx, a.gy);
    Jet2 {
        v: g.v * f1
            + (g.gx * x + g.gy * y) * f2
            + g.hxx * (f3 * x * x + f2 * a.hxx)
            + g.hxy * (f3 * x * y + f2 * a.hxy)
            + g.hyy * (f3 * y * y + f2 * a.hyy),
        gx: g.gx * f1 + (2.0 * g.hxx * x + g.hxy * y) * f2,
        gy: g.gy * f1 + (2.0 * g.hyy * y + g.hxy * x) * f2,
        hxx: g.hxx * f1,
        hxy: g.hxy * f1,
        hyy: g.hyy * f1,
    }
}

/// Channel-wise inner product.
#[inline]
pub(crate) fn dot(a: Jet2, b: Jet2) -> f64 {
    a.v * b.v + a.gx * b.gx + a.gy * b.gy + a.hxx * b.hxx + a.hxy * b.hxy + a.hyy * b.hyy
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2 {
            v: self.v + rhs.v,
            gx: self.gx + rhs.gx,
            gy: self.gy + rhs.gy,
            hxx: self.hxx + rhs.hxx,
            hxy: self.hxy + rhs.hxy,
            hyy: self.hyy + rhs.hyy,
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        jet_mul(self, rhs)
    }
}

/// Scalar nonlinearities with analytic derivatives up to third order.
///
/// The third derivative is needed by the reverse sweep: the adjoint of the
/// Hessian channels of `f(a)` depends on `f'''`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Exp,
    Reciprocal,
    Identity,
}

impl Activation {
    /// `(f, f', f'', f''')` at `x`.
    #[inline]
    pub fn derivatives(self, x: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t)]
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                let d1 = s * (1.0 - s);
                [s, d1, d1 * (1.0 - 2.0 * s), d1 * (1.0 - 6.0 * s + 6.0 * s * s)]
            }
            Activation::Exp => {
                let e = x.exp();
                [e, e, e, e]
            }
            Activation::Reciprocal => {
                let r = 1.0 / x;
                let r2 = r * r;
                [r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2]
            }
            Activation::Identity => [x, 1.0, 0.0, 0.0],
        }
    }

    pub fn apply(self, a: Jet2) -> Jet2 {
        let [f0, f1, f2, _] = self.derivatives(a.v);
        jet_chain(a, f0, f1, f2)
    }

    /// Supremum of `|f''|` over the real line, where it is finite.
    pub fn sup_second_derivative(self) -> Option<f64> {
        match self {
            // attained at tanh(x) = 1/sqrt(3)
            Activation::Tanh => Some(4.0 / (3.0 * 3f64.sqrt())),
            // attained at sigmoid(x) = (3 ± sqrt(3)) / 6
            Activation::Sigmoid => Some(1.0 / (6.0 * 3f64.sqrt())),
            Activation::Identity => Some(0.0),
            Activation::Exp | Activation::Reciprocal => None,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}
