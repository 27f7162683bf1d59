use std::f64::consts::PI;

use crate::autodiff::{Channel, Jet2};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Uniform tensor grid over `[−1,1]²` masked to the open unit disk, plus a
/// uniform ring of boundary points.
///
/// Grid row `i` holds `y = c_i`, column `j` holds `x = c_j`, with
/// `c_k = (2k − (n−1)) / (n−1)`, so the grid is exactly symmetric about both axes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGrid {
    pub resolution: usize,
    pub spacing: f64,
    pub mask: Vec<bool>,
    /// Flat `i·n + j` index of every masked node, in row-major order.
    pub inside: Vec<usize>,
    pub points: Vec<[f64; 2]>,
    pub ring: Vec<[f64; 2]>,
}

impl EvalGrid {
    pub const DEFAULT_RESOLUTION: usize = 201;
    pub const DEFAULT_RING: usize = 720;

    pub fn new(resolution: usize, ring_points: usize) -> Result<Self> {
        if resolution < 3 {
            return Err(Error::Domain(format!("grid resolution {resolution} < 3")));
        }
        if ring_points < 4 {
            return Err(Error::Domain(format!("ring of {ring_points} points < 4")));
        }
        let n = resolution;
        let mut mask = vec![false; n * n];
        let mut inside = Vec::new();
        let mut points = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let p = [Self::coord(n, j), Self::coord(n, i)];
                if p[0] * p[0] + p[1] * p[1] < 1.0 {
                    mask[i * n + j] = true;
                    inside.push(i * n + j);
                    points.push(p);
                }
            }
        }
        let ring = (0..ring_points)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / ring_points as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        Ok(EvalGrid {
            resolution,
            spacing: 2.0 / (n - 1) as f64,
            mask,
            inside,
            points,
            ring,
        })
    }

    fn coord(n: usize, k: usize) -> f64 {
        (2 * k) as f64 / (n - 1) as f64 - 1.0
    }

    /// Quadrature weight of one masked node: disk area over node count.
    pub fn area_weight(&self) -> f64 {
        PI / self.points.len() as f64
    }

    /// Quadrature weight of one ring node: circumference over node count.
    pub fn ring_weight(&self) -> f64 {
        2.0 * PI / self.ring.len() as f64
    }

    /// Spreads per-node values over the full `n×n` raster, `fill` outside the mask.
    pub fn raster(&self, values: &[f64], fill: f64) -> Vec<f64> {
        let mut out = vec![fill; self.resolution * self.resolution];
        for (&k, &v) in self.inside.iter().zip(values) {
            out[k] = v;
        }
        out
    }
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid::new(Self::DEFAULT_RESOLUTION, Self::DEFAULT_RING).expect("default grid")
    }
}

/// Jets of a scalar field on the masked nodes and on the ring of an [`EvalGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub interior: Vec<Jet2>,
    pub ring: Vec<Jet2>,
}

impl GridField {
    pub fn from_fn(grid: &EvalGrid, f: impl Fn([f64; 2]) -> Jet2) -> Self {
        GridField {
            interior: grid.points.iter().map(|&p| f(p)).collect(),
            ring: grid.ring.iter().map(|&p| f(p)).collect(),
        }
    }

    /// The potential head `u` of a predictor.
    pub fn from_params(params: &ModelParams, grid: &EvalGrid) -> Result<Self> {
        Ok(GridField {
            interior: params.forward_points(&grid.points)?.column(0),
            ring: params.forward_points(&grid.ring)?.column(0),
        })
    }

    /// `self − other`, node by node.
    pub fn minus(&self, other: &GridField) -> Result<GridField> {
        if self.interior.len() != other.interior.len() || self.ring.len() != other.ring.len() {
            return Err(Error::Domain("fields live on different grids".into()));
        }
        let sub = |a: &[Jet2], b: &[Jet2]| a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        Ok(GridField {
            interior: sub(&self.interior, &other.interior),
            ring: sub(&self.ring, &other.ring),
        })
    }

    pub fn scaled(&self, s: f64) -> GridField {
        GridField {
            interior: self.interior.iter().map(|j| j.scale(s)).collect(),
            ring: self.ring.iter().map(|j| j.scale(s)).collect(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.interior.iter().map(|j| j.get(Channel::V)).collect()
    }

    pub(crate) fn check(&self, grid: &EvalGrid) -> Result<()> {
        if self.interior.len() != grid.points.len() || self.ring.len() != grid.ring.len() {
            return Err(Error::Domain(format!(
                "field has {}+{} nodes, grid has {}+{}",
                self.interior.len(),
                self.ring.len(),
                grid.points.len(),
                grid.ring.len()
            )));
        }
        Ok(())
    }
}
