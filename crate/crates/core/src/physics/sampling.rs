use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// i.i.d. uniform points on the open unit disk (`r = √U₁`, `φ = 2πU₂`).
pub fn sample_interior(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = rng.gen::<f64>().sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            [r * phi.cos(), r * phi.sin()]
        })
        .collect()
}

/// i.i.d. uniform angles on the unit circle.
pub fn sample_boundary(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..n)
        .map(|_| {
            let phi = 2.0 * PI * rng.gen::<f64>();
            [phi.cos(), phi.sin()]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResamplePolicy {
    #[default]
    Fixed,
    EveryIteration,
}

/// Interior and boundary collocation points with their Monte-Carlo weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<[f64; 2]>,
    pub boundary: Vec<[f64; 2]>,
    pub seed: u64,
    pub policy: ResamplePolicy,
}

impl CollocationSet {
    pub fn new(n_int: usize, n_bnd: usize, seed: u64, policy: ResamplePolicy) -> Self {
        CollocationSet {
            interior: sample_interior(n_int, seed),
            boundary: sample_boundary(n_bnd, seed),
            seed,
            policy,
        }
    }

    /// Area weight `π/N_int` of each interior point.
    pub fn interior_weight(&self) -> f64 {
        PI / self.interior.len() as f64
    }

    /// Arc-length weight `2π/N_bnd` of each boundary point.
    pub fn boundary_weight(&self) -> f64 {
        2.0 * PI / self.boundary.len() as f64
    }

    /// Prepares the set for `iteration` (0-based); only redraws under `EveryIteration`.
    pub fn refresh(&mut self, iteration: usize) {
        if self.policy == ResamplePolicy::EveryIteration && iteration > 0 {
            let s = self.seed.wrapping_add(iteration as u64);
            self.interior = sample_interior(self.interior.len(), s);
            self.boundary = sample_boundary(self.boundary.len(), s);
        }
    }
}
