use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Moment estimates and hyperparameters of Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// The step counter is incremented first, so the first call corrects with `t = 1`.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Structural(format!(
            "adam: {} parameters, {} gradient entries, {} moments",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::TrainingAborted {
            iteration: state.t as usize + 1,
            reason: format!("gradient component {k} is {}", grad[k]),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
