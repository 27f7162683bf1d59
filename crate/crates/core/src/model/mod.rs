//! Backbone predictors mapping dimensionless coordinates to jet-valued heads.
//!
//! Four backbones share one readout and differ only in their hidden layers:
//! dense `tanh` layers, one-step liquid (leaky Euler) layers, single-step
//! gated layers, and gated layers whose output is blended through the liquid
//! leak. Layers are applied without any time unrolling.

mod layers;
mod layout;
mod network;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;

pub use layers::{gated_step, liquid_step, GatedNodes, H0};
pub use layout::{Block, LayerLayout, Layout, ModelParams, ReadoutLayout, LAMBDA_RAW_INIT};
pub use network::{seed_points, EVAL_CHUNK};

/// The four backbone families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "PINN")]
    Pinn,
    #[serde(rename = "LNN_PINN")]
    LnnPinn,
    #[serde(rename = "LSTM_PINN")]
    LstmPinn,
    #[serde(rename = "LSTM_LNN_PINN")]
    LstmLnnPinn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Pinn,
        Variant::LnnPinn,
        Variant::LstmPinn,
        Variant::LstmLnnPinn,
    ];

    pub fn layer_kind(self) -> LayerKind {
        match self {
            Variant::Pinn => LayerKind::Dense,
            Variant::LnnPinn => LayerKind::Liquid,
            Variant::LstmPinn => LayerKind::Gated,
            Variant::LstmLnnPinn => LayerKind::GatedLiquid,
        }
    }

    /// Machine tag used in configs and checkpoints.
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Pinn => "PINN",
            Variant::LnnPinn => "LNN_PINN",
            Variant::LstmPinn => "LSTM_PINN",
            Variant::LstmLnnPinn => "LSTM_LNN_PINN",
        }
    }

    /// Learning rate each backbone is benchmarked at in the reference sweep.
    pub fn reference_lr(self) -> f64 {
        match self {
            Variant::Pinn => 1e-4,
            Variant::LnnPinn => 7e-4,
            Variant::LstmPinn => 1e-3,
            Variant::LstmLnnPinn => 8e-4,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Pinn => "PINN",
            Variant::LnnPinn => "LNN-PINN",
            Variant::LstmPinn => "LSTM-PINN",
            Variant::LstmLnnPinn => "LSTM-LNN-PINN",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == norm)
            .ok_or_else(|| format!("unknown backbone `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Dense,
    Liquid,
    Gated,
    GatedLiquid,
}

/// Output heads: the potential `u` alone, or `u` with a flux proxy `(ωx, ωy)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadMode {
    #[default]
    Potential,
    Mixed,
}

impl HeadMode {
    pub fn outputs(self) -> usize {
        match self {
            HeadMode::Potential => 1,
            HeadMode::Mixed => 3,
        }
    }
}

/// One hidden layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input_width: usize,
    pub width: usize,
    /// Nonlinearity of dense layers and of the liquid response function.
    /// Gates always use the logistic sigmoid and the candidate cell `tanh`.
    pub activation: Activation,
}

/// Architecture of a predictor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub variant: Variant,
    pub depth: usize,
    pub width: usize,
    pub head: HeadMode,
    pub activation: Activation,
}

impl Backbone {
    pub fn new(variant: Variant) -> Self {
        Backbone {
            variant,
            depth: 2,
            width: 64,
            head: HeadMode::Potential,
            activation: Activation::Tanh,
        }
    }

    pub fn with_size(mut self, depth: usize, width: usize) -> Self {
        self.depth = depth;
        self.width = width;
        self
    }

    pub fn with_head(mut self, head: HeadMode) -> Self {
        self.head = head;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        (0..self.depth)
            .map(|l| LayerSpec {
                kind: self.variant.layer_kind(),
                input_width: if l == 0 { 2 } else { self.width },
                width: self.width,
                activation: self.activation,
            })
            .collect()
    }
}

#[cfg(test)]
mod step_tests;
