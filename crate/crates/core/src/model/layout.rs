use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backbone, HeadMode, LayerKind, LayerSpec};

/// A named contiguous block of the flat parameter vector, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one hidden layer's parameters.
///
/// Gate matrices are stored stacked in the order input, forget, output,
/// candidate, so `w` addresses a `4d × in` matrix whose row bands are
/// `W_i, W_f, W_o, W_c`; `u` and `b` are stacked the same way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerLayout {
    Dense {
        spec: LayerSpec,
        w: usize,
        b: usize,
    },
    Liquid {
        spec: LayerSpec,
        w_in: usize,
        b_in: usize,
        w_recur: usize,
        lambda_raw: usize,
    },
    Gated {
        spec: LayerSpec,
        w: usize,
        u: usize,
        b: usize,
        c0: usize,
    },
    GatedLiquid {
        spec: LayerSpec,
        w: usize,
        u: usize,
        b: usize,
        c0: usize,
        lambda_raw: usize,
    },
}

impl LayerLayout {
    pub fn spec(&self) -> &LayerSpec {
        match self {
            LayerLayout::Dense { spec, .. }
            | LayerLayout::Liquid { spec, .. }
            | LayerLayout::Gated { spec, .. }
            | LayerLayout::GatedLiquid { spec, .. } => spec,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutLayout {
    pub outputs: usize,
    pub inputs: usize,
    pub w: usize,
    pub b: usize,
}

/// Layout descriptor: every named block plus per-layer offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub blocks: Vec<Block>,
    pub layers: Vec<LayerLayout>,
    pub readout: ReadoutLayout,
    pub total: usize,
}

/// `softplus⁻¹(1)`, so a freshly initialised leak coefficient is exactly 1.
pub const LAMBDA_RAW_INIT: f64 = 0.541_324_854_612_918;

const GATES: [&str; 4] = ["i", "f", "o", "c"];

impl Layout {
    pub fn from_specs(specs: &[LayerSpec], outputs: usize) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |blocks: &mut Vec<Block>, name: String, rows: usize, cols: usize| {
            let start = offset;
            blocks.push(Block {
                name,
                offset: start,
                rows,
                cols,
            });
            offset += rows * cols;
            start
        };
        let mut layers = Vec::with_capacity(specs.len());
        for (l, spec) in specs.iter().enumerate() {
            let p = format!("layer{}", l + 1);
            let (d, n) = (spec.width, spec.input_width);
            let layer = match spec.kind {
                LayerKind::Dense => LayerLayout::Dense {
                    spec: *spec,
                    w: push(&mut blocks, format!("{p}.W"), d, n),
                    b: push(&mut blocks, format!("{p}.b"), 1, d),
                },
                LayerKind::Liquid => LayerLayout::Liquid {
                    spec: *spec,
                    w_in: push(&mut blocks, format!("{p}.W_in"), d, n),
                    b_in: push(&mut blocks, format!("{p}.b_in"), 1, d),
                    w_recur: push(&mut blocks, format!("{p}.W_recur"), d, d),
                    lambda_raw: push(&mut blocks, format!("{p}.lambda_raw"), 1, d),
                },
                LayerKind::Gated | LayerKind::GatedLiquid => {
                    let w = GATES
                        .iter()
                        .map(|g| push(&mut blocks, format!("{p}.W_{g}"), d, n))
                        .min()
                        .unwrap();
                    let u = GATES
                        .iter()
                        .map(|g| push(&mut blocks, format!("{p}.U_{g}"), d, d))
                        .min()
                        .unwrap();
                    let b = GATES
                        .iter()
                        .map(|g| push(&mut blocks, format!("{p}.b_{g}"), 1, d))
                        .min()
                        .unwrap();
                    let c0 = push(&mut blocks, format!("{p}.c0"), 1, d);
                    if spec.kind == LayerKind::Gated {
                        LayerLayout::Gated {
                            spec: *spec,
                            w,
                            u,
                            b,
                            c0,
                        }
                    } else {
                        LayerLayout::GatedLiquid {
                            spec: *spec,
                            w,
                            u,
                            b,
                            c0,
                            lambda_raw: push(&mut blocks, format!("{p}.lambda_raw"), 1, d),
                        }
                    }
                }
            };
            layers.push(layer);
        }
        let inputs = specs.last().map_or(2, |s| s.width);
        let readout = ReadoutLayout {
            outputs,
            inputs,
            w: push(&mut blocks, "readout.W_out".into(), outputs, inputs),
            b: push(&mut blocks, "readout.b_out".into(), 1, outputs),
        };
        Layout {
            blocks,
            layers,
            readout,
            total: offset,
        }
    }

    pub fn for_backbone(backbone: &Backbone) -> Self {
        Layout::from_specs(&backbone.layer_specs(), backbone.head.outputs())
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Flat parameter vector plus its layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub backbone: Backbone,
    pub layout: Layout,
    pub flat: Vec<f64>,
}

impl ModelParams {
    /// Xavier-uniform weights, zero biases and cell states, leak λ = 1.
    pub fn init(backbone: Backbone, seed: u64) -> Self {
        let layout = Layout::for_backbone(&backbone);
        let flat = init_flat(&layout, seed);
        ModelParams {
            backbone,
            layout,
            flat,
        }
    }

    /// All-zero parameters over a custom layer stack; used to hand-build fixtures.
    pub fn zeros(backbone: Backbone, layout: Layout) -> Self {
        let flat = vec![0.0; layout.total];
        ModelParams {
            backbone,
            layout,
            flat,
        }
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn head(&self) -> HeadMode {
        self.backbone.head
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.block(name).map(|b| &self.flat[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.block(name)?.range();
        Some(&mut self.flat[range])
    }

    /// Decoded leak coefficients `λ = softplus(λ_raw)` of layer `l` (0-based), if it has any.
    pub fn leak(&self, l: usize) -> Option<Vec<f64>> {
        let (spec, off) = match self.layout.layers.get(l)? {
            LayerLayout::Liquid {
                spec, lambda_raw, ..
            }
            | LayerLayout::GatedLiquid {
                spec, lambda_raw, ..
            } => (spec, *lambda_raw),
            _ => return None,
        };
        Some(
            self.flat[off..off + spec.width]
                .iter()
                .map(|&r| crate::autodiff::jet::softplus(r))
                .collect(),
        )
    }
}

fn init_flat(layout: &Layout, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = vec![0.0; layout.total];
    for block in &layout.blocks {
        let field = block.name.rsplit('.').next().unwrap_or("");
        let dst = &mut flat[block.range()];
        if field.starts_with('W') || field.starts_with('U') {
            let bound = (6.0 / (block.rows + block.cols) as f64).sqrt();
            for v in dst.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        } else if field == "lambda_raw" {
            dst.fill(LAMBDA_RAW_INIT);
        }
        // biases and c0 stay zero
    }
    flat
}
