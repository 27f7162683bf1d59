use crate::autodiff::{Activation, Jet2, JetTensor, NodeId, Tape};
use crate::error::{Error, Result};

use super::layout::{LayerLayout, ReadoutLayout};

/// Previous hidden state fed to a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum H0 {
    /// First layer: no previous state.
    Zero,
    /// The layer input doubles as the previous state (stacked layers).
    SameAsInput,
    Node(NodeId),
}

/// Intermediate nodes of one gated step.
#[derive(Clone, Copy, Debug)]
pub struct GatedNodes {
    pub input_gate: NodeId,
    pub forget_gate: NodeId,
    pub output_gate: NodeId,
    pub candidate: NodeId,
    pub cell: NodeId,
    pub hidden: NodeId,
}

/// `x_in · Wᵀ + h0 · Uᵀ + b` with the `U` term dropped when `h0 = 0` and the
/// two weights summed when `h0` is the input itself.
fn affine_pair(
    tape: &mut Tape,
    x_in: NodeId,
    h0: H0,
    w: NodeId,
    u: NodeId,
    b: NodeId,
) -> Result<NodeId> {
    match h0 {
        H0::Zero => tape.affine(x_in, w, b),
        H0::SameAsInput => {
            let wu = tape.plain_add(w, u)?;
            tape.affine(x_in, wu, b)
        }
        H0::Node(h) => {
            let zx = tape.affine(x_in, w, b)?;
            let zh = tape.matmul(h, u)?;
            tape.add(zx, zh)
        }
    }
}

fn h0_node(x_in: NodeId, h0: H0) -> Option<NodeId> {
    match h0 {
        H0::Zero => None,
        H0::SameAsInput => Some(x_in),
        H0::Node(h) => Some(h),
    }
}

fn dense(tape: &mut Tape, x_in: NodeId, w: usize, b: usize, d: usize, n: usize, act: Activation) -> Result<NodeId> {
    let w = tape.param(w, d, n)?;
    let b = tape.param(b, 1, d)?;
    let z = tape.affine(x_in, w, b)?;
    tape.activation(z, act)
}

/// Liquid one-step update on the tape.
pub(crate) fn liquid_nodes(tape: &mut Tape, layer: &LayerLayout, x_in: NodeId, h0: H0) -> Result<NodeId> {
    let LayerLayout::Liquid {
        spec,
        w_in,
        b_in,
        w_recur,
        lambda_raw,
    } = layer
    else {
        return Err(Error::Structural("liquid step on a non-liquid layer".into()));
    };
    let (d, n) = (spec.width, spec.input_width);
    if h0 == H0::SameAsInput && n != d {
        return Err(Error::Structural(format!(
            "layer input width {n} cannot double as a width-{d} state"
        )));
    }
    let w = tape.param(*w_in, d, n)?;
    let u = tape.param(*w_recur, d, d)?;
    let b = tape.param(*b_in, 1, d)?;
    let pre = affine_pair(tape, x_in, h0, w, u, b)?;
    let phi = tape.activation(pre, spec.activation)?;
    let lam = tape.param(*lambda_raw, 1, d)?;
    tape.leak(phi, h0_node(x_in, h0), lam)
}

/// Gated single step on the tape; optionally blended through the liquid leak.
pub(crate) fn gated_nodes(tape: &mut Tape, layer: &LayerLayout, x_in: NodeId, h0: H0) -> Result<GatedNodes> {
    let (spec, w, u, b, c0) = match layer {
        LayerLayout::Gated { spec, w, u, b, c0 } | LayerLayout::GatedLiquid { spec, w, u, b, c0, .. } => {
            (spec, *w, *u, *b, *c0)
        }
        _ => return Err(Error::Structural("gated step on a non-gated layer".into())),
    };
    let (d, n) = (spec.width, spec.input_width);
    if h0 == H0::SameAsInput && n != d {
        return Err(Error::Structural(format!(
            "layer input width {n} cannot double as a width-{d} state"
        )));
    }
    let w = tape.param(w, 4 * d, n)?;
    let u = tape.param(u, 4 * d, d)?;
    let b = tape.param(b, 1, 4 * d)?;
    let pre = affine_pair(tape, x_in, h0, w, u, b)?;
    let gate_pre = tape.slice(pre, 0, 3 * d)?;
    let gates = tape.activation(gate_pre, Activation::Sigmoid)?;
    let input_gate = tape.slice(gates, 0, d)?;
    let forget_gate = tape.slice(gates, d, d)?;
    let output_gate = tape.slice(gates, 2 * d, d)?;
    let cand_pre = tape.slice(pre, 3 * d, d)?;
    let candidate = tape.activation(cand_pre, Activation::Tanh)?;
    let c0 = tape.param(c0, 1, d)?;
    let kept = tape.scale_cols(forget_gate, c0)?;
    let written = tape.mul(input_gate, candidate)?;
    let cell = tape.add(kept, written)?;
    let squashed = tape.activation(cell, Activation::Tanh)?;
    let hidden = tape.mul(output_gate, squashed)?;
    Ok(GatedNodes {
        input_gate,
        forget_gate,
        output_gate,
        candidate,
        cell,
        hidden,
    })
}

/// Gated step as a single fused cell node; same value as [`gated_nodes`]`.hidden`.
pub(crate) fn gated_hidden(tape: &mut Tape, layer: &LayerLayout, x_in: NodeId, h0: H0) -> Result<NodeId> {
    let (spec, w, u, b, c0) = match layer {
        LayerLayout::Gated { spec, w, u, b, c0 } | LayerLayout::GatedLiquid { spec, w, u, b, c0, .. } => {
            (spec, *w, *u, *b, *c0)
        }
        _ => return Err(Error::Structural("gated step on a non-gated layer".into())),
    };
    let (d, n) = (spec.width, spec.input_width);
    if h0 == H0::SameAsInput && n != d {
        return Err(Error::Structural(format!(
            "layer input width {n} cannot double as a width-{d} state"
        )));
    }
    let w = tape.param(w, 4 * d, n)?;
    let u = tape.param(u, 4 * d, d)?;
    let b = tape.param(b, 1, 4 * d)?;
    let pre = affine_pair(tape, x_in, h0, w, u, b)?;
    let c0 = tape.param(c0, 1, d)?;
    tape.gated_cell(pre, c0)
}

/// Hidden output of one layer of any kind.
pub(crate) fn layer_nodes(tape: &mut Tape, layer: &LayerLayout, x_in: NodeId, h0: H0) -> Result<NodeId> {
    match layer {
        LayerLayout::Dense { spec, w, b } => {
            dense(tape, x_in, *w, *b, spec.width, spec.input_width, spec.activation)
        }
        LayerLayout::Liquid { .. } => liquid_nodes(tape, layer, x_in, h0),
        LayerLayout::Gated { .. } => gated_hidden(tape, layer, x_in, h0),
        LayerLayout::GatedLiquid { spec, lambda_raw, .. } => {
            let h = gated_hidden(tape, layer, x_in, h0)?;
            let lam = tape.param(*lambda_raw, 1, spec.width)?;
            tape.leak(h, h0_node(x_in, h0), lam)
        }
    }
}

pub(crate) fn readout_nodes(tape: &mut Tape, r: &ReadoutLayout, h: NodeId) -> Result<NodeId> {
    let w = tape.param(r.w, r.outputs, r.inputs)?;
    let b = tape.param(r.b, 1, r.outputs)?;
    tape.affine(h, w, b)
}

fn one_row(tape: &mut Tape, v: &[Jet2]) -> NodeId {
    tape.constant_jets(JetTensor::from_jets(1, v.len(), v))
}

/// One liquid update for a single point:
/// `h = α ⊙ h0 + (1 − α) ⊙ σ(W_recur h0 + W_in x_in + b)`, `α = e^{−λ}`.
pub fn liquid_step(layer: &LayerLayout, flat: &[f64], x_in: &[Jet2], h0: &[Jet2]) -> Result<Vec<Jet2>> {
    check_widths(layer, x_in, h0)?;
    let mut tape = Tape::new(flat);
    let x = one_row(&mut tape, x_in);
    let h = one_row(&mut tape, h0);
    let out = liquid_nodes(&mut tape, layer, x, H0::Node(h))?;
    Ok(tape.jets(out)?.to_jets())
}

/// One gated update for a single point; returns `(h, c)`.
pub fn gated_step(
    layer: &LayerLayout,
    flat: &[f64],
    x_in: &[Jet2],
    h0: &[Jet2],
) -> Result<(Vec<Jet2>, Vec<Jet2>)> {
    check_widths(layer, x_in, h0)?;
    let mut tape = Tape::new(flat);
    let x = one_row(&mut tape, x_in);
    let h = one_row(&mut tape, h0);
    let g = gated_nodes(&mut tape, layer, x, H0::Node(h))?;
    Ok((tape.jets(g.hidden)?.to_jets(), tape.jets(g.cell)?.to_jets()))
}

fn check_widths(layer: &LayerLayout, x_in: &[Jet2], h0: &[Jet2]) -> Result<()> {
    let spec = layer.spec();
    if x_in.len() != spec.input_width || h0.len() != spec.width {
        return Err(Error::Structural(format!(
            "layer expects input {} and state {}, got {} and {}",
            spec.input_width,
            spec.width,
            x_in.len(),
            h0.len()
        )));
    }
    Ok(())
}
