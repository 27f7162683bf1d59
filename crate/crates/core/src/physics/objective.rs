use crate::autodiff::{Channel, NodeId, ResidualTerm, Tape};
use crate::error::{Error, Result};
use crate::model::{seed_points, HeadMode, ModelParams};

use super::constants::{LossWeights, NonDimScheme};
use super::sampling::CollocationSet;

/// Loss values of one objective evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub pde: f64,
    pub bc: f64,
}

/// Which side of the objective a batch of points feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Pde,
    Bc,
}

/// One slice of collocation points, carrying its per-point quadrature weight.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub part: Part,
    pub points: &'a [[f64; 2]],
    pub weight: f64,
}

/// Splits the collocation set into batches of at most `chunk` points, interior first.
pub fn batches(set: &CollocationSet, chunk: usize) -> Vec<Batch<'_>> {
    let chunk = chunk.max(1);
    let wi = set.interior_weight();
    let wb = set.boundary_weight();
    set.interior
        .chunks(chunk)
        .map(|points| Batch {
            part: Part::Pde,
            points,
            weight: wi,
        })
        .chain(set.boundary.chunks(chunk).map(|points| Batch {
            part: Part::Bc,
            points,
            weight: wb,
        }))
        .collect()
}

fn squares(tape: &mut Tape, out: NodeId, terms: Vec<ResidualTerm>, offset: f64, n: usize, w: f64) -> Result<NodeId> {
    let r = tape.residual(out, terms, vec![offset; n])?;
    tape.weighted_squares(r, vec![w; n])
}

/// Records the weighted squared residuals of one batch; returns a `1×1` node.
pub fn record_batch(
    tape: &mut Tape,
    params: &ModelParams,
    batch: &Batch,
    scheme: &NonDimScheme,
    w: &LossWeights,
) -> Result<NodeId> {
    use Channel::*;
    let n = batch.points.len();
    if n == 0 {
        return Err(Error::Domain("empty collocation batch".into()));
    }
    let coords = tape.constant_jets(seed_points(batch.points));
    let out = params.forward_nodes(tape, coords)?;
    let t = ResidualTerm::new;
    let mixed = params.head() == HeadMode::Mixed;
    match batch.part {
        Part::Pde => {
            let div_w = batch.weight * w.w2 * w.h_omega * w.h_omega;
            if !mixed {
                return squares(tape, out, vec![t(0, Hxx, -1.0), t(0, Hyy, -1.0)], -scheme.q_hat, n, div_w);
            }
            let tw = batch.weight * w.w1;
            let tx = squares(tape, out, vec![t(1, V, 1.0), t(0, Gx, 1.0)], 0.0, n, tw)?;
            let ty = squares(tape, out, vec![t(2, V, 1.0), t(0, Gy, 1.0)], 0.0, n, tw)?;
            let div = squares(tape, out, vec![t(1, Gx, 1.0), t(2, Gy, 1.0)], -scheme.q_hat, n, div_w)?;
            let clo = squares(tape, out, vec![t(2, Gx, 1.0), t(1, Gy, -1.0)], 0.0, n, batch.weight * w.w3)?;
            tape.combine(vec![(tx, 1.0), (ty, 1.0), (div, 1.0), (clo, 1.0)])
        }
        Part::Bc => {
            let nx: Vec<f64> = batch.points.iter().map(|p| p[0]).collect();
            let ny: Vec<f64> = batch.points.iter().map(|p| p[1]).collect();
            let terms = if mixed {
                vec![
                    ResidualTerm::per_row(1, V, nx),
                    ResidualTerm::per_row(2, V, ny),
                    t(0, V, -scheme.bi),
                ]
            } else {
                let neg = |v: Vec<f64>| v.into_iter().map(|a| -a).collect();
                vec![
                    ResidualTerm::per_row(0, Gx, neg(nx)),
                    ResidualTerm::per_row(0, Gy, neg(ny)),
                    t(0, V, -scheme.bi),
                ]
            };
            squares(tape, out, terms, 0.0, n, batch.weight * w.w4 * w.h_gamma)
        }
    }
}

/// Loss of one batch and, optionally, its parameter gradient.
pub fn batch_loss(
    params: &ModelParams,
    batch: &Batch,
    scheme: &NonDimScheme,
    w: &LossWeights,
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let mut tape = Tape::new(&params.flat);
    let node = record_batch(&mut tape, params, batch, scheme, w)?;
    let value = tape.scalar(node)?;
    let grad = if with_grad && value.is_finite() {
        Some(tape.backward(node)?)
    } else {
        None
    };
    Ok((value, grad))
}

/// Adds per-batch results in batch order so the sum does not depend on how batches were scheduled.
pub fn reduce(results: Vec<(Part, f64, Option<Vec<f64>>)>, n_params: usize) -> (LossParts, Option<Vec<f64>>) {
    let mut parts = LossParts::default();
    let mut grad: Option<Vec<f64>> = None;
    for (part, value, g) in results {
        match part {
            Part::Pde => parts.pde += value,
            Part::Bc => parts.bc += value,
        }
        if let Some(g) = g {
            let acc = grad.get_or_insert_with(|| vec![0.0; n_params]);
            for (a, b) in acc.iter_mut().zip(&g) {
                *a += b;
            }
        }
    }
    parts.total = super::loss_total(parts.pde, parts.bc);
    (parts, grad)
}

/// Full objective over a collocation set, evaluated batch by batch in order.
pub fn objective(
    params: &ModelParams,
    set: &CollocationSet,
    scheme: &NonDimScheme,
    w: &LossWeights,
    chunk: usize,
    with_grad: bool,
) -> Result<(LossParts, Option<Vec<f64>>)> {
    let mut results = Vec::new();
    for b in batches(set, chunk) {
        let (v, g) = batch_loss(params, &b, scheme, w, with_grad)?;
        results.push((b.part, v, g));
    }
    Ok(reduce(results, params.len()))
}
