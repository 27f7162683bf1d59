use crate::autodiff::{jet_seed, Axis, Jet2, JetTensor, NodeId, Tape};
use crate::error::{Error, Result};

use super::layers::{layer_nodes, readout_nodes, H0};
use super::layout::ModelParams;

/// Rows per tape when evaluating large point sets.
pub const EVAL_CHUNK: usize = 2048;

/// Coordinates seeded as jets: column 0 along X, column 1 along Y.
pub fn seed_points(points: &[[f64; 2]]) -> JetTensor {
    let jets: Vec<Jet2> = points
        .iter()
        .flat_map(|p| [jet_seed(p[0], Axis::X), jet_seed(p[1], Axis::Y)])
        .collect();
    JetTensor::from_jets(points.len(), 2, &jets)
}

impl ModelParams {
    /// Records the full predictor on `tape`; `coords` is an `N×2` jet node.
    ///
    /// Layer 1 reads the coordinates with zero previous state; every deeper
    /// layer reads the previous hidden output both as input and as state.
    pub fn forward_nodes(&self, tape: &mut Tape, coords: NodeId) -> Result<NodeId> {
        let mut h = coords;
        for (l, layer) in self.layout.layers.iter().enumerate() {
            let h0 = if l == 0 { H0::Zero } else { H0::SameAsInput };
            h = layer_nodes(tape, layer, h, h0)?;
        }
        readout_nodes(tape, &self.layout.readout, h)
    }

    /// Output jets at one point; `x`, `y` are normally seeded on X and Y.
    pub fn forward(&self, x: Jet2, y: Jet2) -> Result<Vec<Jet2>> {
        let mut tape = Tape::new(&self.flat);
        let c = tape.constant_jets(JetTensor::from_jets(1, 2, &[x, y]));
        let out = self.forward_nodes(&mut tape, c)?;
        Ok(tape.jets(out)?.to_jets())
    }

    /// Output jets at many points, evaluated in fixed-size chunks.
    pub fn forward_points(&self, points: &[[f64; 2]]) -> Result<JetTensor> {
        let heads = self.layout.readout.outputs;
        let mut out = JetTensor::zeros(points.len(), heads);
        let plane = points.len() * heads;
        for (k, chunk) in points.chunks(EVAL_CHUNK).enumerate() {
            let mut tape = Tape::new(&self.flat);
            let c = tape.constant_jets(seed_points(chunk));
            let id = self.forward_nodes(&mut tape, c)?;
            let t = tape.jets(id)?;
            let start = k * EVAL_CHUNK * heads;
            for ch in 0..6 {
                out.data[ch * plane + start..][..t.plane()].copy_from_slice(&t.data[ch * t.plane()..][..t.plane()]);
            }
        }
        Ok(out)
    }

    /// Number of maps in the composition: hidden layers plus the readout.
    pub fn num_maps(&self) -> usize {
        self.layout.layers.len() + 1
    }

    /// Applies map `l` alone to `input` (rows are independent points).
    ///
    /// Maps `0..depth` are the hidden layers with the same state wiring as
    /// [`forward_nodes`](Self::forward_nodes); map `depth` is the readout.
    pub fn apply_map(&self, l: usize, input: &JetTensor) -> Result<JetTensor> {
        let mut tape = Tape::new(&self.flat);
        let x = tape.constant_jets(input.clone());
        let id = match self.layout.layers.get(l) {
            Some(layer) => {
                let h0 = if l == 0 { H0::Zero } else { H0::SameAsInput };
                layer_nodes(&mut tape, layer, x, h0)?
            }
            None if l == self.layout.layers.len() => readout_nodes(&mut tape, &self.layout.readout, x)?,
            None => return Err(Error::Domain(format!("map index {l} out of range"))),
        };
        Ok(tape.jets(id)?.clone())
    }
}
