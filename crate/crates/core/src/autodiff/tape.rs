//! Reverse-mode tape whose primal values are batches of jets.
//!
//! Every node stores its operation, the indices of its operands and its
//! primal value. Nodes holding [`Value::Jets`] carry full second-order input
//! derivatives; [`Value::Plain`] nodes hold parameter-derived matrices and
//! the scalar reductions that make up a loss. The reverse sweep treats each
//! of the six jet channels as an independent cotangent and applies the
//! transpose of the channel-wise chain rules, so a loss that reads Hessian
//! channels (a PDE residual) still gets exact parameter gradients.

use super::jet::{chain_adjoint as jet_chain_adjoint, dot, jet_chain, mul_adjoint, sigmoid, softplus, Activation, Channel, Jet2};
use super::tensor::{gemm, JetTensor, Matrix, CHANNELS};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }

    /// A handle that was not produced by any tape. Only useful for exercising
    /// the structural checks.
    pub fn dangling(index: usize) -> NodeId {
        NodeId(index)
    }
}

/// Primal value of a node.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Jets(JetTensor),
    Plain(Matrix),
}

impl Value {
    fn len(&self) -> usize {
        match self {
            Value::Jets(t) => t.data.len(),
            Value::Plain(m) => m.data.len(),
        }
    }

    fn data(&self) -> &[f64] {
        match self {
            Value::Jets(t) => &t.data,
            Value::Plain(m) => &m.data,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Jets(_) => "jets",
            Value::Plain(_) => "plain",
        }
    }
}

/// Elementwise maps on plain (parameter-side) values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlainFn {
    /// `ln(1 + e^x)`
    Softplus,
    /// `e^{-x}`
    NegExp,
    /// `1 - x`
    OneMinus,
}

impl PlainFn {
    fn eval(self, x: f64) -> (f64, f64) {
        match self {
            PlainFn::Softplus => (softplus(x), sigmoid(x)),
            PlainFn::NegExp => {
                let e = (-x).exp();
                (e, -e)
            }
            PlainFn::OneMinus => (1.0 - x, -1.0),
        }
    }
}

/// Per-row coefficient of a [`ResidualTerm`].
#[derive(Clone, Debug, PartialEq)]
pub enum Coeff {
    Uniform(f64),
    PerRow(Vec<f64>),
}

impl Coeff {
    #[inline]
    fn at(&self, r: usize) -> f64 {
        match self {
            Coeff::Uniform(c) => *c,
            Coeff::PerRow(v) => v[r],
        }
    }
}

/// One term `coeff · x[row, col].channel` of a residual read-out.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTerm {
    pub col: usize,
    pub channel: Channel,
    pub coeff: Coeff,
}

impl ResidualTerm {
    pub fn new(col: usize, channel: Channel, coeff: f64) -> Self {
        ResidualTerm {
            col,
            channel,
            coeff: Coeff::Uniform(coeff),
        }
    }

    pub fn per_row(col: usize, channel: Channel, coeff: Vec<f64>) -> Self {
        ResidualTerm {
            col,
            channel,
            coeff: Coeff::PerRow(coeff),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Param { offset: usize },
    Constant,
    PlainAdd(NodeId, NodeId),
    PlainMul(NodeId, NodeId),
    PlainMap(NodeId, PlainFn),
    MatMul { x: NodeId, w: NodeId },
    AddBias { x: NodeId, b: NodeId },
    ScaleCols { x: NodeId, s: NodeId },
    Mul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Act { x: NodeId, act: Activation },
    Slice { x: NodeId, start: usize, len: usize },
    Residual { x: NodeId, terms: Vec<ResidualTerm>, offset: Vec<f64> },
    WeightedSquares { x: NodeId, weights: Vec<f64> },
    Combine(Vec<(NodeId, f64)>),
    Affine { x: NodeId, w: NodeId, b: NodeId },
    GatedCell { pre: NodeId, c0: NodeId },
    Leak { x: NodeId, h0: Option<NodeId>, lambda_raw: NodeId },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param { .. } => "param",
            Op::Constant => "constant",
            Op::PlainAdd(..) => "plain_add",
            Op::PlainMul(..) => "plain_mul",
            Op::PlainMap(..) => "plain_map",
            Op::MatMul { .. } => "matmul",
            Op::AddBias { .. } => "add_bias",
            Op::ScaleCols { .. } => "scale_cols",
            Op::Mul(..) => "mul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Act { .. } => "activation",
            Op::Slice { .. } => "slice",
            Op::Residual { .. } => "residual",
            Op::WeightedSquares { .. } => "weighted_squares",
            Op::Combine(..) => "combine",
            Op::Affine { .. } => "affine",
            Op::GatedCell { .. } => "gated_cell",
            Op::Leak { .. } => "leak",
        }
    }

    fn operands(&self) -> Vec<NodeId> {
        match self {
            Op::Param { .. } | Op::Constant => vec![],
            Op::PlainAdd(a, b) | Op::PlainMul(a, b) | Op::Mul(a, b) | Op::Add(a, b) | Op::Sub(a, b) => {
                vec![*a, *b]
            }
            Op::PlainMap(a, _) => vec![*a],
            Op::MatMul { x, w } => vec![*x, *w],
            Op::AddBias { x, b } => vec![*x, *b],
            Op::ScaleCols { x, s } => vec![*x, *s],
            Op::Act { x, .. } | Op::Slice { x, .. } => vec![*x],
            Op::Residual { x, .. } | Op::WeightedSquares { x, .. } => vec![*x],
            Op::Combine(terms) => terms.iter().map(|(n, _)| *n).collect(),
            Op::Affine { x, w, b } => vec![*x, *w, *b],
            Op::GatedCell { pre, c0 } => vec![*pre, *c0],
            Op::Leak { x, h0, lambda_raw } => {
                let mut v = vec![*x, *lambda_raw];
                v.extend(h0);
                v
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Value,
    /// `f', f'', f'''` planes for activation nodes.
    aux: Option<Vec<f64>>,
}

/// A single-writer recording of one evaluation.
///
/// Parameter leaves read from the flat parameter vector the tape was opened
/// on; [`Tape::backward`] returns a gradient of the same length.
pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn value(&self, id: NodeId) -> Result<&Value> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or_else(|| dangling(id, self.nodes.len()))
    }

    pub fn jets(&self, id: NodeId) -> Result<&JetTensor> {
        match self.value(id)? {
            Value::Jets(t) => Ok(t),
            v => Err(kind_error(id, "jets", v)),
        }
    }

    pub fn plain(&self, id: NodeId) -> Result<&Matrix> {
        match self.value(id)? {
            Value::Plain(m) => Ok(m),
            v => Err(kind_error(id, "plain", v)),
        }
    }

    /// Scalar value of a `1×1` plain node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let m = self.plain(id)?;
        if m.shape() != (1, 1) {
            return Err(Error::Structural(format!(
                "node {} is {}x{}, not a scalar",
                id.0, m.rows, m.cols
            )));
        }
        Ok(m.data[0])
    }

    /// Leaf reading `rows·cols` parameters starting at `offset` (row-major).
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> Result<NodeId> {
        let end = offset + rows * cols;
        if end > self.params.len() {
            return Err(Error::Structural(format!(
                "parameter range {offset}..{end} exceeds {} parameters",
                self.params.len()
            )));
        }
        let value = Value::Plain(Matrix::from_vec(rows, cols, self.params[offset..end].to_vec()));
        Ok(self.push(Op::Param { offset }, value, None))
    }

    pub fn constant_jets(&mut self, t: JetTensor) -> NodeId {
        self.push(Op::Constant, Value::Jets(t), None)
    }

    pub fn constant_plain(&mut self, m: Matrix) -> NodeId {
        self.push(Op::Constant, Value::Plain(m), None)
    }

    pub fn plain_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::PlainAdd(a, b))
    }

    pub fn plain_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::PlainMul(a, b))
    }

    pub fn plain_map(&mut self, a: NodeId, f: PlainFn) -> Result<NodeId> {
        self.record(Op::PlainMap(a, f))
    }

    /// `x · wᵀ` applied channel-wise: `x` is `N×k` jets, `w` is an `m×k` plain matrix.
    pub fn matmul(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        self.record(Op::MatMul { x, w })
    }

    /// Adds a `1×m` plain row to the value channel of every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::AddBias { x, b })
    }

    /// Multiplies column `j` of `x` by the constant `s[j]` (a `1×m` plain row).
    pub fn scale_cols(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        self.record(Op::ScaleCols { x, s })
    }

    /// Elementwise jet product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub(a, b))
    }

    pub fn activation(&mut self, x: NodeId, act: Activation) -> Result<NodeId> {
        self.record(Op::Act { x, act })
    }

    /// Columns `start..start+len` of a jet tensor.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.record(Op::Slice { x, start, len })
    }

    /// Reads a linear combination of jet channels per row into an `N×1` plain vector.
    pub fn residual(&mut self, x: NodeId, terms: Vec<ResidualTerm>, offset: Vec<f64>) -> Result<NodeId> {
        self.record(Op::Residual { x, terms, offset })
    }

    /// `Σ_r weights[r] · x[r]²` as a `1×1` plain node.
    pub fn weighted_squares(&mut self, x: NodeId, weights: Vec<f64>) -> Result<NodeId> {
        self.record(Op::WeightedSquares { x, weights })
    }

    /// `Σ coeff · value` over plain nodes of equal shape.
    pub fn combine(&mut self, terms: Vec<(NodeId, f64)>) -> Result<NodeId> {
        self.record(Op::Combine(terms))
    }

    /// `x · wᵀ` with the `1×m` row `b` added to the value channel.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Affine { x, w, b })
    }

    /// Single gated step from stacked pre-activations.
    ///
    /// `pre` is `N×4d` with column bands `(i, f, o, c)`; `c0` is the `1×d`
    /// previous cell state. Returns `h = σ(o) ⊙ tanh(σ(f) ⊙ c0 + σ(i) ⊙ tanh(c))`.
    pub fn gated_cell(&mut self, pre: NodeId, c0: NodeId) -> Result<NodeId> {
        self.record(Op::GatedCell { pre, c0 })
    }

    /// `α ⊙ h0 + (1 − α) ⊙ x` with `α = exp(−softplus(λ_raw))` per column; `h0 = None` means zero.
    pub fn leak(&mut self, x: NodeId, h0: Option<NodeId>, lambda_raw: NodeId) -> Result<NodeId> {
        self.record(Op::Leak { x, h0, lambda_raw })
    }

    fn push(&mut self, op: Op, value: Value, aux: Option<Vec<f64>>) -> NodeId {
        self.nodes.push(Node { op, value, aux });
        NodeId(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op) -> Result<NodeId> {
        let (value, aux) = {
            let nodes = &self.nodes;
            let lookup = |id: NodeId| -> Result<&Value> {
                nodes
                    .get(id.0)
                    .map(|n| &n.value)
                    .ok_or_else(|| dangling(id, nodes.len()))
            };
            eval_op(&op, lookup)?
        };
        Ok(self.push(op, value, aux))
    }

    /// Re-evaluates every node from its leaves and returns the primal values.
    ///
    /// Leaves are re-read from the parameter vector, so this reproduces the
    /// recorded values bitwise when the parameters are unchanged.
    pub fn replay(&self) -> Result<Vec<Value>> {
        let mut values: Vec<Value> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Constant => node.value.clone(),
                Op::Param { offset } => {
                    let Value::Plain(m) = &node.value else {
                        unreachable!("parameter leaves are plain")
                    };
                    let end = offset + m.len();
                    Value::Plain(Matrix::from_vec(m.rows, m.cols, self.params[*offset..end].to_vec()))
                }
                op => {
                    let (v, _) = eval_op(op, |id: NodeId| {
                        values.get(id.0).ok_or_else(|| dangling(id, values.len()))
                    })?;
                    v
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Checks that every operand precedes its consumer.
    pub fn verify_topology(&self) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(bad) = node.op.operands().into_iter().find(|o| o.0 >= i) {
                return Err(Error::Structural(format!(
                    "node {i} ({}) consumes node {} which does not precede it",
                    node.op.name(),
                    bad.0
                )));
            }
        }
        Ok(())
    }

    /// Recorded primal values, in recording order.
    pub fn values(&self) -> impl Iterator<Item = &Value> {
        self.nodes.iter().map(|n| &n.value)
    }

    /// Gradient of the scalar node `loss` with respect to every parameter.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<f64>> {
        let n = self.nodes.len();
        if loss.0 >= n {
            return Err(dangling(loss, n));
        }
        if self.nodes[loss.0].value.len() != 1 || !matches!(self.nodes[loss.0].value, Value::Plain(_)) {
            return Err(Error::Structural(format!(
                "loss node {} must be a 1x1 plain scalar",
                loss.0
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        let mut grad = vec![0.0; self.params.len()];

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if let Some(k) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NumericalOverflow {
                    location: format!("node {i} ({})", self.nodes[i].op.name()),
                    detail: format!("adjoint component {k} is {}", g[k]),
                });
            }
            self.propagate(i, &g, &mut adj, &mut grad)?;
        }
        Ok(grad)
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>], grad: &mut [f64]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |id: NodeId| &self.nodes[id.0].value;
        match &node.op {
            Op::Param { offset } => {
                for (dst, src) in grad[*offset..*offset + g.len()].iter_mut().zip(g) {
                    *dst += src;
                }
            }
            Op::Constant => {}
            Op::PlainAdd(a, b) => {
                axpy(slot(adj, *a, val(*a)), 1.0, g);
                axpy(slot(adj, *b, val(*b)), 1.0, g);
            }
            Op::PlainMul(a, b) => {
                let (av, bv) = (val(*a).data().to_vec(), val(*b).data().to_vec());
                let ga = slot(adj, *a, val(*a));
                for k in 0..g.len() {
                    ga[k] += g[k] * bv[k];
                }
                let gb = slot(adj, *b, val(*b));
                for k in 0..g.len() {
                    gb[k] += g[k] * av[k];
                }
            }
            Op::PlainMap(a, f) => {
                let av = val(*a).data();
                let ga = slot(adj, *a, val(*a));
                for k in 0..g.len() {
                    ga[k] += g[k] * f.eval(av[k]).1;
                }
            }
            Op::MatMul { x, w } => {
                let xt = as_jets(val(*x));
                let wm = as_plain(val(*w));
                let (rows6, k, m) = (CHANNELS * xt.rows, xt.cols, wm.rows);
                let gx = slot(adj, *x, val(*x));
                gemm(rows6, m, k, 1.0, g, m as isize, 1, &wm.data, k as isize, 1, 1.0, gx, k as isize, 1);
                let gw = slot(adj, *w, val(*w));
                gemm(m, rows6, k, 1.0, g, 1, m as isize, &xt.data, k as isize, 1, 1.0, gw, k as isize, 1);
            }
            Op::AddBias { x, b } => {
                let (rows, cols) = as_jets(val(*x)).shape();
                axpy(slot(adj, *x, val(*x)), 1.0, g);
                let gb = slot(adj, *b, val(*b));
                for r in 0..rows {
                    for j in 0..cols {
                        gb[j] += g[r * cols + j];
                    }
                }
            }
            Op::ScaleCols { x, s } => {
                let xt = as_jets(val(*x));
                let sv = as_plain(val(*s)).data.clone();
                let cols = xt.cols;
                let gx = slot(adj, *x, val(*x));
                for (dst, src) in gx.chunks_exact_mut(cols).zip(g.chunks_exact(cols)) {
                    for ((d, s), c) in dst.iter_mut().zip(src).zip(&sv) {
                        *d += s * c;
                    }
                }
                let gs = slot(adj, *s, val(*s));
                for (gr, xr) in g.chunks_exact(cols).zip(xt.data.chunks_exact(cols)) {
                    for ((d, gv), xv) in gs.iter_mut().zip(gr).zip(xr) {
                        *d += gv * xv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let at = as_jets(val(*a));
                let bt = as_jets(val(*b));
                let p = at.plane();
                let mut da = vec![0.0; CHANNELS * p];
                let mut db = vec![0.0; CHANNELS * p];
                leibniz_adjoint(g, &bt.data, &mut da, p);
                leibniz_adjoint(g, &at.data, &mut db, p);
                axpy(slot(adj, *a, val(*a)), 1.0, &da);
                axpy(slot(adj, *b, val(*b)), 1.0, &db);
            }
            Op::Add(a, b) => {
                axpy(slot(adj, *a, val(*a)), 1.0, g);
                axpy(slot(adj, *b, val(*b)), 1.0, g);
            }
            Op::Sub(a, b) => {
                axpy(slot(adj, *a, val(*a)), 1.0, g);
                axpy(slot(adj, *b, val(*b)), -1.0, g);
            }
            Op::Act { x, .. } => {
                let xt = as_jets(val(*x));
                let aux = node.aux.as_ref().expect("activation node stores derivatives");
                let p = xt.plane();
                let gx = slot(adj, *x, val(*x));
                chain_adjoint(g, &xt.data, aux, gx, p);
            }
            Op::Slice { x, start, len } => {
                let xt = as_jets(val(*x));
                let (rows, cols) = xt.shape();
                let gx = slot(adj, *x, val(*x));
                for ch in 0..CHANNELS {
                    for r in 0..rows {
                        let src = &g[ch * rows * len + r * len..][..*len];
                        let dst = &mut gx[ch * rows * cols + r * cols + start..][..*len];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Residual { x, terms, .. } => {
                let xt = as_jets(val(*x));
                let (rows, cols) = xt.shape();
                let p = xt.plane();
                let gx = slot(adj, *x, val(*x));
                for t in terms {
                    let base = t.channel.index() * p + t.col;
                    for r in 0..rows {
                        gx[base + r * cols] += t.coeff.at(r) * g[r];
                    }
                }
            }
            Op::WeightedSquares { x, weights } => {
                let xv = val(*x).data().to_vec();
                let gx = slot(adj, *x, val(*x));
                for r in 0..xv.len() {
                    gx[r] += 2.0 * weights[r] * xv[r] * g[0];
                }
            }
            Op::Combine(terms) => {
                for (id, c) in terms {
                    axpy(slot(adj, *id, val(*id)), *c, g);
                }
            }
            Op::Affine { x, w, b } => {
                let xt = as_jets(val(*x));
                let wm = as_plain(val(*w));
                let (rows, k, m) = (xt.rows, xt.cols, wm.rows);
                let gx = slot(adj, *x, val(*x));
                gemm(CHANNELS * rows, m, k, 1.0, g, m as isize, 1, &wm.data, k as isize, 1, 1.0, gx, k as isize, 1);
                let gw = slot(adj, *w, val(*w));
                gemm(m, CHANNELS * rows, k, 1.0, g, 1, m as isize, &xt.data, k as isize, 1, 1.0, gw, k as isize, 1);
                let gb = slot(adj, *b, val(*b));
                for row in g[..rows * m].chunks_exact(m) {
                    for (d, s) in gb.iter_mut().zip(row) {
                        *d += s;
                    }
                }
            }
            Op::GatedCell { pre, c0 } => {
                let xt = as_jets(val(*pre));
                let c0v = &as_plain(val(*c0)).data;
                let (n, d) = (xt.rows, c0v.len());
                let (pp, po) = (xt.plane(), n * d);
                let mut gc0 = vec![0.0; d];
                let gp = slot(adj, *pre, val(*pre));
                for r in 0..n {
                    for j in 0..d {
                        let base = r * 4 * d + j;
                        let gh = load(g, po, r * d + j);
                        let cell = GatedCell::eval(&xt.data, pp, base, d, c0v[j]);
                        let (parts, dc0) = cell.adjoint(gh, c0v[j]);
                        gc0[j] += dc0;
                        for (q, part) in parts.into_iter().enumerate() {
                            add_at(gp, pp, base + q * d, part);
                        }
                    }
                }
                axpy(slot(adj, *c0, val(*c0)), 1.0, &gc0);
            }
            Op::Leak { x, h0, lambda_raw } => {
                let xt = as_jets(val(*x));
                let raw = &as_plain(val(*lambda_raw)).data;
                let cols = xt.cols;
                let alpha: Vec<f64> = raw.iter().map(|&l| (-softplus(l)).exp()).collect();
                let gx = slot(adj, *x, val(*x));
                for (dst, src) in gx.chunks_exact_mut(cols).zip(g.chunks_exact(cols)) {
                    for ((dv, sv), a) in dst.iter_mut().zip(src).zip(&alpha) {
                        *dv += (1.0 - a) * sv;
                    }
                }
                // dα/dλ_raw = −α·σ(λ_raw)
                let mut graw = vec![0.0; cols];
                let h0t = h0.map(|h| as_jets(val(h)));
                for (ri, grow) in g.chunks_exact(cols).enumerate() {
                    let xr = &xt.data[ri * cols..][..cols];
                    match h0t {
                        Some(h) => {
                            let hr = &h.data[ri * cols..][..cols];
                            for j in 0..cols {
                                graw[j] += grow[j] * (hr[j] - xr[j]);
                            }
                        }
                        None => {
                            for j in 0..cols {
                                graw[j] -= grow[j] * xr[j];
                            }
                        }
                    }
                }
                for ((gr, a), l) in graw.iter_mut().zip(&alpha).zip(raw) {
                    *gr *= -a * sigmoid(*l);
                }
                if let Some(h) = h0 {
                    let gh = slot(adj, *h, val(*h));
                    for (dst, src) in gh.chunks_exact_mut(cols).zip(g.chunks_exact(cols)) {
                        for ((dv, sv), a) in dst.iter_mut().zip(src).zip(&alpha) {
                            *dv += a * sv;
                        }
                    }
                }
                axpy(slot(adj, *lambda_raw, val(*lambda_raw)), 1.0, &graw);
            }
        }
        Ok(())
    }
}

fn dangling(id: NodeId, len: usize) -> Error {
    Error::Structural(format!("dangling node reference {} (tape has {len} nodes)", id.0))
}

fn kind_error(id: NodeId, want: &str, got: &Value) -> Error {
    Error::Structural(format!("node {} holds {} where {want} was expected", id.0, got.kind()))
}

fn shape_error(op: &str, detail: String) -> Error {
    Error::Structural(format!("{op}: {detail}"))
}

fn as_jets(v: &Value) -> &JetTensor {
    match v {
        Value::Jets(t) => t,
        Value::Plain(_) => unreachable!("operand kinds are checked at record time"),
    }
}

fn as_plain(v: &Value) -> &Matrix {
    match v {
        Value::Plain(m) => m,
        Value::Jets(_) => unreachable!("operand kinds are checked at record time"),
    }
}

fn slot<'a>(adj: &'a mut [Option<Vec<f64>>], id: NodeId, v: &Value) -> &'a mut Vec<f64> {
    adj[id.0].get_or_insert_with(|| vec![0.0; v.len()])
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Evaluates `op` given a lookup for operand values. Shared by recording and replay.
fn eval_op<'v, F>(op: &Op, lookup: F) -> Result<(Value, Option<Vec<f64>>)>
where
    F: Fn(NodeId) -> Result<&'v Value>,
{
    let jets = |id: NodeId| -> Result<&'v JetTensor> {
        match lookup(id)? {
            Value::Jets(t) => Ok(t),
            v => Err(kind_error(id, "jets", v)),
        }
    };
    let plain = |id: NodeId| -> Result<&'v Matrix> {
        match lookup(id)? {
            Value::Plain(m) => Ok(m),
            v => Err(kind_error(id, "plain", v)),
        }
    };
    let name = op.name();
    let out = match op {
        Op::Param { .. } | Op::Constant => {
            return Err(Error::Structural("leaf nodes are not re-evaluated".into()));
        }
        Op::PlainAdd(a, b) | Op::PlainMul(a, b) => {
            let (a, b) = (plain(*a)?, plain(*b)?);
            if a.shape() != b.shape() {
                return Err(shape_error(name, format!("{:?} vs {:?}", a.shape(), b.shape())));
            }
            let data = a
                .data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| if matches!(op, Op::PlainAdd(..)) { x + y } else { x * y })
                .collect();
            (Value::Plain(Matrix::from_vec(a.rows, a.cols, data)), None)
        }
        Op::PlainMap(a, f) => {
            let a = plain(*a)?;
            let data = a.data.iter().map(|&x| f.eval(x).0).collect();
            (Value::Plain(Matrix::from_vec(a.rows, a.cols, data)), None)
        }
        Op::MatMul { x, w } => {
            let (x, w) = (jets(*x)?, plain(*w)?);
            if w.cols != x.cols {
                return Err(shape_error(
                    name,
                    format!("input has {} columns, weight is {}x{}", x.cols, w.rows, w.cols),
                ));
            }
            let (k, m) = (x.cols, w.rows);
            let mut y = JetTensor::zeros(x.rows, m);
            gemm(
                CHANNELS * x.rows,
                k,
                m,
                1.0,
                &x.data,
                k as isize,
                1,
                &w.data,
                1,
                k as isize,
                0.0,
                &mut y.data,
                m as isize,
                1,
            );
            (Value::Jets(y), None)
        }
        Op::AddBias { x, b } => {
            let (x, b) = (jets(*x)?, plain(*b)?);
            if b.len() != x.cols {
                return Err(shape_error(name, format!("bias length {} vs {} columns", b.len(), x.cols)));
            }
            let mut y = x.clone();
            for r in 0..x.rows {
                for j in 0..x.cols {
                    y.data[r * x.cols + j] += b.data[j];
                }
            }
            (Value::Jets(y), None)
        }
        Op::ScaleCols { x, s } => {
            let (x, s) = (jets(*x)?, plain(*s)?);
            if s.len() != x.cols {
                return Err(shape_error(name, format!("scale length {} vs {} columns", s.len(), x.cols)));
            }
            let data = x
                .data
                .chunks_exact(x.cols)
                .flat_map(|row| row.iter().zip(&s.data).map(|(v, c)| v * c))
                .collect();
            (
                Value::Jets(JetTensor {
                    rows: x.rows,
                    cols: x.cols,
                    data,
                }),
                None,
            )
        }
        Op::Mul(a, b) | Op::Add(a, b) | Op::Sub(a, b) => {
            let (a, b) = (jets(*a)?, jets(*b)?);
            if a.shape() != b.shape() {
                return Err(shape_error(name, format!("{:?} vs {:?}", a.shape(), b.shape())));
            }
            let mut y = JetTensor::zeros(a.rows, a.cols);
            match op {
                Op::Mul(..) => leibniz(&a.data, &b.data, &mut y.data, a.plane()),
                Op::Add(..) => {
                    for (k, o) in y.data.iter_mut().enumerate() {
                        *o = a.data[k] + b.data[k];
                    }
                }
                _ => {
                    for (k, o) in y.data.iter_mut().enumerate() {
                        *o = a.data[k] - b.data[k];
                    }
                }
            }
            (Value::Jets(y), None)
        }
        Op::Act { x, act } => {
            let x = jets(*x)?;
            let p = x.plane();
            let mut y = JetTensor::zeros(x.rows, x.cols);
            let mut aux = vec![0.0; 3 * p];
            chain(&x.data, *act, &mut y.data, &mut aux, p);
            (Value::Jets(y), Some(aux))
        }
        Op::Slice { x, start, len } => {
            let x = jets(*x)?;
            if start + len > x.cols {
                return Err(shape_error(name, format!("{start}+{len} exceeds {} columns", x.cols)));
            }
            let mut y = JetTensor::zeros(x.rows, *len);
            for ch in 0..CHANNELS {
                for r in 0..x.rows {
                    let src = &x.data[ch * x.plane() + r * x.cols + start..][..*len];
                    y.data[ch * x.rows * len + r * len..][..*len].copy_from_slice(src);
                }
            }
            (Value::Jets(y), None)
        }
        Op::Residual { x, terms, offset } => {
            let x = jets(*x)?;
            if offset.len() != x.rows {
                return Err(shape_error(name, format!("offset length {} vs {} rows", offset.len(), x.rows)));
            }
            for t in terms {
                if t.col >= x.cols {
                    return Err(shape_error(name, format!("column {} of {}", t.col, x.cols)));
                }
                if let Coeff::PerRow(c) = &t.coeff {
                    if c.len() != x.rows {
                        return Err(shape_error(name, format!("coefficient length {} vs {} rows", c.len(), x.rows)));
                    }
                }
            }
            let p = x.plane();
            let mut y = offset.clone();
            for t in terms {
                let base = t.channel.index() * p + t.col;
                for (r, out) in y.iter_mut().enumerate() {
                    *out += t.coeff.at(r) * x.data[base + r * x.cols];
                }
            }
            (Value::Plain(Matrix::from_vec(x.rows, 1, y)), None)
        }
        Op::WeightedSquares { x, weights } => {
            let x = plain(*x)?;
            if weights.len() != x.len() {
                return Err(shape_error(name, format!("{} weights for {} values", weights.len(), x.len())));
            }
            let s = x.data.iter().zip(weights).map(|(v, w)| w * v * v).sum();
            (Value::Plain(Matrix::scalar(s)), None)
        }
        Op::Combine(terms) => {
            let Some((first, _)) = terms.first() else {
                return Err(shape_error(name, "no terms".into()));
            };
            let shape = plain(*first)?.shape();
            let mut acc = Matrix::zeros(shape.0, shape.1);
            for (id, c) in terms {
                let m = plain(*id)?;
                if m.shape() != shape {
                    return Err(shape_error(name, format!("{:?} vs {:?}", m.shape(), shape)));
                }
                axpy(&mut acc.data, *c, &m.data);
            }
            (Value::Plain(acc), None)
        }
        Op::Affine { x, w, b } => {
            let (x, w, b) = (jets(*x)?, plain(*w)?, plain(*b)?);
            if w.cols != x.cols || b.len() != w.rows {
                return Err(shape_error(
                    name,
                    format!("input {:?}, weight {:?}, bias {:?}", x.shape(), w.shape(), b.shape()),
                ));
            }
            let (k, m) = (x.cols, w.rows);
            let mut y = JetTensor::zeros(x.rows, m);
            for row in y.data[..x.rows * m].chunks_exact_mut(m) {
                row.copy_from_slice(&b.data);
            }
            gemm(CHANNELS * x.rows, k, m, 1.0, &x.data, k as isize, 1, &w.data, 1, k as isize, 1.0, &mut y.data, m as isize, 1);
            (Value::Jets(y), None)
        }
        Op::GatedCell { pre, c0 } => {
            let (x, c0) = (jets(*pre)?, plain(*c0)?);
            let d = c0.len();
            if x.cols != 4 * d {
                return Err(shape_error(name, format!("{} pre-activation columns for {d} cells", x.cols)));
            }
            let n = x.rows;
            let (pp, po) = (x.plane(), n * d);
            let mut y = JetTensor::zeros(n, d);
            for r in 0..n {
                for j in 0..d {
                    let cell = GatedCell::eval(&x.data, pp, r * 4 * d + j, d, c0.data[j]);
                    store(&mut y.data, po, r * d + j, cell.h);
                }
            }
            (Value::Jets(y), None)
        }
        Op::Leak { x, h0, lambda_raw } => {
            let (x, raw) = (jets(*x)?, plain(*lambda_raw)?);
            if raw.len() != x.cols {
                return Err(shape_error(name, format!("{} leak rates for {} columns", raw.len(), x.cols)));
            }
            let h0 = match h0 {
                Some(h) => {
                    let h = jets(*h)?;
                    if h.shape() != x.shape() {
                        return Err(shape_error(name, format!("state {:?} vs input {:?}", h.shape(), x.shape())));
                    }
                    Some(h)
                }
                None => None,
            };
            let alpha: Vec<f64> = raw.data.iter().map(|&l| (-softplus(l)).exp()).collect();
            let cols = x.cols;
            let mut y = x.clone();
            for (ri, row) in y.data.chunks_exact_mut(cols).enumerate() {
                match h0 {
                    Some(h) => {
                        let hr = &h.data[ri * cols..][..cols];
                        for j in 0..cols {
                            row[j] = alpha[j] * hr[j] + (1.0 - alpha[j]) * row[j];
                        }
                    }
                    None => {
                        for j in 0..cols {
                            row[j] *= 1.0 - alpha[j];
                        }
                    }
                }
            }
            (Value::Jets(y), None)
        }
    };
    Ok(out)
}

#[inline]
fn load(data: &[f64], p: usize, k: usize) -> Jet2 {
    Jet2 {
        v: data[k],
        gx: data[p + k],
        gy: data[2 * p + k],
        hxx: data[3 * p + k],
        hxy: data[4 * p + k],
        hyy: data[5 * p + k],
    }
}

#[inline]
fn store(data: &mut [f64], p: usize, k: usize, j: Jet2) {
    for (c, v) in j.to_array().into_iter().enumerate() {
        data[c * p + k] = v;
    }
}

#[inline]
fn add_at(data: &mut [f64], p: usize, k: usize, j: Jet2) {
    for (c, v) in j.to_array().into_iter().enumerate() {
        data[c * p + k] += v;
    }
}

/// Forward quantities of one gated cell, kept for the adjoint.
struct GatedCell {
    pre: [Jet2; 4],
    /// `f', f'', f'''` of the gate and candidate activations.
    der: [[f64; 3]; 4],
    act: [Jet2; 4],
    c: Jet2,
    tc: [f64; 3],
    s: Jet2,
    h: Jet2,
}

impl GatedCell {
    #[inline]
    fn eval(data: &[f64], p: usize, base: usize, d: usize, c0: f64) -> Self {
        let mut pre = [Jet2::ZERO; 4];
        let mut act = [Jet2::ZERO; 4];
        let mut der = [[0.0; 3]; 4];
        for q in 0..4 {
            pre[q] = load(data, p, base + q * d);
            let f = if q == 3 { Activation::Tanh } else { Activation::Sigmoid };
            let [f0, f1, f2, f3] = f.derivatives(pre[q].v);
            act[q] = jet_chain(pre[q], f0, f1, f2);
            der[q] = [f1, f2, f3];
        }
        let [i, f, o, cand] = act;
        let c = f.scale(c0) + i * cand;
        let [t0, t1, t2, t3] = Activation::Tanh.derivatives(c.v);
        let s = jet_chain(c, t0, t1, t2);
        GatedCell {
            pre,
            der,
            act,
            c,
            tc: [t1, t2, t3],
            s,
            h: o * s,
        }
    }

    /// Cotangents of the four pre-activations and of `c0`, given that of `h`.
    #[inline]
    fn adjoint(&self, gh: Jet2, c0: f64) -> ([Jet2; 4], f64) {
        let [i, f, o, cand] = self.act;
        let go = mul_adjoint(gh, self.s);
        let gs = mul_adjoint(gh, o);
        let gc = jet_chain_adjoint(gs, self.c, self.tc[0], self.tc[1], self.tc[2]);
        let gf = gc.scale(c0);
        let dc0 = dot(gc, f);
        let gi = mul_adjoint(gc, cand);
        let gcand = mul_adjoint(gc, i);
        let mut out = [Jet2::ZERO; 4];
        for (q, g) in [gi, gf, go, gcand].into_iter().enumerate() {
            let [f1, f2, f3] = self.der[q];
            out[q] = jet_chain_adjoint(g, self.pre[q], f1, f2, f3);
        }
        (out, dc0)
    }
}

#[inline]
fn leibniz(a: &[f64], b: &[f64], y: &mut [f64], p: usize) {
    let (av, agx, agy, ahxx, ahxy, ahyy) = split6(a, p);
    let (bv, bgx, bgy, bhxx, bhxy, bhyy) = split6(b, p);
    let (yv, rest) = y.split_at_mut(p);
    let (ygx, rest) = rest.split_at_mut(p);
    let (ygy, rest) = rest.split_at_mut(p);
    let (yhxx, rest) = rest.split_at_mut(p);
    let (yhxy, yhyy) = rest.split_at_mut(p);
    for k in 0..p {
        yv[k] = av[k] * bv[k];
        ygx[k] = agx[k] * bv[k] + av[k] * bgx[k];
        ygy[k] = agy[k] * bv[k] + av[k] * bgy[k];
        yhxx[k] = ahxx[k] * bv[k] + 2.0 * agx[k] * bgx[k] + av[k] * bhxx[k];
        yhxy[k] = ahxy[k] * bv[k] + agx[k] * bgy[k] + agy[k] * bgx[k] + av[k] * bhxy[k];
        yhyy[k] = ahyy[k] * bv[k] + 2.0 * agy[k] * bgy[k] + av[k] * bhyy[k];
    }
}

/// Adjoint of `y = a ⊙ b` with respect to `a`, given `ȳ` and `b`.
#[inline]
fn leibniz_adjoint(g: &[f64], b: &[f64], da: &mut [f64], p: usize) {
    let (gv, ggx, ggy, ghxx, ghxy, ghyy) = split6(g, p);
    let (bv, bgx, bgy, bhxx, bhxy, bhyy) = split6(b, p);
    let (dv, rest) = da.split_at_mut(p);
    let (dgx, rest) = rest.split_at_mut(p);
    let (dgy, rest) = rest.split_at_mut(p);
    let (dhxx, rest) = rest.split_at_mut(p);
    let (dhxy, dhyy) = rest.split_at_mut(p);
    for k in 0..p {
        dv[k] = gv[k] * bv[k]
            + ggx[k] * bgx[k]
            + ggy[k] * bgy[k]
            + ghxx[k] * bhxx[k]
            + ghxy[k] * bhxy[k]
            + ghyy[k] * bhyy[k];
        dgx[k] = ggx[k] * bv[k] + 2.0 * ghxx[k] * bgx[k] + ghxy[k] * bgy[k];
        dgy[k] = ggy[k] * bv[k] + 2.0 * ghyy[k] * bgy[k] + ghxy[k] * bgx[k];
        dhxx[k] = ghxx[k] * bv[k];
        dhxy[k] = ghxy[k] * bv[k];
        dhyy[k] = ghyy[k] * bv[k];
    }
}

#[inline]
fn chain(x: &[f64], act: Activation, y: &mut [f64], aux: &mut [f64], p: usize) {
    let (xv, xgx, xgy, xhxx, xhxy, xhyy) = split6(x, p);
    for k in 0..p {
        let [f0, f1, f2, f3] = act.derivatives(xv[k]);
        let (gx, gy) = (xgx[k], xgy[k]);
        y[k] = f0;
        y[p + k] = f1 * gx;
        y[2 * p + k] = f1 * gy;
        y[3 * p + k] = f2 * gx * gx + f1 * xhxx[k];
        y[4 * p + k] = f2 * gx * gy + f1 * xhxy[k];
        y[5 * p + k] = f2 * gy * gy + f1 * xhyy[k];
        aux[k] = f1;
        aux[p + k] = f2;
        aux[2 * p + k] = f3;
    }
}

/// Adjoint of the second-order chain rule; accumulates into `dx`.
#[inline]
fn chain_adjoint(g: &[f64], x: &[f64], aux: &[f64], dx: &mut [f64], p: usize) {
    let (gv, ggx, ggy, ghxx, ghxy, ghyy) = split6(g, p);
    let (_, xgx, xgy, xhxx, xhxy, xhyy) = split6(x, p);
    let (f1s, rest) = aux.split_at(p);
    let (f2s, f3s) = rest.split_at(p);
    for k in 0..p {
        let (f1, f2, f3) = (f1s[k], f2s[k], f3s[k]);
        let (gx, gy) = (xgx[k], xgy[k]);
        dx[k] += gv[k] * f1
            + ggx[k] * f2 * gx
            + ggy[k] * f2 * gy
            + ghxx[k] * (f3 * gx * gx + f2 * xhxx[k])
            + ghxy[k] * (f3 * gx * gy + f2 * xhxy[k])
            + ghyy[k] * (f3 * gy * gy + f2 * xhyy[k]);
        dx[p + k] += ggx[k] * f1 + 2.0 * ghxx[k] * f2 * gx + ghxy[k] * f2 * gy;
        dx[2 * p + k] += ggy[k] * f1 + 2.0 * ghyy[k] * f2 * gy + ghxy[k] * f2 * gx;
        dx[3 * p + k] += ghxx[k] * f1;
        dx[4 * p + k] += ghxy[k] * f1;
        dx[5 * p + k] += ghyy[k] * f1;
    }
}

#[inline]
fn split6(s: &[f64], p: usize) -> (&[f64], &[f64], &[f64], &[f64], &[f64], &[f64]) {
    (
        &s[..p],
        &s[p..2 * p],
        &s[2 * p..3 * p],
        &s[3 * p..4 * p],
        &s[4 * p..5 * p],
        &s[5 * p..6 * p],
    )
}
