//! Dense storage for batches of jets and plain matrices.

use super::jet::{Channel, Jet2};

/// Row-major `rows × cols` matrix of plain reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Matrix::from_vec(1, 1, vec![v])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// A `rows × cols` array of jets stored channel-major.
///
/// Channel `c` occupies `data[c·rows·cols .. (c+1)·rows·cols]` in row-major
/// order, so the whole tensor reads as a `6·rows × cols` matrix. Linear maps
/// act channel-wise on jets, which turns a dense layer into a single GEMM.
#[derive(Clone, Debug, PartialEq)]
pub struct JetTensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub const CHANNELS: usize = 6;

impl JetTensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        JetTensor {
            rows,
            cols,
            data: vec![0.0; CHANNELS * rows * cols],
        }
    }

    /// Build from a row-major list of jets.
    pub fn from_jets(rows: usize, cols: usize, jets: &[Jet2]) -> Self {
        assert_eq!(jets.len(), rows * cols, "jet count");
        let mut t = JetTensor::zeros(rows, cols);
        let plane = rows * cols;
        for (k, j) in jets.iter().enumerate() {
            for (c, v) in j.to_array().into_iter().enumerate() {
                t.data[c * plane + k] = v;
            }
        }
        t
    }

    pub fn plane(&self) -> usize {
        self.rows * self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn channel(&self, ch: Channel) -> &[f64] {
        let p = self.plane();
        &self.data[ch.index() * p..(ch.index() + 1) * p]
    }

    pub fn jet(&self, r: usize, c: usize) -> Jet2 {
        let p = self.plane();
        let k = r * self.cols + c;
        Jet2::from_array(std::array::from_fn(|ch| self.data[ch * p + k]))
    }

    pub fn set_jet(&mut self, r: usize, c: usize, j: Jet2) {
        let p = self.plane();
        let k = r * self.cols + c;
        for (ch, v) in j.to_array().into_iter().enumerate() {
            self.data[ch * p + k] = v;
        }
    }

    pub fn to_jets(&self) -> Vec<Jet2> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| self.jet(r, c))
            .collect()
    }

    /// Column `c` as a list of jets, one per row.
    pub fn column(&self, c: usize) -> Vec<Jet2> {
        (0..self.rows).map(|r| self.jet(r, c)).collect()
    }
}

/// `out (m×n) = alpha · a (m×k) · b (k×n) + beta · out`, with arbitrary strides.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    out: &mut [f64],
    rso: isize,
    cso: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(out.len() >= m * n);
    // SAFETY: callers pass slices whose extents cover the strided index
    // ranges implied by (m, k, n) and the strides; checked by debug asserts
    // on the contiguous layouts used in this crate.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            rso,
            cso,
        );
    }
}
