//! A weight matrix stored as its set of active coordinates.
//!
//! Coordinates are kept sorted by `(row, col)` where `row` indexes the layer input and
//! `col` indexes the layer output, so the storage doubles as a CSR matrix over inputs.
//! Inactive positions hold no value and no optimizer state.

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Number of active weights a `n_in x n_out` matrix holds at sparsity `sparsity`.
pub fn active_count(n_in: usize, n_out: usize, sparsity: f64) -> usize {
    ((1.0 - sparsity) * (n_in * n_out) as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayer {
    n_in: usize,
    n_out: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    /// `row_ptr[j]..row_ptr[j + 1]` spans the active entries of input `j`.
    row_ptr: Vec<usize>,
    values: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    bias: Vec<f64>,
    bias_m: Vec<f64>,
    bias_v: Vec<f64>,
}

/// One active entry together with its optimizer moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub m: f64,
    pub v: f64,
}

impl SparseLayer {
    /// Random layer with `nnz` active positions drawn uniformly without replacement and
    /// He-scaled normal values. Biases start at zero.
    pub fn random<R: Rng + ?Sized>(
        n_in: usize,
        n_out: usize,
        nnz: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let size = n_in * n_out;
        if nnz == 0 || nnz > size {
            return Err(Error::Config(format!(
                "layer {n_in}x{n_out} cannot hold {nnz} active weights"
            )));
        }
        let mut flat: Vec<usize> = index::sample(rng, size, nnz).into_vec();
        flat.sort_unstable();
        let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt())
            .map_err(|e| Error::Config(e.to_string()))?;
        let entries = flat
            .into_iter()
            .map(|p| Entry {
                row: p / n_out,
                col: p % n_out,
                value: normal.sample(rng),
                m: 0.0,
                v: 0.0,
            })
            .collect();
        Self::from_sorted_entries(n_in, n_out, entries, vec![0.0; n_out])
    }

    /// Builds a layer from explicit `((row, col), value)` entries in any order.
    pub fn from_entries(
        n_in: usize,
        n_out: usize,
        entries: impl IntoIterator<Item = ((usize, usize), f64)>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let mut list: Vec<Entry> = entries
            .into_iter()
            .map(|((row, col), value)| Entry {
                row,
                col,
                value,
                m: 0.0,
                v: 0.0,
            })
            .collect();
        list.sort_by_key(|e| (e.row, e.col));
        Self::from_sorted_entries(n_in, n_out, list, bias)
    }

    /// Builds a layer from entries already sorted by `(row, col)`.
    pub fn from_sorted_entries(
        n_in: usize,
        n_out: usize,
        entries: Vec<Entry>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        if bias.len() != n_out {
            return Err(Error::Shape(format!(
                "bias has length {}, expected {n_out}",
                bias.len()
            )));
        }
        let n = entries.len();
        let mut layer = SparseLayer {
            n_in,
            n_out,
            rows: Vec::with_capacity(n),
            cols: Vec::with_capacity(n),
            row_ptr: vec![0; n_in + 1],
            values: Vec::with_capacity(n),
            adam_m: Vec::with_capacity(n),
            adam_v: Vec::with_capacity(n),
            bias_m: vec![0.0; n_out],
            bias_v: vec![0.0; n_out],
            bias,
        };
        let mut prev: Option<(usize, usize)> = None;
        for e in entries {
            if e.row >= n_in || e.col >= n_out {
                return Err(Error::Shape(format!(
                    "coordinate ({}, {}) outside {n_in}x{n_out}",
                    e.row, e.col
                )));
            }
            if let Some(p) = prev {
                if p >= (e.row, e.col) {
                    return Err(Error::Data(format!(
                        "duplicate or unsorted coordinate ({}, {})",
                        e.row, e.col
                    )));
                }
            }
            prev = Some((e.row, e.col));
            layer.rows.push(e.row as u32);
            layer.cols.push(e.col as u32);
            layer.values.push(e.value);
            layer.adam_m.push(e.m);
            layer.adam_v.push(e.v);
            layer.row_ptr[e.row + 1] += 1;
        }
        for j in 0..n_in {
            layer.row_ptr[j + 1] += layer.row_ptr[j];
        }
        Ok(layer)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn size(&self) -> usize {
        self.n_in * self.n_out
    }

    pub fn is_dense(&self) -> bool {
        self.nnz() == self.size()
    }

    /// Fraction of structurally zero positions.
    pub fn sparsity(&self) -> f64 {
        1.0 - self.nnz() as f64 / self.size() as f64
    }

    pub fn coord(&self, k: usize) -> (usize, usize) {
        (self.rows[k] as usize, self.cols[k] as usize)
    }

    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .map(|(&r, &c)| (r as usize, c as usize))
    }

    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        (0..self.nnz()).map(move |k| Entry {
            row: self.rows[k] as usize,
            col: self.cols[k] as usize,
            value: self.values[k],
            m: self.adam_m[k],
            v: self.adam_v[k],
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn adam_moments(&self) -> (&[f64], &[f64]) {
        (&self.adam_m, &self.adam_v)
    }

    pub fn bias_moments(&self) -> (&[f64], &[f64]) {
        (&self.bias_m, &self.bias_v)
    }

    pub(crate) fn restore_bias_moments(&mut self, m: Vec<f64>, v: Vec<f64>) -> Result<()> {
        if m.len() != self.n_out || v.len() != self.n_out {
            return Err(Error::Shape("bias moment length mismatch".into()));
        }
        self.bias_m = m;
        self.bias_v = v;
        Ok(())
    }

    /// Range of entry indices belonging to input row `row`.
    pub fn row_range(&self, row: usize) -> std::ops::Range<usize> {
        self.row_ptr[row]..self.row_ptr[row + 1]
    }

    /// Entry index of `(row, col)` if that position is active.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let r = self.row_range(row);
        let start = r.start;
        self.cols[r]
            .binary_search(&(col as u32))
            .ok()
            .map(|k| start + k)
    }

    pub fn is_active(&self, row: usize, col: usize) -> bool {
        self.find(row, col).is_some()
    }

    /// Active mask in row-major `(row, col)` order.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.size()];
        for (r, c) in self.coords() {
            mask[r * self.n_out + c] = true;
        }
        mask
    }

    /// Scatters the active values into a zero matrix of shape `(n_in, n_out)`.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.n_in, self.n_out));
        for (k, (r, c)) in self.coords().enumerate() {
            w[[r, c]] = self.values[k];
        }
        w
    }

    fn dense_view(&self) -> Option<ArrayView2<'_, f64>> {
        if self.is_dense() {
            ArrayView2::from_shape((self.n_in, self.n_out), &self.values).ok()
        } else {
            None
        }
    }

    /// `out = input . W + b` for a batch laid out as rows.
    pub fn forward_into(&self, input: ArrayView2<'_, f64>, mut out: ArrayViewMut2<'_, f64>) {
        assert_eq!(input.ncols(), self.n_in);
        assert_eq!(out.dim(), (input.nrows(), self.n_out));
        if let Some(w) = self.dense_view() {
            ndarray::linalg::general_mat_mul(1.0, &input, &w, 0.0, &mut out);
            for mut row in out.rows_mut() {
                for (z, b) in row.iter_mut().zip(&self.bias) {
                    *z += b;
                }
            }
            return;
        }
        for (x, mut z) in input.rows().into_iter().zip(out.rows_mut()) {
            z.fill(0.0);
            let z = z.as_slice_mut().expect("output rows are contiguous");
            for (j, &a) in x.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for k in self.row_range(j) {
                    z[self.cols[k] as usize] += a * self.values[k];
                }
            }
            for (zi, b) in z.iter_mut().zip(&self.bias) {
                *zi += b;
            }
        }
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((input.nrows(), self.n_out));
        self.forward_into(input, out.view_mut());
        out
    }

    /// `delta . W^T`: propagates output-side gradients to the layer input.
    pub fn backprop_input(&self, delta: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(delta.ncols(), self.n_out);
        let mut out = Array2::zeros((delta.nrows(), self.n_in));
        if let Some(w) = self.dense_view() {
            ndarray::linalg::general_mat_mul(1.0, &delta, &w.t(), 0.0, &mut out);
            return out;
        }
        for (d, mut g) in delta.rows().into_iter().zip(out.rows_mut()) {
            let d = d
                .to_slice()
                .map(std::borrow::Cow::Borrowed)
                .unwrap_or_else(|| std::borrow::Cow::Owned(d.to_vec()));
            for (j, gj) in g.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in self.row_range(j) {
                    acc += self.values[k] * d[self.cols[k] as usize];
                }
                *gj = acc;
            }
        }
        out
    }

    /// Gradient of `sum(delta * (input . W))` with respect to each active weight.
    pub fn weight_grad(&self, input: ArrayView2<'_, f64>, delta: ArrayView2<'_, f64>) -> Vec<f64> {
        assert_eq!(input.ncols(), self.n_in);
        assert_eq!(delta.ncols(), self.n_out);
        if self.is_dense() {
            let g = input.t().dot(&delta);
            return g.iter().copied().collect();
        }
        let mut grad = vec![0.0; self.nnz()];
        for (x, d) in input.rows().into_iter().zip(delta.rows()) {
            for (j, &a) in x.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for k in self.row_range(j) {
                    grad[k] += a * d[self.cols[k] as usize];
                }
            }
        }
        grad
    }

    /// Gradient for every position of the matrix, active or not.
    pub fn dense_weight_grad(
        &self,
        input: ArrayView2<'_, f64>,
        delta: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        input.t().dot(&delta)
    }

    /// Replaces the topology: keeps entries flagged in `keep`, then adds `added`
    /// positions at value zero with zeroed moments.
    pub(crate) fn rewire(&mut self, keep: &[bool], added: &[(usize, usize)]) -> Result<()> {
        debug_assert_eq!(keep.len(), self.nnz());
        let mut entries: Vec<Entry> = self
            .entries()
            .zip(keep)
            .filter_map(|(e, &k)| k.then_some(e))
            .collect();
        entries.extend(added.iter().map(|&(row, col)| Entry {
            row,
            col,
            value: 0.0,
            m: 0.0,
            v: 0.0,
        }));
        entries.sort_by_key(|e| (e.row, e.col));
        let bias = std::mem::take(&mut self.bias);
        let bias_m = std::mem::take(&mut self.bias_m);
        let bias_v = std::mem::take(&mut self.bias_v);
        let mut rebuilt = Self::from_sorted_entries(self.n_in, self.n_out, entries, bias)?;
        rebuilt.bias_m = bias_m;
        rebuilt.bias_v = bias_v;
        *self = rebuilt;
        Ok(())
    }

    /// Adam update on active weights and biases with bias-corrected step `t`.
    pub(crate) fn adam_update(
        &mut self,
        weight_grad: &[f64],
        bias_grad: &[f64],
        hp: &crate::net::optim::Adam,
        t: u64,
    ) {
        let c1 = 1.0 - hp.beta1.powf(t as f64);
        let c2 = 1.0 - hp.beta2.powf(t as f64);
        let step = |w: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
        };
        for (((w, m), v), &g) in self
            .values
            .iter_mut()
            .zip(&mut self.adam_m)
            .zip(&mut self.adam_v)
            .zip(weight_grad)
        {
            step(w, m, v, g);
        }
        for (((b, m), v), &g) in self
            .bias
            .iter_mut()
            .zip(&mut self.bias_m)
            .zip(&mut self.bias_v)
            .zip(bias_grad)
        {
            step(b, m, v, g);
        }
    }
}
