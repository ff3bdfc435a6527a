//! Batched forward and backward passes.
//!
//! Activations are row-major with channels last: `conv1` output is
//! `[batch, row, position, channel]`, `conv2` output `[batch, position,
//! channel]`, which doubles as the flattened dense input. Both convolutions
//! run as patch-matrix products.

use rand::Rng;

use super::model::{tensor_range, CnnModel};
use super::IqWindow;
use crate::rng::{stream_id, stream_rng};
use crate::scalar::{matmul, MatRef};
use crate::{Error, Real, Result};

/// Buffers of one forward/backward pass, reused across batches so large
/// patch matrices are not reallocated every step.
pub(crate) struct Workspace<T> {
    pub batch: usize,
    x1col: Vec<T>,
    a1: Vec<T>,
    x2col: Vec<T>,
    a2: Vec<T>,
    h1: Vec<T>,
    m1: Vec<T>,
    d1: Vec<T>,
    h2: Vec<T>,
    m2: Vec<T>,
    d2: Vec<T>,
    dropout: bool,
    pub probs: Vec<T>,
    dlogits: Vec<T>,
    dd2: Vec<T>,
    dd1: Vec<T>,
    da2: Vec<T>,
    dx2col: Vec<T>,
    da1: Vec<T>,
}

/// Copies the selected windows into a `[batch, 2, input_len]` buffer.
pub(crate) fn gather<T: Real>(
    windows: &[IqWindow<T>],
    idx: &[usize],
    input_len: usize,
) -> Result<(Vec<T>, Vec<usize>)> {
    let mut x = Vec::with_capacity(idx.len() * 2 * input_len);
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        let w = &windows[i];
        if w.values.len() != 2 * input_len {
            return Err(Error::ShapeMismatch(format!(
                "window of {} values, model expects 2 x {input_len}",
                w.values.len()
            )));
        }
        x.extend_from_slice(&w.values);
        labels.push(w.label);
    }
    Ok((x, labels))
}

fn sized<T: Real>(buf: &mut Vec<T>, len: usize) -> &mut Vec<T> {
    buf.resize(len, T::zero());
    buf
}

fn bias_relu<T: Real>(buf: &mut [T], cols: usize, bias: &[T], relu: bool) {
    for row in buf.chunks_exact_mut(cols) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
            if relu && *v < T::zero() {
                *v = T::zero();
            }
        }
    }
}

fn col_sums<T: Real>(buf: &[T], cols: usize, out: &mut [T]) {
    out.iter_mut().for_each(|o| *o = T::zero());
    for row in buf.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn fill_dropout_mask<T: Real>(mask: &mut Vec<T>, len: usize, p: f64, seed: u64, layer: u64) {
    let mut rng = stream_rng(seed, stream_id(&[0xd50, layer]));
    let keep = T::lit(1.0 / (1.0 - p));
    mask.clear();
    mask.extend((0..len).map(|_| {
        if rng.random::<f64>() < p {
            T::zero()
        } else {
            keep
        }
    }));
}

/// `out = relu(inp * W^T + b)` into `h`; `d` receives `h * mask` when
/// dropout is active, otherwise a copy of `h`.
fn dense<T: Real>(
    inp: &[T],
    rows: usize,
    w: &[T],
    b: &[T],
    h: &mut Vec<T>,
    mask: Option<&[T]>,
    d: &mut Vec<T>,
) {
    let (n_out, n_in) = (b.len(), w.len() / b.len());
    matmul(
        T::one(),
        MatRef::row_major(inp, rows, n_in),
        MatRef::row_major(w, n_out, n_in).t(),
        T::zero(),
        sized(h, rows * n_out),
    );
    bias_relu(h, n_out, b, true);
    d.clear();
    match mask {
        Some(m) => d.extend(h.iter().zip(m).map(|(&a, &k)| a * k)),
        None => d.extend_from_slice(h),
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy of the batch.
pub(crate) fn cross_entropy<T: Real>(probs: &[T], labels: &[usize], n: usize) -> f64 {
    let total: f64 = probs
        .chunks_exact(n)
        .zip(labels)
        .map(|(row, &y)| -row[y].as_f64().max(f64::MIN_POSITIVE).ln())
        .sum();
    total / labels.len().max(1) as f64
}

/// `d *= mask * [h > 0]`, the backward step through dropout and ReLU.
fn through_relu<T: Real>(d: &mut [T], h: &[T], mask: Option<&[T]>) {
    match mask {
        Some(m) => {
            for ((g, &a), &k) in d.iter_mut().zip(h).zip(m) {
                *g = if a > T::zero() { *g * k } else { T::zero() };
            }
        }
        None => {
            for (g, &a) in d.iter_mut().zip(h) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
        }
    }
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Workspace {
            batch: 0,
            x1col: Vec::new(),
            a1: Vec::new(),
            x2col: Vec::new(),
            a2: Vec::new(),
            h1: Vec::new(),
            m1: Vec::new(),
            d1: Vec::new(),
            h2: Vec::new(),
            m2: Vec::new(),
            d2: Vec::new(),
            dropout: false,
            probs: Vec::new(),
            dlogits: Vec::new(),
            dd2: Vec::new(),
            dd1: Vec::new(),
            da2: Vec::new(),
            dx2col: Vec::new(),
            da1: Vec::new(),
        }
    }

    fn mask1(&self) -> Option<&[T]> {
        self.dropout.then_some(&self.m1[..])
    }

    fn mask2(&self) -> Option<&[T]> {
        self.dropout.then_some(&self.m2[..])
    }

    /// Forward pass over `x` (`[batch, 2, input_len]`). Dropout is applied
    /// only when `train` is set, with masks drawn from `seed`.
    pub fn forward(&mut self, model: &CnnModel<T>, x: &[T], batch: usize, train: bool, seed: u64) {
        let a = &model.arch;
        let (l, k1, c1, l1) = (a.input_len, a.conv1_width, a.conv1_filters, a.conv1_len());
        let (k2, c2, l2, patch) = (
            a.conv2_width,
            a.conv2_filters,
            a.conv2_len(),
            a.conv2_patch(),
        );
        assert_eq!(x.len(), batch * 2 * l);
        self.batch = batch;

        self.x1col.clear();
        for row in x.chunks_exact(l) {
            for t in 0..l1 {
                self.x1col.extend_from_slice(&row[t..t + k1]);
            }
        }
        matmul(
            T::one(),
            MatRef::row_major(&self.x1col, batch * 2 * l1, k1),
            MatRef::row_major(model.tensor("conv1.weight"), c1, k1).t(),
            T::zero(),
            sized(&mut self.a1, batch * 2 * l1 * c1),
        );
        bias_relu(&mut self.a1, c1, model.tensor("conv1.bias"), true);

        self.x2col.clear();
        for b in 0..batch {
            for t in 0..l2 {
                for r in 0..2 {
                    let start = ((b * 2 + r) * l1 + t) * c1;
                    self.x2col
                        .extend_from_slice(&self.a1[start..start + k2 * c1]);
                }
            }
        }
        matmul(
            T::one(),
            MatRef::row_major(&self.x2col, batch * l2, patch),
            MatRef::row_major(model.tensor("conv2.weight"), c2, patch).t(),
            T::zero(),
            sized(&mut self.a2, batch * l2 * c2),
        );
        bias_relu(&mut self.a2, c2, model.tensor("conv2.bias"), true);

        let p = model.hyper.dropout;
        self.dropout = train && p > 0.0;
        if self.dropout {
            fill_dropout_mask(&mut self.m1, batch * a.fc1, p, seed, 1);
            fill_dropout_mask(&mut self.m2, batch * a.fc2, p, seed, 2);
        }
        let m1 = self.dropout.then_some(&self.m1[..]);
        dense(
            &self.a2,
            batch,
            model.tensor("fc1.weight"),
            model.tensor("fc1.bias"),
            &mut self.h1,
            m1,
            &mut self.d1,
        );
        let m2 = self.dropout.then_some(&self.m2[..]);
        dense(
            &self.d1,
            batch,
            model.tensor("fc2.weight"),
            model.tensor("fc2.bias"),
            &mut self.h2,
            m2,
            &mut self.d2,
        );

        let n = a.n_classes;
        matmul(
            T::one(),
            MatRef::row_major(&self.d2, batch, a.fc2),
            MatRef::row_major(model.tensor("out.weight"), n, a.fc2).t(),
            T::zero(),
            sized(&mut self.probs, batch * n),
        );
        bias_relu(&mut self.probs, n, model.tensor("out.bias"), false);
        for row in self.probs.chunks_exact_mut(n) {
            softmax_in_place(row);
        }
    }

    /// Gradient of `mean cross-entropy + l2 * sum(weights^2)` for the last
    /// forward pass into `grad` (parameter layout). Returns the data loss.
    pub fn backward(&mut self, model: &CnnModel<T>, labels: &[usize], grad: &mut [T]) -> f64 {
        let arch = model.arch;
        let bsz = self.batch;
        let (k1, c1, l1) = (arch.conv1_width, arch.conv1_filters, arch.conv1_len());
        let (k2, c2, l2, patch) = (
            arch.conv2_width,
            arch.conv2_filters,
            arch.conv2_len(),
            arch.conv2_patch(),
        );
        let (f1, f2, n, flat) = (arch.fc1, arch.fc2, arch.n_classes, arch.flat_len());
        assert_eq!(grad.len(), arch.param_count());
        assert_eq!(labels.len(), bsz);
        let g = |name: &str| tensor_range(&arch, name);
        let (one, zero) = (T::one(), T::zero());

        let loss = cross_entropy(&self.probs, labels, n);
        let inv_b = T::lit(1.0 / bsz as f64);
        self.dlogits.clear();
        self.dlogits.extend_from_slice(&self.probs);
        for (row, &y) in self.dlogits.chunks_exact_mut(n).zip(labels) {
            row[y] -= one;
            row.iter_mut().for_each(|v| *v *= inv_b);
        }

        matmul(
            one,
            MatRef::row_major(&self.dlogits, bsz, n).t(),
            MatRef::row_major(&self.d2, bsz, f2),
            zero,
            &mut grad[g("out.weight")],
        );
        col_sums(&self.dlogits, n, &mut grad[g("out.bias")]);
        matmul(
            one,
            MatRef::row_major(&self.dlogits, bsz, n),
            MatRef::row_major(model.tensor("out.weight"), n, f2),
            zero,
            sized(&mut self.dd2, bsz * f2),
        );
        let mut dd2 = std::mem::take(&mut self.dd2);
        through_relu(&mut dd2, &self.h2, self.mask2());

        matmul(
            one,
            MatRef::row_major(&dd2, bsz, f2).t(),
            MatRef::row_major(&self.d1, bsz, f1),
            zero,
            &mut grad[g("fc2.weight")],
        );
        col_sums(&dd2, f2, &mut grad[g("fc2.bias")]);
        matmul(
            one,
            MatRef::row_major(&dd2, bsz, f2),
            MatRef::row_major(model.tensor("fc2.weight"), f2, f1),
            zero,
            sized(&mut self.dd1, bsz * f1),
        );
        self.dd2 = dd2;
        let mut dd1 = std::mem::take(&mut self.dd1);
        through_relu(&mut dd1, &self.h1, self.mask1());

        matmul(
            one,
            MatRef::row_major(&dd1, bsz, f1).t(),
            MatRef::row_major(&self.a2, bsz, flat),
            zero,
            &mut grad[g("fc1.weight")],
        );
        col_sums(&dd1, f1, &mut grad[g("fc1.bias")]);
        matmul(
            one,
            MatRef::row_major(&dd1, bsz, f1),
            MatRef::row_major(model.tensor("fc1.weight"), f1, flat),
            zero,
            sized(&mut self.da2, bsz * flat),
        );
        self.dd1 = dd1;
        through_relu(&mut self.da2, &self.a2, None);

        matmul(
            one,
            MatRef::row_major(&self.da2, bsz * l2, c2).t(),
            MatRef::row_major(&self.x2col, bsz * l2, patch),
            zero,
            &mut grad[g("conv2.weight")],
        );
        col_sums(&self.da2, c2, &mut grad[g("conv2.bias")]);
        matmul(
            one,
            MatRef::row_major(&self.da2, bsz * l2, c2),
            MatRef::row_major(model.tensor("conv2.weight"), c2, patch),
            zero,
            sized(&mut self.dx2col, bsz * l2 * patch),
        );

        let da1 = sized(&mut self.da1, bsz * 2 * l1 * c1);
        da1.iter_mut().for_each(|v| *v = zero);
        for (row_idx, row) in self.dx2col.chunks_exact(patch).enumerate() {
            let (b, t) = (row_idx / l2, row_idx % l2);
            for r in 0..2 {
                let start = ((b * 2 + r) * l1 + t) * c1;
                let src = &row[r * k2 * c1..(r + 1) * k2 * c1];
                for (d, &s) in da1[start..start + k2 * c1].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        through_relu(&mut self.da1, &self.a1, None);
        matmul(
            one,
            MatRef::row_major(&self.da1, bsz * 2 * l1, c1).t(),
            MatRef::row_major(&self.x1col, bsz * 2 * l1, k1),
            zero,
            &mut grad[g("conv1.weight")],
        );
        col_sums(&self.da1, c1, &mut grad[g("conv1.bias")]);

        if model.hyper.l2 > 0.0 {
            let lam = T::lit(2.0 * model.hyper.l2);
            let mut off = 0;
            for t in arch.tensors() {
                let r = off..off + t.len();
                if t.is_weight() {
                    for (gv, &w) in grad[r.clone()].iter_mut().zip(&model.params()[r]) {
                        *gv += lam * w;
                    }
                }
                off += t.len();
            }
        }
        loss
    }
}
