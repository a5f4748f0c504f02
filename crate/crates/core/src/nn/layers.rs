//! Layers with explicit forward and backward passes.

use super::Tensor;
use crate::error::{DsganError, Result};

/// Clamp applied to probabilities before taking logs in [`bce_loss`].
pub const LOG_EPS: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Gathers rows of `table` (shape `[V, d]`).
pub fn embedding_lookup(table: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let d = table.cols();
    let mut out = Tensor::zeros(&[indices.len(), d]);
    for (i, &ix) in indices.iter().enumerate() {
        if ix >= table.rows() {
            return Err(DsganError::IndexOutOfRange {
                index: ix,
                len: table.rows(),
            });
        }
        out.row_mut(i).copy_from_slice(table.row(ix));
    }
    Ok(out)
}

/// Scatters `upstream` rows back into `table_grad`; duplicate indices sum.
pub fn embedding_backward(table_grad: &mut Tensor, indices: &[usize], upstream: &Tensor) {
    for (i, &ix) in indices.iter().enumerate() {
        for (g, u) in table_grad.row_mut(ix).iter_mut().zip(upstream.row(i)) {
            *g += u;
        }
    }
}

/// Convolution kernels stored offset-major (`[window * d_in, c_k]`) so the
/// inner loop runs over kernels.
#[derive(Debug, Clone)]
pub struct ConvWeights {
    pub(crate) window: usize,
    pub(crate) d_in: usize,
    pub(crate) kernels: usize,
    pub(crate) transposed: Vec<f64>,
}

impl ConvWeights {
    pub fn new(kernels: &Tensor, window: usize, d_in: usize) -> Result<Self> {
        let c_k = kernels.rows();
        if window == 0 || kernels.shape().len() != 2 || kernels.cols() != window * d_in {
            return Err(DsganError::Shape(format!(
                "kernels {:?} incompatible with window {window} x input width {d_in}",
                kernels.shape()
            )));
        }
        let width = window * d_in;
        let mut transposed = vec![0.0; width * c_k];
        for k in 0..c_k {
            let row = kernels.row(k);
            for j in 0..width {
                transposed[j * c_k + k] = row[j];
            }
        }
        Ok(ConvWeights {
            window,
            d_in,
            kernels: c_k,
            transposed,
        })
    }

    pub fn pad(&self) -> usize {
        self.window / 2
    }

    /// Number of windows produced for a sequence of `n` rows.
    pub fn positions(&self, n: usize) -> usize {
        (n + 2 * self.pad() + 1).saturating_sub(self.window)
    }

    /// `acc[k] += sum_c K[k, offset, cols.start + c] * x[c]`, accumulated in
    /// column order. Every conv path funnels through here so that cached and
    /// uncached scoring agree bit-for-bit.
    #[inline]
    pub(crate) fn accumulate(&self, offset: usize, col_start: usize, x: &[f64], acc: &mut [f64]) {
        let c_k = self.kernels;
        let base = (offset * self.d_in + col_start) * c_k;
        for (c, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let krow = &self.transposed[base + c * c_k..base + (c + 1) * c_k];
            for (a, &kv) in acc.iter_mut().zip(krow) {
                *a += kv * xv;
            }
        }
    }
}

/// Per-kernel bookkeeping from the forward pass.
#[derive(Debug, Clone)]
pub struct ConvTrace {
    /// Winning window position per kernel.
    pub argmax: Vec<usize>,
    /// Pooled tanh outputs.
    pub out: Vec<f64>,
}

/// Max-pool over windows given a closure that fills the pre-bias window sum
/// at position `t`.
pub(crate) fn maxpool_windows(
    positions: usize,
    c_k: usize,
    bias: &[f64],
    mut window_sum: impl FnMut(usize, &mut [f64]),
) -> ConvTrace {
    let mut best = vec![f64::NEG_INFINITY; c_k];
    let mut argmax = vec![0usize; c_k];
    let mut s = vec![0.0; c_k];
    for t in 0..positions {
        s.iter_mut().for_each(|v| *v = 0.0);
        window_sum(t, &mut s);
        for k in 0..c_k {
            let z = s[k] + bias[k];
            if z > best[k] {
                best[k] = z;
                argmax[k] = t;
            }
        }
    }
    ConvTrace {
        argmax,
        out: best.into_iter().map(f64::tanh).collect(),
    }
}

/// Sums the valid offsets of the window starting at padded position `t`.
pub(crate) fn dense_window_sum(w: &ConvWeights, input: &Tensor, t: usize, s: &mut [f64], partial: &mut [f64]) {
    let n = input.rows();
    let pad = w.pad();
    for o in 0..w.window {
        let Some(row) = (t + o).checked_sub(pad).filter(|&r| r < n) else {
            continue;
        };
        partial.iter_mut().for_each(|v| *v = 0.0);
        w.accumulate(o, 0, input.row(row), partial);
        for (a, p) in s.iter_mut().zip(partial.iter()) {
            *a += *p;
        }
    }
}

/// 1-d convolution over rows of `input` (`[n, d_in]`) with zero padding of
/// `window / 2` rows at each end, followed by tanh and max-over-time pooling.
pub fn conv1d_maxpool(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    window: usize,
) -> Result<(Tensor, ConvTrace)> {
    let w = ConvWeights::new(kernels, window, input.cols())?;
    conv1d_maxpool_with(&w, input, bias)
}

pub fn conv1d_maxpool_with(w: &ConvWeights, input: &Tensor, bias: &Tensor) -> Result<(Tensor, ConvTrace)> {
    if input.cols() != w.d_in {
        return Err(DsganError::Shape(format!(
            "input width {} does not match kernel input width {}",
            input.cols(),
            w.d_in
        )));
    }
    if input.rows() == 0 {
        return Err(DsganError::Shape("convolution over an empty sequence".into()));
    }
    if bias.len() != w.kernels {
        return Err(DsganError::Shape(format!(
            "bias length {} vs {} kernels",
            bias.len(),
            w.kernels
        )));
    }
    let mut partial = vec![0.0; w.kernels];
    let trace = maxpool_windows(w.positions(input.rows()), w.kernels, bias.data(), |t, s| {
        dense_window_sum(w, input, t, s, &mut partial)
    });
    let out = Tensor::from_vec(&[w.kernels], trace.out.clone())?;
    Ok((out, trace))
}

/// Backward of [`conv1d_maxpool`]; gradient flows only through the argmax
/// window of each kernel. Results are added into the provided buffers.
pub fn conv1d_maxpool_backward(
    input: &Tensor,
    kernels: &Tensor,
    window: usize,
    trace: &ConvTrace,
    dout: &[f64],
    dinput: &mut Tensor,
    dkernels: &mut Tensor,
    dbias: &mut Tensor,
) {
    let n = input.rows();
    let d_in = input.cols();
    let pad = window / 2;
    for (k, (&t, &y)) in trace.argmax.iter().zip(&trace.out).enumerate() {
        let g = dout[k] * (1.0 - y * y);
        if g == 0.0 {
            continue;
        }
        dbias.data_mut()[k] += g;
        let krow = kernels.row(k);
        let dkrow = dkernels.row_mut(k);
        for o in 0..window {
            let Some(row) = (t + o).checked_sub(pad).filter(|&r| r < n) else {
                continue;
            };
            let x = input.row(row);
            let seg = o * d_in..(o + 1) * d_in;
            for (dk, &xv) in dkrow[seg.clone()].iter_mut().zip(x) {
                *dk += g * xv;
            }
            for (dx, &kv) in dinput.row_mut(row).iter_mut().zip(&krow[seg]) {
                *dx += g * kv;
            }
        }
    }
}

/// `sigmoid(w . x + b)`, returning the probability and the logit.
pub fn affine_sigmoid(x: &[f64], w: &[f64], b: f64) -> Result<(f64, f64)> {
    if x.len() != w.len() {
        return Err(DsganError::Shape(format!(
            "affine input {} vs weight {}",
            x.len(),
            w.len()
        )));
    }
    let mut z = 0.0;
    for (a, c) in x.iter().zip(w) {
        z += a * c;
    }
    z += b;
    Ok((sigmoid(z), z))
}

/// Backward of [`affine_sigmoid`] given `dL/dlogit`; adds into `dx`, `dw`
/// and returns the bias gradient.
pub fn affine_backward(x: &[f64], w: &[f64], dlogit: f64, dx: &mut [f64], dw: &mut [f64]) -> f64 {
    for i in 0..x.len() {
        dx[i] += dlogit * w[i];
        dw[i] += dlogit * x[i];
    }
    dlogit
}

/// Binary cross-entropy on a sigmoid output. Returns the loss and its
/// gradient with respect to the logit (`p - y`).
pub fn bce_loss(p: f64, y: f64) -> (f64, f64) {
    let pc = p.clamp(LOG_EPS, 1.0 - LOG_EPS);
    let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    (loss, p - y)
}
