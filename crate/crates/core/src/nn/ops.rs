//! Single-trial float kernels and their analytic gradients.
//!
//! Feature maps are `[channels × length]` row-major slices. Every function
//! that produces MACCs reports how many it performed so the float path can
//! be cross-checked against the resource estimator.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Per-time-step channel mixing: `out[o][t] = Σ_i w[o][i] · x[i][t]`.
///
/// Used both for the spatial convolution (mixing EEG channels) and the
/// pointwise half of the separable convolution (mixing feature maps).
pub fn mix_channels<T: Scalar>(w: &[T], x: &[T], n_in: usize, n_out: usize, len: usize, out: &mut [T]) -> u64 {
    debug_assert_eq!(w.len(), n_out * n_in);
    debug_assert_eq!(x.len(), n_in * len);
    debug_assert_eq!(out.len(), n_out * len);
    out.fill(T::zero());
    for o in 0..n_out {
        let dst = &mut out[o * len..(o + 1) * len];
        for i in 0..n_in {
            let wv = w[o * n_in + i];
            let src = &x[i * len..(i + 1) * len];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + wv * s;
            }
        }
    }
    (n_in * n_out * len) as u64
}

/// Gradients of [`mix_channels`]. Both `gx` and `gw` are overwritten.
#[allow(clippy::too_many_arguments)]
pub fn mix_channels_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    gy: &[T],
    n_in: usize,
    n_out: usize,
    len: usize,
    gx: &mut [T],
    gw: &mut [T],
) {
    gx.fill(T::zero());
    for o in 0..n_out {
        let g = &gy[o * len..(o + 1) * len];
        for i in 0..n_in {
            let src = &x[i * len..(i + 1) * len];
            gw[o * n_in + i] = g.iter().zip(src).map(|(&a, &b)| a * b).sum();
            let wv = w[o * n_in + i];
            let dst = &mut gx[i * len..(i + 1) * len];
            for (d, &gv) in dst.iter_mut().zip(g) {
                *d = *d + wv * gv;
            }
        }
    }
}

/// Left zero padding for a same-length temporal window of size `k`.
pub fn same_pad_left(k: usize) -> usize {
    (k - 1) / 2
}

/// Depthwise temporal cross-correlation with same padding:
/// `out[c][t] = Σ_j w[c][j] · x[c][t + j - pad_left]`, out-of-range taps are zero.
pub fn depthwise_xcorr<T: Scalar>(w: &[T], x: &[T], channels: usize, k: usize, len: usize, out: &mut [T]) -> u64 {
    let pl = same_pad_left(k) as isize;
    for c in 0..channels {
        let wc = &w[c * k..(c + 1) * k];
        let xc = &x[c * len..(c + 1) * len];
        let oc = &mut out[c * len..(c + 1) * len];
        for (t, o) in oc.iter_mut().enumerate() {
            let base = t as isize - pl;
            let j_lo = (-base).max(0) as usize;
            let j_hi = ((len as isize - base).min(k as isize)).max(0) as usize;
            let mut acc = T::zero();
            for j in j_lo..j_hi {
                acc = acc + wc[j] * xc[(base + j as isize) as usize];
            }
            *o = acc;
        }
    }
    (channels * k * len) as u64
}

#[allow(clippy::too_many_arguments)]
pub fn depthwise_xcorr_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    gy: &[T],
    channels: usize,
    k: usize,
    len: usize,
    gx: &mut [T],
    gw: &mut [T],
) {
    let pl = same_pad_left(k) as isize;
    gx.fill(T::zero());
    gw.fill(T::zero());
    for c in 0..channels {
        let wc = &w[c * k..(c + 1) * k];
        let xc = &x[c * len..(c + 1) * len];
        let gc = &gy[c * len..(c + 1) * len];
        let gxc = &mut gx[c * len..(c + 1) * len];
        let gwc = &mut gw[c * k..(c + 1) * k];
        for (t, &g) in gc.iter().enumerate() {
            let base = t as isize - pl;
            let j_lo = (-base).max(0) as usize;
            let j_hi = ((len as isize - base).min(k as isize)).max(0) as usize;
            for j in j_lo..j_hi {
                let s = (base + j as isize) as usize;
                gwc[j] = gwc[j] + g * xc[s];
                gxc[s] = gxc[s] + g * wc[j];
            }
        }
    }
}

/// Non-overlapping average pooling over the last axis, trailing remainder
/// dropped.
pub fn avg_pool_rows<T: Scalar>(x: &[T], rows: usize, len: usize, k: usize, out: &mut [T]) {
    let out_len = len / k;
    let inv = T::one() / T::of(k as f64);
    for r in 0..rows {
        let src = &x[r * len..(r + 1) * len];
        for (w, o) in out[r * out_len..(r + 1) * out_len].iter_mut().enumerate() {
            let s: T = src[w * k..(w + 1) * k].iter().copied().sum();
            *o = s * inv;
        }
    }
}

pub fn avg_pool_rows_backward<T: Scalar>(gy: &[T], rows: usize, len: usize, k: usize, gx: &mut [T]) {
    let out_len = len / k;
    let inv = T::one() / T::of(k as f64);
    gx.fill(T::zero());
    for r in 0..rows {
        for w in 0..out_len {
            let g = gy[r * out_len + w] * inv;
            for v in &mut gx[r * len + w * k..r * len + (w + 1) * k] {
                *v = g;
            }
        }
    }
}

/// Dense layer on one vector: `y = W x + b`.
pub fn dense<T: Scalar>(w: &[T], b: &[T], x: &[T], n_in: usize, out: &mut [T]) -> u64 {
    for (o, y) in out.iter_mut().enumerate() {
        let row = &w[o * n_in..(o + 1) * n_in];
        *y = b[o] + row.iter().zip(x).map(|(&a, &v)| a * v).sum::<T>();
    }
    (n_in * out.len()) as u64
}

/// Stable softmax cross-entropy. Returns the loss and `softmax − onehot`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    let log_sum = sum.ln() + m;
    let loss = log_sum - logits[label];
    let mut grad: Vec<T> = exps.iter().map(|&e| e / sum).collect();
    grad[label] = grad[label] - T::one();
    Ok((loss, grad))
}

// --- Tensor-level entry points for single trials ---

pub fn spatial_conv_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    let (n_k, n_ch) = dims2(w)?;
    let (xc, len) = dims2(x)?;
    if xc != n_ch {
        return Err(Error::shape(&[n_ch, len], x.shape()));
    }
    let mut out = Tensor::zeros(&[n_k, len]);
    mix_channels(w.data(), x.data(), n_ch, n_k, len, out.data_mut());
    Ok(out)
}

pub fn pointwise_conv_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    spatial_conv_forward(x, w)
}

pub fn temporal_depthwise_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, k) = dims2(w)?;
    let (xc, len) = dims2(x)?;
    if xc != c {
        return Err(Error::shape(&[c, len], x.shape()));
    }
    if k > len + 2 * (k / 2) {
        return Err(Error::InvalidArgument(format!(
            "kernel length {k} too long for input length {len}"
        )));
    }
    let mut out = Tensor::zeros(&[c, len]);
    depthwise_xcorr(w.data(), x.data(), c, k, len, out.data_mut());
    Ok(out)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

pub fn avg_pool<T: Scalar>(x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let len = *x.shape().last().ok_or(Error::Empty("pool input"))?;
    if k == 0 || len < k {
        return Err(Error::InvalidArgument(format!(
            "pooling window {k} longer than input length {len}"
        )));
    }
    let rows = x.len() / len;
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = len / k;
    let mut out = Tensor::zeros(&shape);
    avg_pool_rows(x.data(), rows, len, k, out.data_mut());
    Ok(out)
}

pub fn fully_connected<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n_out, n_in) = dims2(w)?;
    if x.len() != n_in {
        return Err(Error::shape(&[n_in], x.shape()));
    }
    if b.len() != n_out {
        return Err(Error::shape(&[n_out], b.shape()));
    }
    let mut out = Tensor::zeros(&[n_out]);
    dense(w.data(), b.data(), x.data(), n_in, out.data_mut());
    Ok(out)
}

fn dims2<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [a, b] => Ok((a, b)),
        _ => Err(Error::InvalidArgument(format!(
            "expected a rank-2 tensor, got shape {:?}",
            t.shape()
        ))),
    }
}
