//! Integer kernels. Every output row is written by exactly one task, and
//! each accumulator sums its products in a fixed order, so results do not
//! depend on the thread count.

use rayon::prelude::*;

use crate::numerics::{ACT_MAX, ACT_MIN};
use crate::quant::Requant;

const ACT_MAX_I64: i64 = ACT_MAX as i64;
const ACT_MIN_I64: i64 = ACT_MIN as i64;

/// Multiply-accumulate four taps at a time, the grouping a 4-way SIMD
/// instruction executes in one cycle; the tail runs scalar.
#[inline]
fn dot(a: &[i8], b: &[i8]) -> i32 {
    let mut acc = 0i32;
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc += x[0] as i32 * y[0] as i32
            + x[1] as i32 * y[1] as i32
            + x[2] as i32 * y[2] as i32
            + x[3] as i32 * y[3] as i32;
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        acc += *x as i32 * *y as i32;
    }
    acc
}

/// Convolution tap sum `Σ_i k[i]·window[K−1−i]`, four taps at a time.
#[inline]
fn conv_taps(k: &[i8], window: &[i8]) -> i32 {
    let n = k.len();
    let mut acc = 0i32;
    let mut i = 0;
    while i + 4 <= n {
        acc += k[i] as i32 * window[n - 1 - i] as i32
            + k[i + 1] as i32 * window[n - 2 - i] as i32
            + k[i + 2] as i32 * window[n - 3 - i] as i32
            + k[i + 3] as i32 * window[n - 4 - i] as i32;
        i += 4;
    }
    while i < n {
        acc += k[i] as i32 * window[n - 1 - i] as i32;
        i += 1;
    }
    acc
}

/// Requantize one accumulator; returns the code and whether it clamped.
#[inline]
fn requant(acc: i32, c: &Requant, relu: bool) -> (i8, bool) {
    let v = c.scaled(acc);
    let lo = if relu { 0 } else { ACT_MIN_I64 };
    // ReLU zeroing a negative value is the activation, not a saturation.
    let clamped = v > ACT_MAX_I64 || (!relu && v < ACT_MIN_I64);
    (v.clamp(lo, ACT_MAX_I64) as i8, clamped)
}

/// `out[o][t] = requant(Σ_i w[o][i]·x[i][t])` with windowed sums of `pool`
/// consecutive positions (`pool = 1`: no pooling). Positions past the last
/// full window are still computed, as in the float model, then dropped.
/// Returns saturations.
#[allow(clippy::too_many_arguments)]
pub fn mix(
    w: &[i8],
    x: &[i8],
    n_in: usize,
    len: usize,
    pool: usize,
    rq: &[Requant],
    relu: bool,
    out: &mut [i8],
) -> usize {
    let out_len = len / pool;
    out.par_chunks_mut(out_len.max(1))
        .take(rq.len())
        .enumerate()
        .map(|(o, row)| {
            let wr = &w[o * n_in..(o + 1) * n_in];
            let mut col = vec![0i8; n_in];
            let mut acc_row = vec![0i32; len];
            for (t, acc) in acc_row.iter_mut().enumerate() {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = x[i * len + t];
                }
                *acc = dot(wr, &col);
            }
            pool_requant(&acc_row, pool, &rq[o], relu, &mut row[..out_len])
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// Depthwise convolution of each row with its reversed kernel `k`
/// (`y[t] = Σ_i k[i]·x[t + K−1−i − pad]`, `pad = (K−1)/2`, zeros outside),
/// then windowed sums of `pool`, then requantization.
#[allow(clippy::too_many_arguments)]
pub fn depthwise(
    k: &[i8],
    kernel: usize,
    x: &[i8],
    len: usize,
    pool: usize,
    rq: &[Requant],
    relu: bool,
    out: &mut [i8],
) -> usize {
    let out_len = len / pool;
    let pad = (kernel - 1) / 2;
    out.par_chunks_mut(out_len.max(1))
        .take(rq.len())
        .enumerate()
        .map(|(ch, row)| {
            let kr = &k[ch * kernel..(ch + 1) * kernel];
            let xr = &x[ch * len..(ch + 1) * len];
            // Zero-padded copy: x[m] sits at padded[m + pad], so output t
            // reads the full window padded[t..t + K].
            let mut padded = vec![0i8; len + kernel - 1];
            padded[pad..pad + len].copy_from_slice(xr);
            let mut acc_row = vec![0i32; len];
            for (t, acc) in acc_row.iter_mut().enumerate() {
                *acc = conv_taps(kr, &padded[t..t + kernel]);
            }
            pool_requant(&acc_row, pool, &rq[ch], relu, &mut row[..out_len])
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

fn pool_requant(acc: &[i32], pool: usize, rq: &Requant, relu: bool, out: &mut [i8]) -> usize {
    let mut saturated = 0;
    for (j, o) in out.iter_mut().enumerate() {
        let sum: i32 = acc[j * pool..(j + 1) * pool].iter().sum();
        let (v, s) = requant(sum, rq, relu);
        *o = v;
        saturated += s as usize;
    }
    saturated
}

/// `logits[c] = Σ_i w[c][i]·x[i] + bias[c]`.
pub fn dense(w: &[i8], bias: &[i32], x: &[i8], out: &mut [i32]) {
    let n_in = x.len();
    out.par_iter_mut().enumerate().for_each(|(c, o)| {
        *o = dot(&w[c * n_in..(c + 1) * n_in], x) + bias[c];
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_handles_tails() {
        let a: Vec<i8> = (1..=7).collect();
        let b = vec![2i8; 7];
        assert_eq!(dot(&a, &b), 56);
        assert_eq!(dot(&[-128], &[127]), -16256);
    }

    #[test]
    fn depthwise_with_reversed_kernel_is_cross_correlation() {
        // Float kernel [1, 2, 3] stored as [3, 2, 1]; pad = 1.
        let x = [1i8, 0, 0, 2];
        let mut out = [0i8; 4];
        depthwise(&[3, 2, 1], 3, &x, 4, 1, &[Requant::IDENTITY], false, &mut out);
        // y[t] = 1·x[t-1] + 2·x[t] + 3·x[t+1]
        assert_eq!(out, [2, 1, 6, 4]);
    }

    #[test]
    fn mix_with_pooling() {
        // Two inputs, one output, weights [1, -1], pool 2, identity scale.
        let x = [4i8, 6, 1, 1, 0, 0, 0, 0];
        let mut out = [0i8; 2];
        let rq = Requant {
            mult: 1,
            shift: 1,
            bias: 0,
        };
        mix(&[1, -1], &x, 2, 4, 2, &[rq], true, &mut out);
        assert_eq!(out, [5, 1]);
    }
}
