//! Symmetric power-of-two 8-bit quantization.
//!
//! A [`QuantTensor`] with scale exponent `n` represents the real values
//! `data[i] * 2^-n`. The zero point is always 0. Every rounding to an integer
//! in the toolkit goes through [`round_half_away`] or [`rshift_round`] so that
//! float export and integer inference agree bit for bit.

use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Largest magnitude a quantized weight may take.
pub const WEIGHT_MAX: i32 = 127;
pub const ACT_MIN: i32 = -128;
pub const ACT_MAX: i32 = 127;
/// Scale exponents are kept inside this window.
pub const SCALE_EXP_LIMIT: i32 = 24;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantTensor {
    shape: Vec<usize>,
    data: Vec<i8>,
    scale_exp: i32,
}

impl QuantTensor {
    pub fn new(shape: Vec<usize>, data: Vec<i8>, scale_exp: i32) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} holds {n} elements but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data, scale_exp })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [i8] {
        &mut self.data
    }

    pub fn expect_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(expected, &self.shape));
        }
        Ok(())
    }

    pub fn scale_exp(&self) -> i32 {
        self.scale_exp
    }

    pub fn zero_point(&self) -> i32 {
        0
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[i8] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn dequantize(&self) -> Tensor<f32> {
        let step = pow2(-self.scale_exp);
        Tensor::new(
            self.shape.clone(),
            self.data.iter().map(|&q| (q as f64 * step) as f32).collect(),
        )
        .expect("shape already validated")
    }

    /// Copy with each row reversed along the last axis.
    pub fn reversed_rows(&self) -> Self {
        let cols = self.shape[self.shape.len() - 1];
        let mut data = self.data.clone();
        for row in data.chunks_mut(cols) {
            row.reverse();
        }
        Self {
            shape: self.shape.clone(),
            data,
            scale_exp: self.scale_exp,
        }
    }
}

/// Result of quantizing a float tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantized {
    pub tensor: QuantTensor,
    /// Elements whose rounded value fell outside `[-127, 127]`.
    pub saturated: usize,
}

pub fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// Round to nearest integer, ties away from zero.
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// `v / 2^shift` rounded to nearest, ties away from zero.
pub fn rshift_round(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let half = 1i64 << (shift - 1);
    if v >= 0 {
        (v + half) >> shift
    } else {
        -((-v + half) >> shift)
    }
}

/// Largest `n` such that `max_abs * 2^n <= 127`, clamped to
/// `[-SCALE_EXP_LIMIT, SCALE_EXP_LIMIT]`. Zero (or non-finite) input maps to 0.
pub fn choose_scale_exp(max_abs: f64) -> i32 {
    if !(max_abs.is_finite() && max_abs > 0.0) {
        return 0;
    }
    let mut n = (127.0 / max_abs).log2().floor() as i32;
    n = n.clamp(-SCALE_EXP_LIMIT - 1, SCALE_EXP_LIMIT + 1);
    // log2 can land one off near exact powers of two
    while max_abs * pow2(n + 1) <= 127.0 && n <= SCALE_EXP_LIMIT {
        n += 1;
    }
    while max_abs * pow2(n) > 127.0 && n >= -SCALE_EXP_LIMIT {
        n -= 1;
    }
    n.clamp(-SCALE_EXP_LIMIT, SCALE_EXP_LIMIT)
}

/// Quantize with a power-of-two scale: `clamp(round(v * 2^n), -127, 127)`.
pub fn quantize<T: Scalar>(t: &Tensor<T>, scale_exp: i32) -> Quantized {
    let (data, saturated) = quantize_values(t.data(), pow2(scale_exp), WEIGHT_MAX);
    Quantized {
        tensor: QuantTensor {
            shape: t.shape().to_vec(),
            data,
            scale_exp,
        },
        saturated,
    }
}

/// Quantize raw values with an arbitrary multiplier, clamping to `±limit`.
/// Returns the codes and the number of clamped elements.
pub fn quantize_values<T: Scalar>(values: &[T], multiplier: f64, limit: i32) -> (Vec<i8>, usize) {
    let mut saturated = 0;
    let codes = values
        .iter()
        .map(|v| {
            let r = round_half_away(v.to_f64_lossless() * multiplier);
            if r > limit as f64 || r < -(limit as f64) {
                saturated += 1;
            }
            r.clamp(-(limit as f64), limit as f64) as i8
        })
        .collect();
    (codes, saturated)
}

/// Quantize-dequantize a single activation value with scale exponent `n`,
/// using the full activation range `[-128, 127]`.
pub fn fake_quant(v: f64, scale_exp: i32) -> f64 {
    let q = round_half_away(v * pow2(scale_exp)).clamp(ACT_MIN as f64, ACT_MAX as f64);
    q * pow2(-scale_exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scale_exp_examples() {
        assert_eq!(choose_scale_exp(1.0), 6);
        assert_eq!(choose_scale_exp(127.0), 0);
        assert_eq!(choose_scale_exp(0.0), 0);
        assert_eq!(choose_scale_exp(1e-30), SCALE_EXP_LIMIT);
        assert_eq!(choose_scale_exp(1e30), -SCALE_EXP_LIMIT);
        // 127/0.5 = 254 -> 2^7 = 128 <= 254 < 256
        assert_eq!(choose_scale_exp(0.5), 7);
    }

    #[test]
    fn zero_tensor_quantizes_to_zero() {
        let t = Tensor::<f32>::zeros(&[3, 4]);
        for n in [-3, 0, 9] {
            let q = quantize(&t, n);
            assert!(q.tensor.data().iter().all(|&v| v == 0));
            assert_eq!(q.saturated, 0);
        }
        let n = choose_scale_exp(t.max_abs() as f64);
        assert_eq!(n, 0);
    }

    #[test]
    fn scaled_by_127_rounds_half_away() {
        // 0.5*127 = 63.5 -> 64, 0.25*127 = 31.75 -> 32
        let (codes, sat) = quantize_values(&[0.5f64, -1.0, 0.25], 127.0, WEIGHT_MAX);
        assert_eq!(codes, vec![64, -127, 32]);
        assert_eq!(sat, 0);
    }

    #[test]
    fn power_of_two_variant_of_same_tensor() {
        let t = Tensor::new(vec![3], vec![0.5f32, -1.0, 0.25]).unwrap();
        let n = choose_scale_exp(1.0);
        let q = quantize(&t, n);
        assert_eq!(q.tensor.data(), &[32, -64, 16]);
    }

    #[test]
    fn saturation_is_counted() {
        let t = Tensor::new(vec![3], vec![2.0f32, -2.0, 0.0]).unwrap();
        let q = quantize(&t, 7);
        assert_eq!(q.tensor.data(), &[127, -127, 0]);
        assert_eq!(q.saturated, 2);
    }

    #[test]
    fn rshift_round_ties_away() {
        assert_eq!(rshift_round(21, 1), 11);
        assert_eq!(rshift_round(-21, 1), -11);
        assert_eq!(rshift_round(20, 2), 5);
        assert_eq!(rshift_round(-2, 2), -1);
        assert_eq!(rshift_round(1, 2), 0);
        assert_eq!(rshift_round(7, 0), 7);
    }

    #[test]
    fn reversed_rows_is_an_involution() {
        let q = QuantTensor::new(vec![2, 3], vec![1, 2, 3, 4, 5, 6], 0).unwrap();
        let r = q.reversed_rows();
        assert_eq!(r.data(), &[3, 2, 1, 6, 5, 4]);
        assert_eq!(r.reversed_rows(), q);
    }

    proptest! {
        #[test]
        fn round_trip_error_is_half_a_step(n in -8i32..12, u in -1.0f64..1.0) {
            let v = u * 127.0 * pow2(-n);
            let t = Tensor::new(vec![1], vec![v]).unwrap();
            let back = quantize(&t, n).tensor.dequantize().data()[0] as f64;
            prop_assert!((v - back).abs() <= pow2(-n - 1) * (1.0 + 1e-6));
        }

        #[test]
        fn quantize_is_monotone(n in -4i32..10, a in -300.0f64..300.0, b in -300.0f64..300.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let t = Tensor::new(vec![2], vec![lo, hi]).unwrap();
            let q = quantize(&t, n).tensor;
            prop_assert!(q.data()[0] <= q.data()[1]);
        }

        #[test]
        fn chosen_exp_is_the_largest_fitting(m in 1e-6f64..1e6) {
            let n = choose_scale_exp(m);
            if n > -SCALE_EXP_LIMIT && n < SCALE_EXP_LIMIT {
                prop_assert!(m * pow2(n) <= 127.0);
                prop_assert!(m * pow2(n + 1) > 127.0);
            }
        }
    }
}
