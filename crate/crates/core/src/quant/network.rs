use crate::error::{Error, Result};
use crate::model::{ModelConfig, QuantPoint, POOL, SEP_KERNEL};
use crate::numerics::{pow2, QuantTensor, ACT_MAX, ACT_MIN};

use super::requant::{Requant, MAX_SHIFT};

/// Exported int8 network.
///
/// Execution order per block (integer domain):
///
/// 1. spatial: int8 dot products over channels → requant (BN folded) → int8
/// 2. temporal: depthwise convolution with the reversed kernel, window sum
///    of 8 accumulators → requant (BN and ÷8 folded) → clamp at 0
/// 3. separable: depthwise convolution (reversed, length 16) → requant
///    (scale conversion only); pointwise mix, window sum of 8 → requant
///    (BN and ÷8 folded) → clamp at 0
/// 4. classifier: int8 dot products + int32 bias → int32 logits
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantNetwork {
    pub config: ModelConfig,
    /// Activation scale exponents, indexed by [`QuantPoint`].
    pub act_exps: [i32; 5],
    /// `[n_k, n_ch]`.
    pub spatial_w: QuantTensor,
    /// `[n_k, n_f]`, each row reversed relative to the float kernel.
    pub temporal_w: QuantTensor,
    /// `[n_k, 16]`, each row reversed.
    pub depthwise_w: QuantTensor,
    /// `[n_k, n_k]`.
    pub pointwise_w: QuantTensor,
    /// `[n_cl, n_k · len_after_separable]`.
    pub fc_w: QuantTensor,
    pub spatial_rq: Vec<Requant>,
    pub temporal_rq: Vec<Requant>,
    pub depthwise_rq: Vec<Requant>,
    pub pointwise_rq: Vec<Requant>,
    /// Classifier bias at the logit scale `2^-(act_exps[Separable] + fc exp)`.
    pub fc_bias: Vec<i32>,
}

/// Worst-case accumulator magnitude of one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccumulatorBound {
    pub layer: &'static str,
    pub bound: u64,
}

/// Largest `|int8 activation × int8 weight|` (weights are clamped to ±127).
const MAX_PRODUCT: u64 = 128 * 127;

impl QuantNetwork {
    pub fn input_exp(&self) -> i32 {
        self.act_exps[QuantPoint::Input as usize]
    }

    /// Exponent of the int32 logits: `logit = code · 2^-logit_exp`.
    pub fn logit_exp(&self) -> i32 {
        self.act_exps[QuantPoint::Separable as usize] + self.fc_w.scale_exp()
    }

    pub fn dequantize_logits(&self, logits: &[i32]) -> Vec<f64> {
        let s = pow2(-self.logit_exp());
        logits.iter().map(|&v| v as f64 * s).collect()
    }

    /// The five weight tensors in execution order.
    pub fn weights(&self) -> [(&'static str, &QuantTensor); 5] {
        [
            ("spatial", &self.spatial_w),
            ("temporal", &self.temporal_w),
            ("depthwise", &self.depthwise_w),
            ("pointwise", &self.pointwise_w),
            ("fc", &self.fc_w),
        ]
    }

    pub fn requants(&self) -> [(&'static str, &[Requant]); 4] {
        [
            ("spatial", &self.spatial_rq),
            ("temporal", &self.temporal_rq),
            ("depthwise", &self.depthwise_rq),
            ("pointwise", &self.pointwise_rq),
        ]
    }

    /// Parameter-equivalent weight footprint in bytes at 8 bits: every
    /// weight, four values per batch-norm feature (folded into the
    /// requantization constants) and the classifier biases. Equals the
    /// estimator's `params_total`.
    pub fn weight_bytes(&self) -> u64 {
        let weights: usize = self.weights().iter().map(|(_, w)| w.len()).sum();
        (weights + 4 * (self.spatial_rq.len() + self.temporal_rq.len() + self.pointwise_rq.len()) + self.fc_bias.len())
            as u64
    }

    /// Bytes actually stored: int8 weights, 12 bytes per requantization
    /// record (i32 mult, shift, i32 bias) and 4 bytes per classifier bias.
    pub fn weight_storage_bytes(&self) -> u64 {
        let weights: usize = self.weights().iter().map(|(_, w)| w.len()).sum();
        let rq: usize = self.requants().iter().map(|(_, r)| r.len()).sum();
        (weights + 12 * rq + 4 * self.fc_bias.len()) as u64
    }

    /// Per-layer worst-case `|accumulator|`; pooled layers sum 8 outputs.
    pub fn accumulator_bounds(&self) -> [AccumulatorBound; 5] {
        let c = &self.config;
        let pool = POOL as u64;
        [
            AccumulatorBound {
                layer: "spatial",
                bound: MAX_PRODUCT * c.n_ch as u64,
            },
            AccumulatorBound {
                layer: "temporal",
                bound: MAX_PRODUCT * c.n_f as u64 * pool,
            },
            AccumulatorBound {
                layer: "depthwise",
                bound: MAX_PRODUCT * SEP_KERNEL as u64,
            },
            AccumulatorBound {
                layer: "pointwise",
                bound: MAX_PRODUCT * c.n_k as u64 * pool,
            },
            AccumulatorBound {
                layer: "fc",
                bound: MAX_PRODUCT * c.fc_inputs() as u64
                    + self.fc_bias.iter().map(|b| b.unsigned_abs() as u64).max().unwrap_or(0),
            },
        ]
    }

    /// Check shapes against the config, requantization ranges and that no
    /// accumulator can overflow 32 bits.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let expect = |w: &QuantTensor, shape: &[usize]| -> Result<()> {
            if w.shape() != shape {
                return Err(Error::shape(shape, w.shape()));
            }
            Ok(())
        };
        expect(&self.spatial_w, &[c.n_k, c.n_ch])?;
        expect(&self.temporal_w, &[c.n_k, c.n_f])?;
        expect(&self.depthwise_w, &[c.n_k, SEP_KERNEL])?;
        expect(&self.pointwise_w, &[c.n_k, c.n_k])?;
        expect(&self.fc_w, &[c.n_cl, c.fc_inputs()])?;
        for (name, w) in self.weights() {
            if w.data().contains(&i8::MIN) {
                return Err(Error::Quantization(format!(
                    "{name} weights use -128; weights are limited to ±127"
                )));
            }
        }
        for (name, rq) in self.requants() {
            if rq.len() != c.n_k {
                return Err(Error::Quantization(format!(
                    "{name}: {} requantization records for {} features",
                    rq.len(),
                    c.n_k
                )));
            }
            if let Some(r) = rq.iter().find(|r| r.shift > MAX_SHIFT) {
                return Err(Error::Quantization(format!(
                    "{name}: shift {} exceeds {MAX_SHIFT}",
                    r.shift
                )));
            }
        }
        if self.fc_bias.len() != c.n_cl {
            return Err(Error::shape(&[c.n_cl], &[self.fc_bias.len()]));
        }
        for b in self.accumulator_bounds() {
            if b.bound > i32::MAX as u64 {
                return Err(Error::Quantization(format!(
                    "{} accumulator can reach {} which overflows 32 bits",
                    b.layer, b.bound
                )));
            }
        }
        Ok(())
    }
}

/// Quantize a float trial to the input scale over the full activation range.
/// Returns the codes and the number of clamped samples.
pub fn quantize_input(x: &[f32], shape: &[usize], input_exp: i32) -> Result<(QuantTensor, usize)> {
    let mut saturated = 0;
    let s = pow2(input_exp);
    let data = x
        .iter()
        .map(|&v| {
            let r = (v as f64 * s).round();
            if r < ACT_MIN as f64 || r > ACT_MAX as f64 {
                saturated += 1;
            }
            r.clamp(ACT_MIN as f64, ACT_MAX as f64) as i8
        })
        .collect();
    Ok((QuantTensor::new(shape.to_vec(), data, input_exp)?, saturated))
}
