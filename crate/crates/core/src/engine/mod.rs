//! Bit-exact int8 inference over a [`QuantNetwork`].
//!
//! Activations live in one arena of `peak_feature_pair` bytes. Each layer
//! reads from one end and writes to the other, so the arena is exactly the
//! two live buffers of the layer-by-layer memory model. The separable block
//! writes its depthwise intermediate to the far end and the pointwise result
//! back to the near end; this fits because `2·f₂ ≤ f₁ + f₂`. Logits are
//! returned as `i32` outside the arena.

mod kernels;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{POOL, SEP_KERNEL};
use crate::numerics::QuantTensor;
use crate::quant::{quantize_input, QuantNetwork};

/// Per-layer instrumentation. Byte counts are int8 activation slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub name: String,
    pub maccs: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub live_peak_bytes: u64,
    /// Requantized values clamped to the int8 range.
    pub saturated: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub layers: Vec<LayerTrace>,
    pub macc_total: u64,
    /// Largest `input + output` over the layers.
    pub peak_activation_bytes: u64,
    /// Size of the activation arena actually allocated.
    pub arena_bytes: u64,
    /// Parameter-equivalent weight bytes (see [`QuantNetwork::weight_bytes`]).
    pub weight_bytes: u64,
    /// Bytes the weights and requantization records occupy in memory.
    pub weight_storage_bytes: u64,
    /// Input samples clamped when quantizing a float trial.
    pub input_saturated: u64,
}

impl ExecutionTrace {
    /// Weights plus the two live activation buffers: the deployment memory
    /// model of the resource estimator at 8 bits.
    pub fn total_memory_bytes(&self) -> u64 {
        self.weight_bytes + self.arena_bytes
    }

    pub fn saturated_total(&self) -> u64 {
        self.layers.iter().map(|l| l.saturated).sum::<u64>() + self.input_saturated
    }

    /// Line-oriented `key=value` dump.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.layers {
            let _ = writeln!(
                s,
                "layer={} maccs={} input_bytes={} output_bytes={} live_peak_bytes={} saturated={}",
                l.name, l.maccs, l.input_bytes, l.output_bytes, l.live_peak_bytes, l.saturated
            );
        }
        let _ = writeln!(
            s,
            "total maccs={} peak_activation_bytes={} arena_bytes={} weight_bytes={} weight_storage_bytes={} memory_bytes={} input_saturated={}",
            self.macc_total,
            self.peak_activation_bytes,
            self.arena_bytes,
            self.weight_bytes,
            self.weight_storage_bytes,
            self.total_memory_bytes(),
            self.input_saturated
        );
        s
    }
}

/// Throughput model of a 4-way int8 SIMD multi-core MCU.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimdModel {
    pub lanes: u64,
    pub cores: u64,
    pub overhead_factor: f64,
}

impl SimdModel {
    pub fn new(cores: u64, overhead_factor: f64) -> Result<Self> {
        if cores == 0 || !(overhead_factor.is_finite() && overhead_factor >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "SIMD model needs cores >= 1 and overhead >= 1 (got {cores}, {overhead_factor})"
            )));
        }
        Ok(Self {
            lanes: 4,
            cores,
            overhead_factor,
        })
    }
}

/// `ceil(macc_total / (lanes · cores)) · overhead`, rounded up.
pub fn project_cycles(macc_total: u64, model: &SimdModel) -> u64 {
    let base = macc_total.div_ceil(model.lanes * model.cores);
    (base as f64 * model.overhead_factor).ceil() as u64
}

/// A validated network ready to run. Immutable; `run` allocates its own
/// arena, so concurrent calls are safe.
#[derive(Clone, Debug)]
pub struct Engine {
    qnet: QuantNetwork,
    /// Activation slots per stage: input, spatial, temporal, separable.
    features: [usize; 4],
    arena: usize,
}

impl Engine {
    /// Validate shapes and the 32-bit accumulator bound, then plan the arena.
    pub fn load(qnet: QuantNetwork) -> Result<Self> {
        qnet.validate()?;
        let c = qnet.config;
        let features = [
            c.n_ch * c.n_s,
            c.n_k * c.n_s,
            c.n_k * c.len_after_temporal(),
            c.fc_inputs(),
        ];
        let arena = features
            .windows(2)
            .map(|w| w[0] + w[1])
            .chain(std::iter::once(features[3] + c.n_cl))
            .max()
            .expect("non-empty");
        debug_assert!(2 * features[2] <= arena);
        Ok(Self { qnet, features, arena })
    }

    pub fn qnet(&self) -> &QuantNetwork {
        &self.qnet
    }

    pub fn arena_bytes(&self) -> u64 {
        self.arena as u64
    }

    /// Quantize a float `[n_ch, n_s]` trial at the input scale and run it.
    pub fn run_f32(&self, x: &[f32]) -> Result<(Vec<i32>, ExecutionTrace)> {
        let c = self.qnet.config;
        if x.len() != c.n_ch * c.n_s {
            return Err(Error::shape(&[c.n_ch, c.n_s], &[x.len()]));
        }
        let (q, saturated) = quantize_input(x, &[c.n_ch, c.n_s], self.qnet.input_exp())?;
        let (logits, mut trace) = self.run(&q)?;
        trace.input_saturated = saturated as u64;
        Ok((logits, trace))
    }

    /// Run one int8 trial `[n_ch, n_s]` at the network's input scale.
    pub fn run(&self, x: &QuantTensor) -> Result<(Vec<i32>, ExecutionTrace)> {
        let q = &self.qnet;
        let c = q.config;
        x.expect_shape(&[c.n_ch, c.n_s])?;
        if x.scale_exp() != q.input_exp() {
            return Err(Error::InvalidArgument(format!(
                "input scale exponent {} does not match the network's {}",
                x.scale_exp(),
                q.input_exp()
            )));
        }
        let [f0, f1, f2, f3] = self.features;
        let p = self.arena;
        let (n_s, l2) = (c.n_s, c.len_after_temporal());
        let mut arena = vec![0i8; p];
        arena[..f0].copy_from_slice(x.data());

        // spatial: [0, f0) -> [p - f1, p)
        let sat1 = {
            let (lo, hi) = arena.split_at_mut(p - f1);
            kernels::mix(q.spatial_w.data(), &lo[..f0], c.n_ch, n_s, 1, &q.spatial_rq, false, hi)
        };
        // temporal: [p - f1, p) -> [0, f2)
        let sat2 = {
            let (lo, hi) = arena.split_at_mut(f2);
            let input = &hi[hi.len() - f1..];
            kernels::depthwise(q.temporal_w.data(), c.n_f, input, n_s, POOL, &q.temporal_rq, true, lo)
        };
        // depthwise: [0, f2) -> [p - f2, p)
        let sat3a = {
            let (lo, hi) = arena.split_at_mut(p - f2);
            kernels::depthwise(
                q.depthwise_w.data(),
                SEP_KERNEL,
                &lo[..f2],
                l2,
                1,
                &q.depthwise_rq,
                false,
                hi,
            )
        };
        // pointwise: [p - f2, p) -> [0, f3)
        let sat3b = {
            let (lo, hi) = arena.split_at_mut(f3);
            let input = &hi[hi.len() - f2..];
            kernels::mix(q.pointwise_w.data(), input, c.n_k, l2, POOL, &q.pointwise_rq, true, lo)
        };
        let mut logits = vec![0i32; c.n_cl];
        kernels::dense(q.fc_w.data(), &q.fc_bias, &arena[..f3], &mut logits);

        let est = |name: &str, maccs: usize, i: usize, o: usize, saturated: usize| LayerTrace {
            name: name.into(),
            maccs: maccs as u64,
            input_bytes: i as u64,
            output_bytes: o as u64,
            live_peak_bytes: (i + o) as u64,
            saturated: saturated as u64,
        };
        let layers = vec![
            est("spatial", c.n_k * c.n_ch * n_s, f0, f1, sat1),
            est("temporal", c.n_k * c.n_f * n_s, f1, f2, sat2),
            est(
                "separable",
                (c.n_k * SEP_KERNEL + c.n_k * c.n_k) * l2,
                f2,
                f3,
                sat3a + sat3b,
            ),
            est("classifier", c.n_cl * f3, f3, c.n_cl, 0),
        ];
        let trace = ExecutionTrace {
            macc_total: layers.iter().map(|l| l.maccs).sum(),
            peak_activation_bytes: layers.iter().map(|l| l.live_peak_bytes).max().unwrap_or(0),
            layers,
            arena_bytes: p as u64,
            weight_bytes: q.weight_bytes(),
            weight_storage_bytes: q.weight_storage_bytes(),
            input_saturated: 0,
        };
        Ok((logits, trace))
    }
}

/// Index of the largest logit; ties go to the lowest class.
pub fn argmax_i32(logits: &[i32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{estimate, Precision};
    use crate::io::{synth, SynthSpec};
    use crate::model::{ModelConfig, Network};
    use crate::quant::export;

    fn toy_engine(cfg: ModelConfig) -> Engine {
        let spec = SynthSpec {
            n_ch: cfg.n_ch,
            n_samples: cfg.n_s,
            classes: vec![
                crate::io::ClassSignal {
                    channels: vec![0],
                    center_hz: 10.0,
                    amplitude: 2.0,
                },
                crate::io::ClassSignal {
                    channels: vec![cfg.n_ch - 1],
                    center_hz: 20.0,
                    amplitude: 2.0,
                },
            ],
            ..SynthSpec::default()
        };
        let data = synth(&spec, 3, 0).unwrap();
        let net = Network::<f32>::build(cfg, 0).unwrap();
        Engine::load(export(&net, &data).unwrap()).unwrap()
    }

    #[test]
    fn project_cycles_examples() {
        let one = SimdModel::new(1, 1.0).unwrap();
        assert_eq!(project_cycles(4, &one), 1);
        let eight = SimdModel::new(8, 1.0).unwrap();
        assert_eq!(project_cycles(1_505_728, &eight), 47_054);
        let slow = SimdModel::new(8, 2.0).unwrap();
        assert_eq!(project_cycles(1_505_728, &slow), 2 * 47_054);
        assert!(SimdModel::new(0, 1.0).is_err());
        assert!(SimdModel::new(1, 0.5).is_err());
    }

    #[test]
    fn trace_matches_estimator() {
        for cfg in [
            ModelConfig::new(4, 128, 4, 8, 2).unwrap(),
            ModelConfig::new(3, 200, 6, 13, 3).unwrap(),
        ] {
            let engine = toy_engine(cfg);
            let x = QuantTensor::new(
                vec![cfg.n_ch, cfg.n_s],
                vec![1; cfg.n_ch * cfg.n_s],
                engine.qnet().input_exp(),
            )
            .unwrap();
            let (_, trace) = engine.run(&x).unwrap();
            let report = estimate(&cfg).unwrap();
            assert_eq!(trace.macc_total, report.macc_total);
            assert_eq!(trace.peak_activation_bytes, report.peak_feature_pair);
            assert_eq!(trace.total_memory_bytes(), report.memory_bytes(Precision::Int8));
            for (l, r) in trace.layers.iter().zip(&report.layers) {
                assert_eq!(
                    (l.maccs, l.input_bytes, l.output_bytes),
                    (r.maccs, r.in_features, r.out_features)
                );
            }
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_logits() {
        let cfg = ModelConfig::new(4, 128, 4, 8, 2).unwrap();
        let engine = toy_engine(cfg);
        let mut q = engine.qnet().clone();
        for rq in [
            &mut q.spatial_rq,
            &mut q.temporal_rq,
            &mut q.depthwise_rq,
            &mut q.pointwise_rq,
        ] {
            rq.iter_mut().for_each(|r| r.bias = 0);
        }
        q.fc_bias.iter_mut().for_each(|b| *b = 0);
        let engine = Engine::load(q).unwrap();
        let (logits, _) = engine.run_f32(&vec![0.0; 4 * 128]).unwrap();
        assert_eq!(logits, vec![0, 0]);
    }

    #[test]
    fn thread_count_does_not_change_logits() {
        let cfg = ModelConfig::new(8, 256, 8, 16, 3).unwrap();
        let engine = toy_engine(cfg);
        let x: Vec<f32> = (0..8 * 256).map(|i| ((i * 37 % 101) as f32 / 25.0) - 2.0).collect();
        let run_with = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| engine.run_f32(&x).unwrap())
        };
        let (a, ta) = run_with(1);
        let (b, tb) = run_with(4);
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn input_mismatch_rejected() {
        let cfg = ModelConfig::new(4, 128, 4, 8, 2).unwrap();
        let engine = toy_engine(cfg);
        let e = engine.qnet().input_exp();
        assert!(engine
            .run(&QuantTensor::new(vec![4, 64], vec![0; 256], e).unwrap())
            .is_err());
        assert!(engine
            .run(&QuantTensor::new(vec![4, 128], vec![0; 512], e + 1).unwrap())
            .is_err());
        assert!(engine.run_f32(&[0.0; 3]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_i32(&[3, 7, 7, 1]), 1);
        assert_eq!(argmax_i32(&[-1]), 0);
    }
}
