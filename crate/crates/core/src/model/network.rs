use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, POOL, SEP_KERNEL};
use crate::error::{Error, Result};
use crate::nn::{AvgPool, BatchNorm, ChannelMix, DepthwiseTemporal, FakeQuant, Layer, Linear, Mode, Param, Relu};
use crate::numerics::{Scalar, Tensor};

/// Points where activations are quantized to 8 bits in the deployed model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuantPoint {
    Input = 0,
    Spatial = 1,
    Temporal = 2,
    Depthwise = 3,
    Separable = 4,
}

impl QuantPoint {
    pub const ALL: [QuantPoint; 5] = [
        QuantPoint::Input,
        QuantPoint::Spatial,
        QuantPoint::Temporal,
        QuantPoint::Depthwise,
        QuantPoint::Separable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuantPoint::Input => "input",
            QuantPoint::Spatial => "spatial",
            QuantPoint::Temporal => "temporal",
            QuantPoint::Depthwise => "depthwise",
            QuantPoint::Separable => "separable",
        }
    }
}

/// The four-block network.
///
/// - block 1: spatial convolution over all channels + batch norm (no activation)
/// - block 2: depthwise temporal convolution (length `n_f`) + batch norm +
///   average pool 8 + ReLU
/// - block 3: separable convolution (depthwise length 16, then pointwise
///   `n_k × n_k`) + batch norm + average pool 8 + ReLU
/// - block 4: flatten + fully connected to `n_cl` logits
///
/// Pooling runs before the ReLU. Batch norm is affine per feature, so it
/// commutes with average pooling, and the int8 engine can sum the pooling
/// window in the accumulator, apply one folded requantization and clamp at
/// zero with no approximation.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar = f32> {
    config: ModelConfig,
    pub q_input: FakeQuant,
    pub spatial: ChannelMix<T>,
    pub bn1: BatchNorm<T>,
    pub q_spatial: FakeQuant,
    pub temporal: DepthwiseTemporal<T>,
    pub bn2: BatchNorm<T>,
    pool2: AvgPool,
    relu2: Relu<T>,
    pub q_temporal: FakeQuant,
    pub depthwise: DepthwiseTemporal<T>,
    pub q_depthwise: FakeQuant,
    pub pointwise: ChannelMix<T>,
    pub bn3: BatchNorm<T>,
    pool3: AvgPool,
    relu3: Relu<T>,
    pub q_separable: FakeQuant,
    pub fc: Linear<T>,
    flat_shape: Option<Vec<usize>>,
}

fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-limit..limit)))
}

impl<T: Scalar> Network<T> {
    /// Build a network with seeded Glorot-uniform weights, unit batch-norm
    /// scales and zero biases.
    pub fn build(config: ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let ModelConfig {
            n_ch, n_k, n_f, n_cl, ..
        } = config;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let spatial = glorot(&mut rng, &[n_k, n_ch], n_ch, n_k);
        let temporal = glorot(&mut rng, &[n_k, n_f], n_f, n_f);
        let depthwise = glorot(&mut rng, &[n_k, SEP_KERNEL], SEP_KERNEL, SEP_KERNEL);
        let pointwise = glorot(&mut rng, &[n_k, n_k], n_k, n_k);
        let n_in = config.fc_inputs();
        let fc_w = glorot(&mut rng, &[n_cl, n_in], n_in, n_cl);
        Ok(Self {
            config,
            q_input: FakeQuant::default(),
            spatial: ChannelMix::new("spatial", spatial),
            bn1: BatchNorm::new("bn1", n_k),
            q_spatial: FakeQuant::default(),
            temporal: DepthwiseTemporal::new("temporal", temporal),
            bn2: BatchNorm::new("bn2", n_k),
            pool2: AvgPool::new(POOL),
            relu2: Relu::new(),
            q_temporal: FakeQuant::default(),
            depthwise: DepthwiseTemporal::new("depthwise", depthwise),
            q_depthwise: FakeQuant::default(),
            pointwise: ChannelMix::new("pointwise", pointwise),
            bn3: BatchNorm::new("bn3", n_k),
            pool3: AvgPool::new(POOL),
            relu3: Relu::new(),
            q_separable: FakeQuant::default(),
            fc: Linear::new(fc_w, Tensor::zeros(&[n_cl])),
            flat_shape: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn quant_node(&self, p: QuantPoint) -> &FakeQuant {
        match p {
            QuantPoint::Input => &self.q_input,
            QuantPoint::Spatial => &self.q_spatial,
            QuantPoint::Temporal => &self.q_temporal,
            QuantPoint::Depthwise => &self.q_depthwise,
            QuantPoint::Separable => &self.q_separable,
        }
    }

    pub fn quant_node_mut(&mut self, p: QuantPoint) -> &mut FakeQuant {
        match p {
            QuantPoint::Input => &mut self.q_input,
            QuantPoint::Spatial => &mut self.q_spatial,
            QuantPoint::Temporal => &mut self.q_temporal,
            QuantPoint::Depthwise => &mut self.q_depthwise,
            QuantPoint::Separable => &mut self.q_separable,
        }
    }

    /// Activation scale exponents currently applied, if any.
    pub fn activation_scales(&self) -> [Option<i32>; 5] {
        QuantPoint::ALL.map(|p| self.quant_node(p).scale_exp)
    }

    pub fn set_activation_scales(&mut self, scales: [Option<i32>; 5]) {
        for (p, s) in QuantPoint::ALL.into_iter().zip(scales) {
            self.quant_node_mut(p).scale_exp = s;
        }
    }

    /// Batched forward pass: `[batch, n_ch, n_s]` to `[batch, n_cl]` logits.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.forward_observed(x, mode, |_, _| {})
    }

    /// Forward pass that reports the activation entering each quantization
    /// point before it is quantized.
    pub fn forward_observed(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        mut observe: impl FnMut(QuantPoint, &Tensor<T>),
    ) -> Result<Tensor<T>> {
        let c = self.config;
        match *x.shape() {
            [_, ch, s] if ch == c.n_ch && s == c.n_s => {}
            _ => {
                let b = x.shape().first().copied().unwrap_or(1);
                return Err(Error::shape(&[b, c.n_ch, c.n_s], x.shape()));
            }
        }
        observe(QuantPoint::Input, x);
        let h = Layer::<T>::forward(&mut self.q_input, x, mode)?;
        let h = self.spatial.forward(&h, mode)?;
        let h = self.bn1.forward(&h, mode)?;
        observe(QuantPoint::Spatial, &h);
        let h = Layer::<T>::forward(&mut self.q_spatial, &h, mode)?;
        let h = self.temporal.forward(&h, mode)?;
        let h = self.bn2.forward(&h, mode)?;
        let h = Layer::<T>::forward(&mut self.pool2, &h, mode)?;
        let h = self.relu2.forward(&h, mode)?;
        observe(QuantPoint::Temporal, &h);
        let h = Layer::<T>::forward(&mut self.q_temporal, &h, mode)?;
        let h = self.depthwise.forward(&h, mode)?;
        observe(QuantPoint::Depthwise, &h);
        let h = Layer::<T>::forward(&mut self.q_depthwise, &h, mode)?;
        let h = self.pointwise.forward(&h, mode)?;
        let h = self.bn3.forward(&h, mode)?;
        let h = Layer::<T>::forward(&mut self.pool3, &h, mode)?;
        let h = self.relu3.forward(&h, mode)?;
        observe(QuantPoint::Separable, &h);
        let h = Layer::<T>::forward(&mut self.q_separable, &h, mode)?;
        let b = h.shape()[0];
        self.flat_shape = Some(h.shape().to_vec());
        let h = h.reshape(&[b, c.fc_inputs()])?;
        self.fc.forward(&h, mode)
    }

    /// Single-trial inference: `[n_ch, n_s]` to `[n_cl]` logits.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.config;
        x.expect_shape(&[c.n_ch, c.n_s])?;
        let y = self.forward(&x.clone().reshape(&[1, c.n_ch, c.n_s])?, Mode::Infer)?;
        y.reshape(&[c.n_cl])
    }

    /// Backpropagate logit gradients `[batch, n_cl]`; fills every parameter
    /// gradient and returns the input gradient.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        let flat = self.flat_shape.clone().ok_or(Error::MissingCache("network"))?;
        let g = self.fc.backward(grad_logits)?;
        let g = g.reshape(&flat)?;
        let g = Layer::<T>::backward(&mut self.q_separable, &g)?;
        let g = self.relu3.backward(&g)?;
        let g = Layer::<T>::backward(&mut self.pool3, &g)?;
        let g = self.bn3.backward(&g)?;
        let g = self.pointwise.backward(&g)?;
        let g = Layer::<T>::backward(&mut self.q_depthwise, &g)?;
        let g = self.depthwise.backward(&g)?;
        let g = Layer::<T>::backward(&mut self.q_temporal, &g)?;
        let g = self.relu2.backward(&g)?;
        let g = Layer::<T>::backward(&mut self.pool2, &g)?;
        let g = self.bn2.backward(&g)?;
        let g = self.temporal.backward(&g)?;
        let g = Layer::<T>::backward(&mut self.q_spatial, &g)?;
        let g = self.bn1.backward(&g)?;
        let g = self.spatial.backward(&g)?;
        Layer::<T>::backward(&mut self.q_input, &g)
    }

    /// Trainable parameters in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::with_capacity(12);
        v.push(&mut self.spatial.weight);
        v.extend(self.bn1.params_mut());
        v.push(&mut self.temporal.weight);
        v.extend(self.bn2.params_mut());
        v.push(&mut self.depthwise.weight);
        v.push(&mut self.pointwise.weight);
        v.extend(self.bn3.params_mut());
        v.extend(self.fc.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::with_capacity(12);
        v.push(&self.spatial.weight);
        v.extend(self.bn1.params());
        v.push(&self.temporal.weight);
        v.extend(self.bn2.params());
        v.push(&self.depthwise.weight);
        v.push(&self.pointwise.weight);
        v.extend(self.bn3.params());
        v.extend(self.fc.params());
        v
    }

    /// Positions in [`Self::params_mut`] that are 8-bit weights at deployment
    /// (convolution kernels and the classifier matrix).
    pub const QUANTIZED_PARAMS: [usize; 5] = [0, 3, 6, 7, 10];

    /// MACCs per trial of the last forward pass.
    pub fn last_maccs_per_trial(&self) -> u64 {
        self.spatial.maccs_per_trial()
            + self.temporal.maccs_per_trial()
            + self.depthwise.maccs_per_trial()
            + self.pointwise.maccs_per_trial()
            + self.fc.maccs_per_trial()
    }

    pub fn batch_norms(&self) -> [&BatchNorm<T>; 3] {
        [&self.bn1, &self.bn2, &self.bn3]
    }

    pub fn batch_norms_mut(&mut self) -> [&mut BatchNorm<T>; 3] {
        [&mut self.bn1, &mut self.bn2, &mut self.bn3]
    }
}
