//! Batched layers with forward caches and manual backpropagation.
//!
//! Inputs to the convolutional layers are `[batch, channels, length]`;
//! [`Linear`] takes `[batch, features]`. Per-trial work runs on the current
//! rayon pool. Weight gradients are reduced over trials in index order, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;

use super::ops;
use crate::error::{Error, Result};
use crate::numerics::{fake_quant, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; running statistics are updated.
    Train,
    /// Running statistics only.
    Infer,
}

/// A trainable tensor with its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }
}

pub trait Layer<T: Scalar> {
    fn name(&self) -> &'static str;

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    /// Returns the input gradient and overwrites this layer's parameter
    /// gradients.
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    /// MACCs per trial performed by the last forward call.
    fn maccs_per_trial(&self) -> u64 {
        0
    }
}

fn dims3<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, c, l] => Ok((b, c, l)),
        _ => Err(Error::InvalidArgument(format!(
            "expected [batch, channels, length], got {:?}",
            x.shape()
        ))),
    }
}

/// Sum per-trial gradient buffers in trial order.
fn reduce_ordered<T: Scalar>(parts: Vec<Vec<T>>, into: &mut [T]) {
    into.fill(T::zero());
    for p in parts {
        for (d, v) in into.iter_mut().zip(p) {
            *d = *d + v;
        }
    }
}

/// Channel-mixing convolution: weights `[n_out, n_in]` applied at every time
/// step. Serves as both the spatial convolution and the pointwise convolution.
#[derive(Clone, Debug)]
pub struct ChannelMix<T> {
    name: &'static str,
    pub weight: Param<T>,
    cache: Option<Tensor<T>>,
    maccs: u64,
}

impl<T: Scalar> ChannelMix<T> {
    pub fn new(name: &'static str, weight: Tensor<T>) -> Self {
        Self {
            name,
            weight: Param::new(weight),
            cache: None,
            maccs: 0,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let s = self.weight.value.shape();
        (s[0], s[1])
    }
}

impl<T: Scalar> Layer<T> for ChannelMix<T> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (b, c, l) = dims3(x)?;
        let (n_out, n_in) = self.dims();
        if c != n_in {
            return Err(Error::shape(&[b, n_in, l], x.shape()));
        }
        let mut out = Tensor::zeros(&[b, n_out, l]);
        let w = self.weight.value.data();
        out.data_mut()
            .par_chunks_mut(n_out * l)
            .zip(x.data().par_chunks(n_in * l))
            .for_each(|(o, xi)| {
                ops::mix_channels(w, xi, n_in, n_out, l, o);
            });
        self.maccs = (n_in * n_out * l) as u64;
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or(Error::MissingCache(self.name))?;
        let (b, _, l) = dims3(x)?;
        let (n_out, n_in) = self.dims();
        gy.expect_shape(&[b, n_out, l])?;
        let w = self.weight.value.data();
        let mut gx = Tensor::zeros(x.shape());
        let parts: Vec<Vec<T>> = gx
            .data_mut()
            .par_chunks_mut(n_in * l)
            .zip(x.data().par_chunks(n_in * l))
            .zip(gy.data().par_chunks(n_out * l))
            .map(|((gxi, xi), gyi)| {
                let mut gw = vec![T::zero(); n_out * n_in];
                ops::mix_channels_backward(w, xi, gyi, n_in, n_out, l, gxi, &mut gw);
                gw
            })
            .collect();
        reduce_ordered(parts, self.weight.grad.data_mut());
        Ok(gx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight]
    }

    fn maccs_per_trial(&self) -> u64 {
        self.maccs
    }
}

/// Depthwise temporal convolution (cross-correlation, same padding), one
/// kernel per feature map. Weights `[channels, k]`.
#[derive(Clone, Debug)]
pub struct DepthwiseTemporal<T> {
    name: &'static str,
    pub weight: Param<T>,
    cache: Option<Tensor<T>>,
    maccs: u64,
}

impl<T: Scalar> DepthwiseTemporal<T> {
    pub fn new(name: &'static str, weight: Tensor<T>) -> Self {
        Self {
            name,
            weight: Param::new(weight),
            cache: None,
            maccs: 0,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let s = self.weight.value.shape();
        (s[0], s[1])
    }
}

impl<T: Scalar> Layer<T> for DepthwiseTemporal<T> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (b, c, l) = dims3(x)?;
        let (ch, k) = self.dims();
        if c != ch {
            return Err(Error::shape(&[b, ch, l], x.shape()));
        }
        let mut out = Tensor::zeros(&[b, c, l]);
        let w = self.weight.value.data();
        out.data_mut()
            .par_chunks_mut(c * l)
            .zip(x.data().par_chunks(c * l))
            .for_each(|(o, xi)| {
                ops::depthwise_xcorr(w, xi, c, k, l, o);
            });
        self.maccs = (c * k * l) as u64;
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or(Error::MissingCache(self.name))?;
        let (_, c, l) = dims3(x)?;
        let (_, k) = self.dims();
        gy.expect_shape(x.shape())?;
        let w = self.weight.value.data();
        let mut gx = Tensor::zeros(x.shape());
        let parts: Vec<Vec<T>> = gx
            .data_mut()
            .par_chunks_mut(c * l)
            .zip(x.data().par_chunks(c * l))
            .zip(gy.data().par_chunks(c * l))
            .map(|((gxi, xi), gyi)| {
                let mut gw = vec![T::zero(); c * k];
                ops::depthwise_xcorr_backward(w, xi, gyi, c, k, l, gxi, &mut gw);
                gw
            })
            .collect();
        reduce_ordered(parts, self.weight.grad.data_mut());
        Ok(gx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight]
    }

    fn maccs_per_trial(&self) -> u64 {
        self.maccs
    }
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Clone, Debug)]
struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Batch normalization over `[batch, features, length]`, statistics per
/// feature across batch and time.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    name: &'static str,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: T,
    pub momentum: T,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &'static str, features: usize) -> Self {
        Self {
            name,
            gamma: Param::new(Tensor::filled(&[features], T::one())),
            beta: Param::new(Tensor::zeros(&[features])),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], T::one()),
            eps: T::of(BN_EPSILON),
            momentum: T::of(BN_MOMENTUM),
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.value.len()
    }

    /// Per-feature affine form `a·x + b` of inference mode.
    pub fn affine(&self) -> (Vec<T>, Vec<T>) {
        let f = self.features();
        let mut a = Vec::with_capacity(f);
        let mut b = Vec::with_capacity(f);
        for i in 0..f {
            let s = self.gamma.value.data()[i] / (self.running_var.data()[i] + self.eps).sqrt();
            a.push(s);
            b.push(self.beta.value.data()[i] - s * self.running_mean.data()[i]);
        }
        (a, b)
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (b, f, l) = dims3(x)?;
        if f != self.features() {
            return Err(Error::shape(&[b, self.features(), l], x.shape()));
        }
        let n = b * l;
        let (mean, var) = match mode {
            Mode::Infer => (self.running_mean.data().to_vec(), self.running_var.data().to_vec()),
            Mode::Train => {
                let mut mean = vec![T::zero(); f];
                let mut var = vec![T::zero(); f];
                for (c, (m, v)) in mean.iter_mut().zip(var.iter_mut()).enumerate() {
                    let mut s = T::zero();
                    for bi in 0..b {
                        s = s + x.data()[(bi * f + c) * l..(bi * f + c + 1) * l].iter().copied().sum();
                    }
                    *m = s / T::of(n as f64);
                    let mut sq = T::zero();
                    for bi in 0..b {
                        for &xv in &x.data()[(bi * f + c) * l..(bi * f + c + 1) * l] {
                            sq = sq + (xv - *m) * (xv - *m);
                        }
                    }
                    *v = sq / T::of(n as f64);
                }
                let unbias = if n > 1 {
                    T::of(n as f64 / (n as f64 - 1.0))
                } else {
                    T::one()
                };
                let mo = self.momentum;
                for c in 0..f {
                    let rm = &mut self.running_mean.data_mut()[c];
                    *rm = (T::one() - mo) * *rm + mo * mean[c];
                    let rv = &mut self.running_var.data_mut()[c];
                    *rv = (T::one() - mo) * *rv + mo * var[c] * unbias;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        for bi in 0..b {
            for c in 0..f {
                let r = (bi * f + c) * l..(bi * f + c + 1) * l;
                let (g, be) = (self.gamma.value.data()[c], self.beta.value.data()[c]);
                for i in r {
                    let h = (x.data()[i] - mean[c]) * inv_std[c];
                    xhat.data_mut()[i] = h;
                    y.data_mut()[i] = g * h + be;
                }
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, mode });
        Ok(y)
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(Error::MissingCache(self.name))?;
        let (b, f, l) = dims3(&cache.xhat)?;
        gy.expect_shape(cache.xhat.shape())?;
        let n = T::of((b * l) as f64);
        let mut gx = Tensor::zeros(gy.shape());
        for c in 0..f {
            let mut sum_g = T::zero();
            let mut sum_gh = T::zero();
            for bi in 0..b {
                let r = (bi * f + c) * l..(bi * f + c + 1) * l;
                for i in r {
                    sum_g = sum_g + gy.data()[i];
                    sum_gh = sum_gh + gy.data()[i] * cache.xhat.data()[i];
                }
            }
            self.gamma.grad.data_mut()[c] = sum_gh;
            self.beta.grad.data_mut()[c] = sum_g;
            let scale = self.gamma.value.data()[c] * cache.inv_std[c];
            for bi in 0..b {
                let r = (bi * f + c) * l..(bi * f + c + 1) * l;
                for i in r {
                    gx.data_mut()[i] = match cache.mode {
                        Mode::Infer => scale * gy.data()[i],
                        Mode::Train => scale / n * (n * gy.data()[i] - sum_g - cache.xhat.data()[i] * sum_gh),
                    };
                }
            }
        }
        Ok(gx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu<T> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.cache = Some(x.clone());
        Ok(ops::relu(x))
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or(Error::MissingCache("relu"))?;
        gy.expect_shape(x.shape())?;
        let data = x
            .data()
            .iter()
            .zip(gy.data())
            .map(|(&xv, &g)| if xv > T::zero() { g } else { T::zero() })
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }
}

/// Average pooling over the last axis with window = stride = `k`.
#[derive(Clone, Debug)]
pub struct AvgPool {
    pub k: usize,
    in_shape: Option<Vec<usize>>,
}

impl AvgPool {
    pub fn new(k: usize) -> Self {
        Self { k, in_shape: None }
    }
}

impl<T: Scalar> Layer<T> for AvgPool {
    fn name(&self) -> &'static str {
        "avg_pool"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = ops::avg_pool(x, self.k)?;
        self.in_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.in_shape.as_ref().ok_or(Error::MissingCache("avg_pool"))?;
        let len = *shape.last().unwrap();
        let rows = shape.iter().product::<usize>() / len;
        if gy.len() != rows * (len / self.k) {
            return Err(Error::shape(&[rows, len / self.k], gy.shape()));
        }
        let mut gx = Tensor::zeros(shape);
        ops::avg_pool_rows_backward(gy.data(), rows, len, self.k, gx.data_mut());
        Ok(gx)
    }
}

/// Fully connected layer on `[batch, n_in]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let s = self.weight.value.shape();
        (s[0], s[1])
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn name(&self) -> &'static str {
        "fc"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n_out, n_in) = self.dims();
        let b = match *x.shape() {
            [b, n] if n == n_in => b,
            _ => return Err(Error::shape(&[x.shape()[0], n_in], x.shape())),
        };
        let mut y = Tensor::zeros(&[b, n_out]);
        for bi in 0..b {
            ops::dense(
                self.weight.value.data(),
                self.bias.value.data(),
                x.item(bi),
                n_in,
                &mut y.data_mut()[bi * n_out..(bi + 1) * n_out],
            );
        }
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or(Error::MissingCache("fc"))?;
        let (n_out, n_in) = self.dims();
        let b = x.shape()[0];
        gy.expect_shape(&[b, n_out])?;
        let mut gx = Tensor::zeros(x.shape());
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        gw.fill(T::zero());
        gb.fill(T::zero());
        let w = self.weight.value.data();
        for bi in 0..b {
            let xi = x.item(bi);
            let gyi = gy.item(bi);
            for o in 0..n_out {
                let g = gyi[o];
                gb[o] = gb[o] + g;
                for i in 0..n_in {
                    gw[o * n_in + i] = gw[o * n_in + i] + g * xi[i];
                    gx.data_mut()[bi * n_in + i] = gx.data()[bi * n_in + i] + g * w[o * n_in + i];
                }
            }
        }
        Ok(gx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn maccs_per_trial(&self) -> u64 {
        let (o, i) = self.dims();
        (o * i) as u64
    }
}

/// Quantize-dequantize node for activations. Inactive nodes are the
/// identity. The backward pass is the straight-through estimator: the
/// upstream gradient passes unchanged.
#[derive(Clone, Debug, Default)]
pub struct FakeQuant {
    pub scale_exp: Option<i32>,
}

impl<T: Scalar> Layer<T> for FakeQuant {
    fn name(&self) -> &'static str {
        "fake_quant"
    }

    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        Ok(match self.scale_exp {
            None => x.clone(),
            Some(n) => x.map(|v| T::of(fake_quant(v.to_f64_lossless(), n))),
        })
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(gy.clone())
    }
}

/// Inference-form batch norm on one `[features, length]` map or a batch.
pub fn batchnorm_forward<T: Scalar>(x: &Tensor<T>, bn: &mut BatchNorm<T>, mode: Mode) -> Result<Tensor<T>> {
    match *x.shape() {
        [f, l] => {
            let y = bn.forward(&x.clone().reshape(&[1, f, l])?, mode)?;
            y.reshape(&[f, l])
        }
        _ => bn.forward(x, mode),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bn_identity_when_standard() {
        let mut bn = BatchNorm::<f64>::new("bn", 2);
        bn.eps = 0.0;
        let x = Tensor::new(vec![2, 3], vec![1., -2., 3., 0.5, 0., 7.]).unwrap();
        let y = batchnorm_forward(&x, &mut bn, Mode::Infer).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn bn_hand_example() {
        let mut bn = BatchNorm::<f64>::new("bn", 1);
        bn.eps = 0.0;
        bn.gamma.value.data_mut()[0] = 2.0;
        bn.beta.value.data_mut()[0] = 1.0;
        bn.running_mean.data_mut()[0] = 3.0;
        bn.running_var.data_mut()[0] = 4.0;
        let y = batchnorm_forward(&Tensor::new(vec![1, 1], vec![5.0]).unwrap(), &mut bn, Mode::Infer).unwrap();
        assert_eq!(y.data(), &[3.0]);
    }

    #[test]
    fn bn_train_constant_input_centres_on_beta() {
        let mut bn = BatchNorm::<f64>::new("bn", 1);
        bn.gamma.value.data_mut()[0] = 3.0;
        bn.beta.value.data_mut()[0] = 0.25;
        let x = Tensor::filled(&[4, 1, 5], 7.0);
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
        // running mean moved towards 7 by the momentum
        assert!((bn.running_mean.data()[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn relu_backward_gates() {
        let mut r = Relu::<f64>::new();
        let x = Tensor::new(vec![1, 1, 2], vec![2.0, -1.0]).unwrap();
        r.forward(&x, Mode::Train).unwrap();
        let g = r
            .backward(&Tensor::new(vec![1, 1, 2], vec![5.0, 5.0]).unwrap())
            .unwrap();
        assert_eq!(g.data(), &[5.0, 0.0]);
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut c = ChannelMix::<f64>::new("spatial", Tensor::zeros(&[2, 2]));
        let g = Tensor::zeros(&[1, 2, 4]);
        assert!(matches!(c.backward(&g), Err(Error::MissingCache("spatial"))));
        let mut bn = BatchNorm::<f64>::new("bn1", 2);
        assert!(matches!(bn.backward(&g), Err(Error::MissingCache("bn1"))));
        let mut p = AvgPool::new(8);
        assert!(Layer::<f64>::backward(&mut p, &g).is_err());
    }

    #[test]
    fn fake_quant_gradient_is_straight_through() {
        let mut q = FakeQuant { scale_exp: Some(2) };
        let x = Tensor::new(vec![3], vec![0.3f64, -0.6, 100.0]).unwrap();
        let y = q.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.data(), &[0.25, -0.5, 127.0 / 4.0]);
        let g = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(Layer::<f64>::backward(&mut q, &g).unwrap(), g);
    }
}
