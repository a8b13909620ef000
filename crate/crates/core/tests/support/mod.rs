//! Shared test helpers: a naive integer oracle for the int8 engine, random
//! toy QuantNetworks and a central-difference gradient checker.
#![allow(dead_code)]

use mibmi::model::SEP_KERNEL;
use mibmi::nn::{Layer, Mode};
use mibmi::quant::{QuantNetwork, Requant};
use mibmi::{ModelConfig, QuantTensor, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Integer oracle
// ---------------------------------------------------------------------------

/// `round(v / 2^shift)` with ties away from zero, via quotient and remainder.
fn div_pow2_round(v: i128, shift: u32) -> i128 {
    let d = 1i128 << shift;
    let (q, r) = (v.abs() / d, v.abs() % d);
    let q = if 2 * r >= d { q + 1 } else { q };
    if v < 0 {
        -q
    } else {
        q
    }
}

fn oracle_requant(acc: i128, rq: &Requant, relu: bool) -> i128 {
    let v = div_pow2_round((acc + rq.bias as i128) * rq.mult as i128, rq.shift);
    v.clamp(if relu { 0 } else { -128 }, 127)
}

/// Sum windows of `pool` consecutive positions, dropping the tail.
fn pool_sum(row: &[i128], pool: usize) -> Vec<i128> {
    (0..row.len() / pool)
        .map(|j| row[j * pool..(j + 1) * pool].iter().sum())
        .collect()
}

/// Float-order kernel from the engine's stored (reversed) row.
fn unreversed(stored: &[i8]) -> Vec<i128> {
    stored.iter().rev().map(|&v| v as i128).collect()
}

/// Same-padded cross-correlation `y[t] = Σ_j w[j]·x[t + j − pad]`,
/// `pad = (K−1)/2`, zeros outside the row.
fn xcorr_same(x: &[i128], w: &[i128]) -> Vec<i128> {
    let k = w.len() as i64;
    let pad = (k - 1) / 2;
    (0..x.len() as i64)
        .map(|t| {
            (0..k)
                .map(|j| {
                    let idx = t + j - pad;
                    if idx < 0 || idx >= x.len() as i64 {
                        0
                    } else {
                        w[j as usize] * x[idx as usize]
                    }
                })
                .sum()
        })
        .collect()
}

/// Straightforward integer forward pass over `Vec<Vec<i128>>` feature maps,
/// written independently of the engine (no arena, no kernel reversal, wide
/// accumulators).
pub fn oracle_logits(q: &QuantNetwork, x: &QuantTensor) -> Vec<i32> {
    let c = q.config;
    let input: Vec<Vec<i128>> = (0..c.n_ch)
        .map(|i| x.row(i).iter().map(|&v| v as i128).collect())
        .collect();

    let mix = |w: &QuantTensor, x: &[Vec<i128>], n_out: usize| -> Vec<Vec<i128>> {
        let n_in = x.len();
        (0..n_out)
            .map(|o| {
                (0..x[0].len())
                    .map(|t| (0..n_in).map(|i| w.data()[o * n_in + i] as i128 * x[i][t]).sum())
                    .collect()
            })
            .collect()
    };

    // Block 1: spatial mix, BN folded.
    let s = mix(&q.spatial_w, &input, c.n_k);
    let s: Vec<Vec<i128>> = s
        .iter()
        .zip(&q.spatial_rq)
        .map(|(row, rq)| row.iter().map(|&a| oracle_requant(a, rq, false)).collect())
        .collect();

    // Block 2: temporal depthwise, window sums of 8, BN and /8 folded, ReLU.
    let t: Vec<Vec<i128>> = (0..c.n_k)
        .map(|k| {
            let conv = xcorr_same(&s[k], &unreversed(q.temporal_w.row(k)));
            pool_sum(&conv, 8)
                .iter()
                .map(|&a| oracle_requant(a, &q.temporal_rq[k], true))
                .collect()
        })
        .collect();

    // Block 3: depthwise 16 taps, then pointwise mix, window sums, ReLU.
    let d: Vec<Vec<i128>> = (0..c.n_k)
        .map(|k| {
            let conv = xcorr_same(&t[k], &unreversed(q.depthwise_w.row(k)));
            conv.iter()
                .map(|&a| oracle_requant(a, &q.depthwise_rq[k], false))
                .collect()
        })
        .collect();
    let p = mix(&q.pointwise_w, &d, c.n_k);
    let p: Vec<Vec<i128>> = p
        .iter()
        .zip(&q.pointwise_rq)
        .map(|(row, rq)| pool_sum(row, 8).iter().map(|&a| oracle_requant(a, rq, true)).collect())
        .collect();

    // Block 4: flatten feature-major and classify.
    let flat: Vec<i128> = p.into_iter().flatten().collect();
    (0..c.n_cl)
        .map(|cl| {
            let acc: i128 = flat
                .iter()
                .enumerate()
                .map(|(i, &v)| q.fc_w.data()[cl * flat.len() + i] as i128 * v)
                .sum();
            i32::try_from(acc + q.fc_bias[cl] as i128).expect("logit fits in i32")
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random toy networks
// ---------------------------------------------------------------------------

fn weights(r: &mut ChaCha8Rng, shape: &[usize]) -> QuantTensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| r.random_range(-127i8..=127)).collect();
    QuantTensor::new(shape.to_vec(), data, r.random_range(0..8)).unwrap()
}

/// Requantization constants that land typical accumulators of magnitude
/// `typical` roughly inside the int8 range, with some saturating.
fn requants(r: &mut ChaCha8Rng, n: usize, typical: f64) -> Vec<Requant> {
    (0..n)
        .map(|_| {
            let mut mult: i32 = r.random_range(1..=1 << 14);
            if r.random_bool(0.3) {
                mult = -mult;
            }
            let target = r.random_range(20.0..300.0);
            let shift = ((typical * mult.unsigned_abs() as f64 / target).log2().round() as i64).clamp(0, 31) as u32;
            Requant {
                mult,
                shift,
                bias: r.random_range(-(typical as i32)..=typical as i32),
            }
        })
        .collect()
}

pub fn random_config(r: &mut ChaCha8Rng) -> ModelConfig {
    ModelConfig::new(
        r.random_range(1..=6),
        r.random_range(64..=160),
        r.random_range(1..=4),
        r.random_range(1..=9),
        r.random_range(2..=4),
    )
    .unwrap()
}

/// A random, valid QuantNetwork for `config`.
pub fn random_qnet(r: &mut ChaCha8Rng, config: ModelConfig) -> QuantNetwork {
    let c = config;
    let act = |r: &mut ChaCha8Rng| r.random_range(-2..8);
    let act_exps = [act(r), act(r), act(r), act(r), act(r)];
    let spatial_rq = requants(r, c.n_k, 60.0 * 60.0 * (c.n_ch as f64).sqrt());
    let temporal_rq = requants(r, c.n_k, 8.0 * 60.0 * 60.0 * (c.n_f as f64).sqrt());
    let depthwise_rq = requants(r, c.n_k, 60.0 * 40.0 * 4.0);
    let pointwise_rq = requants(r, c.n_k, 8.0 * 60.0 * 40.0 * (c.n_k as f64).sqrt());
    let q = QuantNetwork {
        config: c,
        act_exps,
        spatial_w: weights(r, &[c.n_k, c.n_ch]),
        temporal_w: weights(r, &[c.n_k, c.n_f]),
        depthwise_w: weights(r, &[c.n_k, SEP_KERNEL]),
        pointwise_w: weights(r, &[c.n_k, c.n_k]),
        fc_w: weights(r, &[c.n_cl, c.fc_inputs()]),
        spatial_rq,
        temporal_rq,
        depthwise_rq,
        pointwise_rq,
        fc_bias: (0..c.n_cl).map(|_| r.random_range(-100_000..=100_000)).collect(),
    };
    q.validate().unwrap();
    q
}

pub fn random_input(r: &mut ChaCha8Rng, q: &QuantNetwork) -> QuantTensor {
    let c = q.config;
    let data = (0..c.n_ch * c.n_s)
        .map(|_| r.random_range(-128i16..=127) as i8)
        .collect();
    QuantTensor::new(vec![c.n_ch, c.n_s], data, q.input_exp()).unwrap()
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-6;

pub fn random_tensor(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

/// Values bounded away from zero, so ReLU kinks stay out of reach of the
/// finite-difference step.
pub fn away_from_zero(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = r.random_range(0.05..1.0);
        if r.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Gradient norm below which the relative error is measured against this
/// floor instead. Parameters the loss is invariant to (a lone weight feeding
/// batch norm, say) have true gradients near 1e-16, where central
/// differences only see round-off of order `ε·|L| / h ≈ 1e-11`.
pub const GRAD_FLOOR: f64 = 1e-4;

/// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖, GRAD_FLOOR)`.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    diff / scale.max(GRAD_FLOOR)
}

/// Anything with a forward pass, a backward pass and perturbable parameters.
pub trait Differentiable {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64>;
    fn backward(&mut self, gy: &Tensor<f64>) -> Tensor<f64>;
    fn param_count(&mut self) -> usize;
    fn param_data(&mut self, i: usize) -> &mut [f64];
    fn param_grad(&mut self, i: usize) -> Vec<f64>;
}

/// Adapts a [`Layer`] in a fixed mode.
pub struct LayerUnderTest<L> {
    pub layer: L,
    pub mode: Mode,
}

impl<L: Layer<f64>> Differentiable for LayerUnderTest<L> {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.layer.forward(x, self.mode).unwrap()
    }
    fn backward(&mut self, gy: &Tensor<f64>) -> Tensor<f64> {
        self.layer.backward(gy).unwrap()
    }
    fn param_count(&mut self) -> usize {
        self.layer.params_mut().len()
    }
    fn param_data(&mut self, i: usize) -> &mut [f64] {
        self.layer.params_mut().into_iter().nth(i).unwrap().value.data_mut()
    }
    fn param_grad(&mut self, i: usize) -> Vec<f64> {
        self.layer.params()[i].grad.data().to_vec()
    }
}

impl Differentiable for mibmi::Network<f64> {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        mibmi::Network::forward(self, x, Mode::Train).unwrap()
    }
    fn backward(&mut self, gy: &Tensor<f64>) -> Tensor<f64> {
        mibmi::Network::backward(self, gy).unwrap()
    }
    fn param_count(&mut self) -> usize {
        self.params_mut().len()
    }
    fn param_data(&mut self, i: usize) -> &mut [f64] {
        self.params_mut().into_iter().nth(i).unwrap().value.data_mut()
    }
    fn param_grad(&mut self, i: usize) -> Vec<f64> {
        self.params()[i].grad.data().to_vec()
    }
}

/// Gradients of `L = Σ r ⊙ f(x)` for a fixed random projection `r`:
/// returns the worst relative error over the input gradient and every
/// parameter gradient.
pub fn check_gradients(f: &mut dyn Differentiable, x: &Tensor<f64>, r: &mut ChaCha8Rng) -> f64 {
    let y = f.forward(x);
    let proj = random_tensor(r, y.shape());
    let loss = |f: &mut dyn Differentiable, x: &Tensor<f64>| -> f64 {
        f.forward(x).data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
    };
    f.forward(x);
    let gx = f.backward(&proj);
    let param_grads: Vec<Vec<f64>> = (0..f.param_count()).map(|i| f.param_grad(i)).collect();

    let mut worst = 0.0f64;
    let mut numeric = vec![0.0; x.len()];
    let mut xp = x.clone();
    for (j, n) in numeric.iter_mut().enumerate() {
        let v = x.data()[j];
        xp.data_mut()[j] = v + FD_STEP;
        let lp = loss(f, &xp);
        xp.data_mut()[j] = v - FD_STEP;
        let lm = loss(f, &xp);
        xp.data_mut()[j] = v;
        *n = (lp - lm) / (2.0 * FD_STEP);
    }
    worst = worst.max(rel_error(gx.data(), &numeric));

    for (i, analytic) in param_grads.iter().enumerate() {
        let mut numeric = vec![0.0; analytic.len()];
        for (j, n) in numeric.iter_mut().enumerate() {
            let v = f.param_data(i)[j];
            f.param_data(i)[j] = v + FD_STEP;
            let lp = loss(f, x);
            f.param_data(i)[j] = v - FD_STEP;
            let lm = loss(f, x);
            f.param_data(i)[j] = v;
            *n = (lp - lm) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_error(analytic, &numeric));
    }
    worst
}

// ---------------------------------------------------------------------------
// Suites shared by the module tests and the acceptance target
// ---------------------------------------------------------------------------

/// Softmax cross-entropy as a differentiable map from logits to the loss.
struct CrossEntropy {
    labels: Vec<usize>,
    grad: Vec<f64>,
}

impl Differentiable for CrossEntropy {
    fn forward(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        let n_cl = x.shape()[1];
        let mut losses = Vec::new();
        self.grad.clear();
        for (b, &l) in self.labels.iter().enumerate() {
            let (loss, g) = mibmi::nn::softmax_cross_entropy(&x.data()[b * n_cl..(b + 1) * n_cl], l).unwrap();
            losses.push(loss);
            self.grad.extend(g);
        }
        Tensor::new(vec![losses.len()], losses).unwrap()
    }
    fn backward(&mut self, gy: &Tensor<f64>) -> Tensor<f64> {
        let n_cl = self.grad.len() / self.labels.len();
        let data = self
            .grad
            .iter()
            .enumerate()
            .map(|(i, g)| g * gy.data()[i / n_cl])
            .collect();
        Tensor::new(vec![self.labels.len(), n_cl], data).unwrap()
    }
    fn param_count(&mut self) -> usize {
        0
    }
    fn param_data(&mut self, _: usize) -> &mut [f64] {
        unreachable!()
    }
    fn param_grad(&mut self, _: usize) -> Vec<f64> {
        unreachable!()
    }
}

/// One gradient case per index, cycling over every differentiable op with
/// random small shapes. Returns `(case description, worst relative error)`.
pub fn gradient_case(i: usize) -> (String, f64) {
    use mibmi::nn::{AvgPool, BatchNorm, ChannelMix, DepthwiseTemporal, Linear, Relu};
    let r = &mut rng(1_000 + i as u64);
    let b = r.random_range(1..=3);
    let c = r.random_range(1..=4);
    let l = r.random_range(1..=20);
    let (name, err) = match i % 7 {
        0 => {
            let n_out = r.random_range(1..=4);
            let w = random_tensor(r, &[n_out, c]);
            let x = random_tensor(r, &[b, c, l]);
            let mut f = LayerUnderTest {
                layer: ChannelMix::new("mix", w),
                mode: Mode::Train,
            };
            (
                format!("channel_mix {n_out}x{c} on [{b},{c},{l}]"),
                check_gradients(&mut f, &x, r),
            )
        }
        1 => {
            let k = r.random_range(1..=17);
            let w = random_tensor(r, &[c, k]);
            let x = random_tensor(r, &[b, c, l]);
            let mut f = LayerUnderTest {
                layer: DepthwiseTemporal::new("dw", w),
                mode: Mode::Train,
            };
            (
                format!("depthwise k={k} on [{b},{c},{l}]"),
                check_gradients(&mut f, &x, r),
            )
        }
        2 => {
            // Batch statistics need at least two values per feature.
            let l = l.max(2);
            let mut bn = BatchNorm::new("bn", c);
            bn.gamma.value = random_tensor(r, &[c]);
            bn.beta.value = random_tensor(r, &[c]);
            let mode = if r.random_bool(0.5) { Mode::Train } else { Mode::Infer };
            if mode == Mode::Infer {
                bn.running_mean = random_tensor(r, &[c]);
                bn.running_var = Tensor::from_fn(&[c], |_| r.random_range(0.1..2.0));
            }
            let x = random_tensor(r, &[b, c, l]);
            let mut f = LayerUnderTest { layer: bn, mode };
            (
                format!("batch_norm {mode:?} on [{b},{c},{l}]"),
                check_gradients(&mut f, &x, r),
            )
        }
        3 => {
            let x = away_from_zero(r, &[b, c, l]);
            let mut f = LayerUnderTest {
                layer: Relu::new(),
                mode: Mode::Train,
            };
            (format!("relu on [{b},{c},{l}]"), check_gradients(&mut f, &x, r))
        }
        4 => {
            let k = r.random_range(1..=8);
            let l = l.max(k);
            let x = random_tensor(r, &[b, c, l]);
            let mut f = LayerUnderTest {
                layer: AvgPool::new(k),
                mode: Mode::Train,
            };
            (format!("avg_pool {k} on [{b},{c},{l}]"), check_gradients(&mut f, &x, r))
        }
        5 => {
            let n_out = r.random_range(1..=5);
            let w = random_tensor(r, &[n_out, l]);
            let bias = random_tensor(r, &[n_out]);
            let x = random_tensor(r, &[b, l]);
            let mut f = LayerUnderTest {
                layer: Linear::new(w, bias),
                mode: Mode::Train,
            };
            (
                format!("linear {n_out}x{l} on [{b},{l}]"),
                check_gradients(&mut f, &x, r),
            )
        }
        _ => {
            let n_cl = r.random_range(2..=5);
            let x = Tensor::from_fn(&[b, n_cl], |_| r.random_range(-3.0..3.0));
            let labels = (0..b).map(|_| r.random_range(0..n_cl)).collect();
            let mut f = CrossEntropy {
                labels,
                grad: Vec::new(),
            };
            (
                format!("softmax_cross_entropy [{b},{n_cl}]"),
                check_gradients(&mut f, &x, r),
            )
        }
    };
    (name, err)
}

/// Whole-network gradient check in f64 for a tiny random config, batch
/// statistics on, every quantization node inactive.
pub fn network_gradient_case(seed: u64) -> (String, f64) {
    let r = &mut rng(50_000 + seed);
    let config = ModelConfig::new(
        r.random_range(1..=3),
        r.random_range(64..=80),
        r.random_range(1..=3),
        r.random_range(1..=5),
        r.random_range(2..=3),
    )
    .unwrap();
    let mut net = mibmi::Network::<f64>::build(config, seed).unwrap();
    let x = random_tensor(r, &[2, config.n_ch, config.n_s]);
    (format!("network {config}"), check_gradients(&mut net, &x, r))
}

/// Engine-vs-oracle comparison over `n` random toy networks (one random
/// input each). Returns the indices of mismatching cases.
pub fn oracle_mismatches(n: usize) -> Vec<usize> {
    let engine_logits = |i: usize| {
        let r = &mut rng(7_000_000 + i as u64);
        let config = random_config(r);
        let q = random_qnet(r, config);
        let x = random_input(r, &q);
        let expected = oracle_logits(&q, &x);
        let engine = mibmi::engine::Engine::load(q).unwrap();
        (engine.run(&x).unwrap().0, expected)
    };
    (0..n)
        .filter(|&i| {
            let (got, want) = engine_logits(i);
            got != want
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic training tasks
// ---------------------------------------------------------------------------

use mibmi::engine::{argmax_i32, Engine};
use mibmi::io::{synth, SynthSpec, TrialDataset};
use mibmi::train::{QatSchedule, TrainHyper};

/// Network used on the 8-channel, 256-sample synthetic tasks.
pub fn task_config() -> ModelConfig {
    ModelConfig::new(8, 256, 8, 16, 2).unwrap()
}

/// Default synthetic task (8 ch, 2 classes, 200 trials per class), split
/// 75/25 stratified.
pub fn default_task(seed: u64) -> (TrialDataset, TrialDataset) {
    synth(&SynthSpec::default(), 200, seed)
        .unwrap()
        .split(0.25, seed)
        .unwrap()
}

/// Planted-channel task for ranking recovery: the default spec's two
/// informative channels {2, 5} at amplitude 1.2, 600 trials per class.
/// The weaker signal keeps the training loss away from zero long enough
/// for the noise-channel spatial weights to shrink.
pub fn planted_spec() -> SynthSpec {
    let mut spec = SynthSpec::default();
    for c in spec.classes.iter_mut() {
        c.amplitude = 1.2;
    }
    spec
}

pub fn planted_task(seed: u64) -> (TrialDataset, TrialDataset) {
    synth(&planted_spec(), 600, seed).unwrap().split(0.25, seed).unwrap()
}

pub fn float_hyper(seed: u64) -> TrainHyper {
    TrainHyper {
        epochs: 30,
        seed,
        ..Default::default()
    }
}

/// 20 float epochs, activation quantization from epoch 20, weight RPR from
/// epoch 25 in steps of 10 epochs (50% then 100% frozen), 45 epochs total.
pub fn qat_hyper(seed: u64) -> TrainHyper {
    TrainHyper {
        seed,
        ..Default::default()
    }
    .with_qat(QatSchedule::new(20, 25, 45).unwrap())
}

/// Int8 predictions of `engine` on every trial.
pub fn int8_predictions(engine: &Engine, data: &TrialDataset) -> Vec<usize> {
    (0..data.n_trials())
        .map(|i| argmax_i32(&engine.run_f32(data.trial(i)).unwrap().0))
        .collect()
}

pub fn accuracy(predictions: &[usize], data: &TrialDataset) -> f64 {
    let ok = predictions
        .iter()
        .enumerate()
        .filter(|(i, &p)| p == data.label(*i))
        .count();
    ok as f64 / data.n_trials() as f64
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
