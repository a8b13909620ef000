use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::hyper::{rpr_schedule, TrainHyper};
use super::metrics::Metrics;
use crate::error::{Error, Result};
use crate::io::{Checkpoint, CheckpointMeta, TrialDataset};
use crate::model::Network;
use crate::nn::{softmax_cross_entropy, Mode};
use crate::numerics::{choose_scale_exp, pow2, round_half_away, Tensor, WEIGHT_MAX};
use crate::quant::calibrate;

/// Trials per inference pass in evaluation.
const EVAL_BATCH: usize = 64;

/// Training statistics of one epoch, measured on the training batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
    pub kappa: f64,
    pub frozen_fraction: f64,
    /// Mean loss of each batch, in order.
    pub batch_losses: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curves: Vec<EpochStats>,
}

/// Line-oriented training curves: `epoch loss acc kappa` per line.
pub fn curves_text(curves: &[EpochStats]) -> String {
    let mut s = String::from("# epoch loss acc kappa lr frozen_fraction\n");
    for e in curves {
        let _ = writeln!(
            s,
            "{} {:.6} {:.4} {:.4} {} {:.3}",
            e.epoch, e.loss, e.accuracy, e.kappa, e.lr, e.frozen_fraction
        );
    }
    s
}

fn check_dataset(net: &Network<f32>, data: &TrialDataset) -> Result<()> {
    let c = net.config();
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if (data.n_ch(), data.n_samples()) != (c.n_ch, c.n_s) {
        return Err(Error::shape(&[c.n_ch, c.n_s], &[data.n_ch(), data.n_samples()]));
    }
    if data.n_classes() != c.n_cl {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} classes but the model has {}",
            data.n_classes(),
            c.n_cl
        )));
    }
    Ok(())
}

/// Snap `w` onto the per-tensor 8-bit grid of its current range.
fn quantize_in_place(values: &mut [f32], mask: &[bool]) {
    let max = values.iter().fold(0.0f64, |m, v| m.max((*v as f64).abs()));
    let e = choose_scale_exp(max);
    let (s, inv) = (pow2(e), pow2(-e));
    let lim = WEIGHT_MAX as f64;
    for (v, &m) in values.iter_mut().zip(mask) {
        if m {
            *v = (round_half_away(*v as f64 * s).clamp(-lim, lim) * inv) as f32;
        }
    }
}

/// Choose this increment's frozen partition of every quantized tensor and
/// snap the frozen weights onto the grid.
fn relax_partition(
    net: &mut Network<f32>,
    frozen: &mut [Vec<bool>],
    fraction: f64,
    monotone: bool,
    rng: &mut ChaCha8Rng,
) {
    let mut params = net.params_mut();
    for &i in &Network::<f32>::QUANTIZED_PARAMS {
        let n = params[i].value.len();
        let k = ((fraction * n as f64).round() as usize).min(n);
        let mask = &mut frozen[i];
        if monotone {
            let mut free: Vec<usize> = (0..n).filter(|&j| !mask[j]).collect();
            free.shuffle(rng);
            let have = n - free.len();
            for &j in free.iter().take(k.saturating_sub(have)) {
                mask[j] = true;
            }
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            mask.iter_mut().for_each(|m| *m = false);
            for &j in &order[..k] {
                mask[j] = true;
            }
        }
        quantize_in_place(params[i].value.data_mut(), mask);
    }
}

/// Train `net` on `data`. Deterministic given the network's initial weights
/// and `hyper`.
///
/// With a QAT schedule, activation fake-quantization starts at `t_a` (scales
/// re-calibrated on the training set at the start of every QAT epoch) and
/// random partition relaxation starts at `t_w`. After the last epoch every
/// quantized weight is snapped to its grid and the scales are calibrated
/// once more, so export reproduces the trained weights exactly.
pub fn train(net: Network<f32>, data: &TrialDataset, hyper: &TrainHyper) -> Result<TrainOutcome> {
    hyper.validate()?;
    check_dataset(&net, data)?;
    match hyper.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start {n} workers: {e}")))?
            .install(|| train_inner(net, data, hyper)),
        None => train_inner(net, data, hyper),
    }
}

fn train_inner(mut net: Network<f32>, data: &TrialDataset, hyper: &TrainHyper) -> Result<TrainOutcome> {
    let n_cl = net.config().n_cl;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut state = AdamState::new(&net.params_mut());
    let mut frozen: Vec<Vec<bool>> = net.params().iter().map(|p| vec![false; p.value.len()]).collect();
    let mut order: Vec<usize> = (0..data.n_trials()).collect();
    let mut curves = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        let lr = hyper.lr_at(epoch);
        let mut fraction = 0.0;
        if let Some(q) = &hyper.qat {
            if epoch >= q.t_a {
                calibrate(&mut net, data)?;
            }
            fraction = rpr_schedule(epoch, q);
            if q.is_rpr_epoch(epoch) {
                relax_partition(&mut net, &mut frozen, fraction, hyper.rpr_monotone, &mut rng);
            }
        }
        order.shuffle(&mut rng);
        let (mut loss_sum, mut labels, mut preds, mut batch_losses) = (0.0, Vec::new(), Vec::new(), Vec::new());
        for batch in order.chunks(hyper.batch_size) {
            let x = data.batch(batch);
            let logits = net.forward(&x, Mode::Train)?;
            let b = batch.len();
            let mut grad = Vec::with_capacity(b * n_cl);
            let mut batch_loss = 0.0;
            for (r, &i) in batch.iter().enumerate() {
                let row = &logits.data()[r * n_cl..(r + 1) * n_cl];
                let (l, g) = softmax_cross_entropy(row, data.label(i))?;
                batch_loss += l as f64;
                grad.extend(g.into_iter().map(|v| v / b as f32));
                labels.push(data.label(i));
                preds.push(argmax(row));
            }
            loss_sum += batch_loss;
            batch_losses.push(batch_loss / b as f64);
            net.backward(&Tensor::new(vec![b, n_cl], grad)?)?;
            let cfg = AdamConfig {
                lr,
                beta1: hyper.beta1,
                beta2: hyper.beta2,
                eps: hyper.eps,
            };
            adam_step(&mut net.params_mut(), &mut state, cfg, Some(&frozen))?;
        }
        let m = Metrics::from_predictions(&labels, &preds, n_cl)?;
        curves.push(EpochStats {
            epoch,
            lr,
            loss: loss_sum / data.n_trials() as f64,
            accuracy: m.accuracy,
            kappa: m.kappa,
            frozen_fraction: fraction,
            batch_losses,
        });
    }
    if hyper.qat.is_some() && hyper.epochs > 0 {
        relax_partition(&mut net, &mut frozen, 1.0, true, &mut rng);
        calibrate(&mut net, data)?;
    }
    let meta = CheckpointMeta {
        seed: hyper.seed,
        epoch: hyper.epochs as u32,
        hyper_digest: hyper.digest(),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(net, meta),
        curves,
    })
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Float logits per trial (inference mode, current activation scales).
pub fn predict_logits(net: &mut Network<f32>, data: &TrialDataset) -> Result<Vec<Vec<f32>>> {
    let c = *net.config();
    if (data.n_ch(), data.n_samples()) != (c.n_ch, c.n_s) {
        return Err(Error::shape(&[c.n_ch, c.n_s], &[data.n_ch(), data.n_samples()]));
    }
    let all: Vec<usize> = (0..data.n_trials()).collect();
    let mut out = Vec::with_capacity(all.len());
    for chunk in all.chunks(EVAL_BATCH) {
        let y = net.forward(&data.batch(chunk), Mode::Infer)?;
        out.extend(y.data().chunks(c.n_cl).map(|r| r.to_vec()));
    }
    Ok(out)
}

pub fn evaluate(net: &mut Network<f32>, data: &TrialDataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let preds: Vec<usize> = predict_logits(net, data)?.iter().map(|r| argmax(r)).collect();
    let labels: Vec<usize> = (0..data.n_trials()).map(|i| data.label(i)).collect();
    Metrics::from_predictions(&labels, &preds, net.config().n_cl.max(data.n_classes()))
}
