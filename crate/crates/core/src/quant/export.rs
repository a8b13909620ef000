use serde::{Deserialize, Serialize};

use super::network::QuantNetwork;
use super::requant::{fold_affine, fold_bn, Requant};
use crate::error::{Error, Result};
use crate::io::TrialDataset;
use crate::model::{Network, QuantPoint, POOL};
use crate::nn::Mode;
use crate::numerics::{choose_scale_exp, pow2, quantize, round_half_away, Scalar, Tensor};

/// Fraction of `|activation|` values kept below the calibration threshold.
pub const CALIBRATION_PERCENTILE: f64 = 0.999;

/// Trials per calibration forward pass.
const CALIBRATION_BATCH: usize = 64;

/// Nearest-rank percentile of `|v|`; `q` in `(0, 1]`. Empty input gives 0.
pub fn abs_percentile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    for v in values.iter_mut() {
        *v = v.abs();
    }
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    let (_, nth, _) = values.select_nth_unstable_by(rank, f64::total_cmp);
    *nth
}

/// Choose activation scales point by point. Each point is calibrated with
/// all earlier points already quantized, so later statistics see the
/// rounding the deployed model will see. The network's own scales are
/// overwritten.
pub fn calibrate<T: Scalar>(net: &mut Network<T>, calib: &TrialDataset) -> Result<[i32; 5]> {
    if calib.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    let c = *net.config();
    if (calib.n_ch(), calib.n_samples()) != (c.n_ch, c.n_s) {
        return Err(Error::shape(&[c.n_ch, c.n_s], &[calib.n_ch(), calib.n_samples()]));
    }
    net.set_activation_scales([None; 5]);
    let mut exps = [0i32; 5];
    let all: Vec<usize> = (0..calib.n_trials()).collect();
    for point in QuantPoint::ALL {
        let mut values: Vec<f64> = Vec::new();
        for chunk in all.chunks(CALIBRATION_BATCH) {
            let x: Tensor<T> = calib.batch(chunk).cast();
            net.forward_observed(&x, Mode::Infer, |p, t| {
                if p == point {
                    values.extend(t.data().iter().map(|v| v.to_f64_lossless()));
                }
            })?;
        }
        let threshold = abs_percentile(&mut values, CALIBRATION_PERCENTILE);
        let e = choose_scale_exp(threshold);
        exps[point as usize] = e;
        net.quant_node_mut(point).scale_exp = Some(e);
    }
    Ok(exps)
}

/// Diagnostics from an export.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportReport {
    pub act_exps: [i32; 5],
    pub weight_exps: [i32; 5],
    /// Weights clamped to ±127, per tensor (spatial, temporal, depthwise,
    /// pointwise, fc).
    pub saturated_weights: [usize; 5],
}

fn f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossless()).collect()
}

/// Calibrate, quantize and fold `net` into an int8 network.
pub fn export<T: Scalar>(net: &Network<T>, calib: &TrialDataset) -> Result<QuantNetwork> {
    export_with_report(net, calib).map(|(q, _)| q)
}

pub fn export_with_report<T: Scalar>(net: &Network<T>, calib: &TrialDataset) -> Result<(QuantNetwork, ExportReport)> {
    let mut work = net.clone();
    let act = calibrate(&mut work, calib)?;
    let [e_in, e_sp, e_tm, e_dw, e_sep] = act;

    let quant_w = |t: &Tensor<T>| {
        let e = choose_scale_exp(t.max_abs().to_f64_lossless());
        quantize(t, e)
    };
    let sw = quant_w(&net.spatial.weight.value);
    let tw = quant_w(&net.temporal.weight.value);
    let dw = quant_w(&net.depthwise.weight.value);
    let pw = quant_w(&net.pointwise.weight.value);
    let fw = quant_w(&net.fc.weight.value);
    let saturated_weights = [sw.saturated, tw.saturated, dw.saturated, pw.saturated, fw.saturated];
    let (sw, tw, dw, pw, fw) = (sw.tensor, tw.tensor, dw.tensor, pw.tensor, fw.tensor);

    let affine = |i: usize| {
        let (a, b) = net.batch_norms()[i].affine();
        (f64s(&a), f64s(&b))
    };
    let pool = POOL as u32;
    let layer = |name: &str, r: Result<Vec<Requant>>| r.map_err(|e| Error::Quantization(format!("{name} layer: {e}")));
    let (a1, b1) = affine(0);
    let spatial_rq = layer("spatial", fold_bn(&a1, &b1, e_in + sw.scale_exp(), e_sp, 1))?;
    let (a2, b2) = affine(1);
    let temporal_rq = layer("temporal", fold_bn(&a2, &b2, e_sp + tw.scale_exp(), e_tm, pool))?;
    let depthwise_rq = layer(
        "depthwise",
        (0..net.config().n_k)
            .map(|_| fold_affine(1.0, 0.0, e_tm + dw.scale_exp(), e_dw, 1))
            .collect(),
    )?;
    let (a3, b3) = affine(2);
    let pointwise_rq = layer("pointwise", fold_bn(&a3, &b3, e_dw + pw.scale_exp(), e_sep, pool))?;

    let logit_exp = e_sep + fw.scale_exp();
    let fc_bias = net
        .fc
        .bias
        .value
        .data()
        .iter()
        .map(|b| {
            let v = round_half_away(b.to_f64_lossless() * pow2(logit_exp));
            if v.abs() > i32::MAX as f64 {
                Err(Error::Quantization(format!("classifier bias {v} overflows 32 bits")))
            } else {
                Ok(v as i32)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let report = ExportReport {
        act_exps: act,
        weight_exps: [
            sw.scale_exp(),
            tw.scale_exp(),
            dw.scale_exp(),
            pw.scale_exp(),
            fw.scale_exp(),
        ],
        saturated_weights,
    };
    let q = QuantNetwork {
        config: *net.config(),
        act_exps: act,
        spatial_w: sw,
        temporal_w: tw.reversed_rows(),
        depthwise_w: dw.reversed_rows(),
        pointwise_w: pw,
        fc_w: fw,
        spatial_rq,
        temporal_rq,
        depthwise_rq,
        pointwise_rq,
        fc_bias,
    };
    q.validate()?;
    Ok((q, report))
}
