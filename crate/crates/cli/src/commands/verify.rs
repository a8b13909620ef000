use mibmi::engine::{argmax_i32, Engine};
use mibmi::numerics::quantize;
use mibmi::train::{argmax, predict_logits, Metrics};
use serde::Serialize;
use serde_json::json;

use super::infer::run_engine;
use super::{check_geometry, json_bytes, load_checkpoint, load_dataset, load_qnet, print_json};
use crate::error::{CliError, CliResult};
use crate::manifest::{check_output_path, digest_json, Outputs, RunManifest};
use crate::VerifyArgs;

#[derive(Serialize)]
struct TrialDelta {
    trial: usize,
    label: usize,
    float_prediction: usize,
    int8_prediction: usize,
    /// `int8 − float` per class, int8 logits dequantized.
    logit_deltas: Vec<f64>,
    max_abs_delta: f64,
    saturated: u64,
}

pub fn run(args: VerifyArgs) -> CliResult<()> {
    if let Some(p) = &args.out {
        check_output_path(p)?;
    }
    let qnet = load_qnet(&args.qnet)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let data = load_dataset(&args.data)?;
    let config = qnet.value.config;
    if *ckpt.value.config() != config {
        return Err(CliError::validation(format!(
            "checkpoint {} has config {:?} but the quantized network has {:?}",
            args.checkpoint.display(),
            ckpt.value.config(),
            config
        )));
    }
    check_geometry(&config, &data.value, &args.data)?;
    let d = &data.value;

    // Weights that clamp at the exported scales.
    let net = &ckpt.value.network;
    let weight_saturation: Vec<(&str, usize)> = [
        ("spatial", &net.spatial.weight.value, qnet.value.spatial_w.scale_exp()),
        (
            "temporal",
            &net.temporal.weight.value,
            qnet.value.temporal_w.scale_exp(),
        ),
        (
            "depthwise",
            &net.depthwise.weight.value,
            qnet.value.depthwise_w.scale_exp(),
        ),
        (
            "pointwise",
            &net.pointwise.weight.value,
            qnet.value.pointwise_w.scale_exp(),
        ),
        ("fc", &net.fc.weight.value, qnet.value.fc_w.scale_exp()),
    ]
    .into_iter()
    .map(|(name, w, e)| (name, quantize(w, e).saturated))
    .collect();

    let mut float_net = net.clone();
    let float_logits = predict_logits(&mut float_net, d)?;
    let engine = Engine::load(qnet.value.clone())?;
    let r = run_engine(&engine, d)?;

    let trials: Vec<TrialDelta> = (0..d.n_trials())
        .map(|i| {
            let q = qnet.value.dequantize_logits(&r.logits[i]);
            let deltas: Vec<f64> = q.iter().zip(&float_logits[i]).map(|(a, &b)| a - b as f64).collect();
            TrialDelta {
                trial: i,
                label: d.label(i),
                float_prediction: argmax(&float_logits[i]),
                int8_prediction: argmax_i32(&r.logits[i]),
                max_abs_delta: deltas.iter().fold(0.0, |m, v| m.max(v.abs())),
                logit_deltas: deltas,
                saturated: r.saturated_per_trial[i],
            }
        })
        .collect();
    let n = trials.len() as f64;
    let agreement = trials
        .iter()
        .filter(|t| t.float_prediction == t.int8_prediction)
        .count() as f64
        / n;
    let max_delta = trials.iter().fold(0.0f64, |m, t| m.max(t.max_abs_delta));
    let mean_delta = trials.iter().map(|t| t.max_abs_delta).sum::<f64>() / n;
    let labels: Vec<usize> = trials.iter().map(|t| t.label).collect();
    let fp: Vec<usize> = trials.iter().map(|t| t.float_prediction).collect();
    let qp: Vec<usize> = trials.iter().map(|t| t.int8_prediction).collect();
    let float_metrics = Metrics::from_predictions(&labels, &fp, config.n_cl)?;
    let int8_metrics = Metrics::from_predictions(&labels, &qp, config.n_cl)?;

    let report = json!({
        "n_trials": trials.len(),
        "agreement": agreement,
        "max_abs_logit_delta": max_delta,
        "mean_max_abs_logit_delta": mean_delta,
        "float_metrics": float_metrics,
        "int8_metrics": int8_metrics,
        "activation_saturation": r.saturation,
        "weight_saturation": weight_saturation,
        "trials": trials,
    });
    if args.json {
        print_json(&report);
    } else {
        println!(
            "{:>6} {:>5} {:>5} {:>5} {:>12} {:>6}",
            "trial", "label", "float", "int8", "max|delta|", "sat"
        );
        for t in &trials {
            println!(
                "{:>6} {:>5} {:>5} {:>5} {:>12.6} {:>6}",
                t.trial, t.label, t.float_prediction, t.int8_prediction, t.max_abs_delta, t.saturated
            );
        }
        println!(
            "agreement {:.4}; float accuracy {:.4}, int8 accuracy {:.4}; max |delta| {:.6}, mean {:.6}",
            agreement, float_metrics.accuracy, int8_metrics.accuracy, max_delta, mean_delta
        );
        let layers: Vec<String> = r.saturation.layers.iter().map(|(l, c)| format!("{l}={c}")).collect();
        println!(
            "activation saturation: input={} {}",
            r.saturation.input,
            layers.join(" ")
        );
        let weights: Vec<String> = weight_saturation.iter().map(|(l, c)| format!("{l}={c}")).collect();
        println!("weight saturation: {}", weights.join(" "));
    }
    if let Some(path) = &args.out {
        let mut manifest = RunManifest::new("verify", digest_json(&json!({ "config": config })));
        manifest.inputs.push(qnet.record);
        manifest.inputs.push(ckpt.record);
        manifest.inputs.push(data.record);
        let mut out = Outputs::default();
        out.add(path, json_bytes(&report));
        out.commit(manifest)?;
    }
    Ok(())
}
