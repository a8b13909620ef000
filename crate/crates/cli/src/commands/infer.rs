use mibmi::engine::{argmax_i32, Engine, ExecutionTrace};
use mibmi::io::TrialDataset;
use mibmi::train::Metrics;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{check_geometry, json_bytes, load_dataset, load_qnet, print_json};
use crate::error::CliResult;
use crate::manifest::{check_output_path, digest_json, Outputs, RunManifest};
use crate::InferArgs;

/// Saturation counts summed over all trials.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Saturation {
    pub input: u64,
    /// `(layer, count)` in execution order.
    pub layers: Vec<(String, u64)>,
    pub total: u64,
}

/// Int8 logits and trace of every trial, plus the trace of the first trial
/// with saturation counts replaced by totals over all trials.
pub struct EngineRun {
    pub logits: Vec<Vec<i32>>,
    pub saturated_per_trial: Vec<u64>,
    pub trace: ExecutionTrace,
    pub saturation: Saturation,
}

pub fn run_engine(engine: &Engine, data: &TrialDataset) -> CliResult<EngineRun> {
    let results = (0..data.n_trials())
        .into_par_iter()
        .map(|i| engine.run_f32(data.trial(i)))
        .collect::<mibmi::Result<Vec<_>>>()?;
    let mut trace = results[0].1.clone();
    let mut saturation = Saturation {
        layers: trace.layers.iter().map(|l| (l.name.clone(), 0)).collect(),
        ..Saturation::default()
    };
    for (_, t) in &results {
        saturation.input += t.input_saturated;
        for (acc, l) in saturation.layers.iter_mut().zip(&t.layers) {
            acc.1 += l.saturated;
        }
        saturation.total += t.saturated_total();
    }
    trace.input_saturated = saturation.input;
    for (l, s) in trace.layers.iter_mut().zip(&saturation.layers) {
        l.saturated = s.1;
    }
    Ok(EngineRun {
        saturated_per_trial: results.iter().map(|(_, t)| t.saturated_total()).collect(),
        logits: results.into_iter().map(|(l, _)| l).collect(),
        trace,
        saturation,
    })
}

pub fn run(args: InferArgs) -> CliResult<()> {
    if let Some(p) = &args.out {
        check_output_path(p)?;
    }
    let qnet = load_qnet(&args.qnet)?;
    let data = load_dataset(&args.data)?;
    let config = qnet.value.config;
    check_geometry(&config, &data.value, &args.data)?;
    let logit_exp = qnet.value.logit_exp();
    let engine = Engine::load(qnet.value)?;
    let r = run_engine(&engine, &data.value)?;

    let d = &data.value;
    let predictions: Vec<usize> = r.logits.iter().map(|l| argmax_i32(l)).collect();
    let labels: Vec<usize> = (0..d.n_trials()).map(|i| d.label(i)).collect();
    let metrics = Metrics::from_predictions(&labels, &predictions, config.n_cl)?;
    let report = json!({
        "n_trials": d.n_trials(),
        "logit_exp": logit_exp,
        "predictions": predictions,
        "labels": labels,
        "logits": r.logits,
        "metrics": metrics,
        "trace": r.trace,
        "memory_bytes": r.trace.total_memory_bytes(),
        "saturation": r.saturation,
    });

    if args.json {
        print_json(&report);
    } else {
        println!(
            "trials {}: accuracy {:.4}, kappa {:.4}",
            d.n_trials(),
            metrics.accuracy,
            metrics.kappa
        );
        print!("{}", r.trace.to_text());
        println!("saturated values over all trials: {}", r.saturation.total);
    }
    if let Some(path) = &args.out {
        let mut manifest = RunManifest::new("infer", digest_json(&json!({ "config": config })));
        manifest.inputs.push(qnet.record);
        manifest.inputs.push(data.record);
        let mut out = Outputs::default();
        out.add(path, json_bytes(&report));
        out.commit(manifest)?;
    }
    Ok(())
}
