use mibmi::model::Network;
use mibmi::train::{curves_text, evaluate, preset, train, QatSchedule, TrainHyper};
use mibmi::ModelConfig;
use serde_json::json;

use super::{check_geometry, load_dataset, sibling};
use crate::error::{CliError, CliResult};
use crate::manifest::{check_output_path, digest_json, Outputs, RunManifest};
use crate::TrainArgs;

fn parse_qat(s: &str) -> CliResult<QatSchedule> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::validation(format!("--qat expects t_a,t_w,t_end (three epoch numbers), got {s:?}")))?;
    let [t_a, t_w, t_end] = nums[..] else {
        return Err(CliError::validation(format!("--qat expects t_a,t_w,t_end, got {s:?}")));
    };
    Ok(QatSchedule::new(t_a, t_w, t_end)?)
}

/// Hyperparameters: preset (or defaults), then flag overrides, then QAT.
fn resolve_hyper(args: &TrainArgs, workers: Option<usize>) -> CliResult<(Option<ModelConfig>, TrainHyper)> {
    let base = match &args.preset {
        Some(name) => Some(preset(name, false)?),
        None => None,
    };
    let mut hyper = base.as_ref().map(|p| p.hyper.clone()).unwrap_or_default();
    if let Some(e) = args.epochs {
        hyper.epochs = e;
    }
    if let Some(b) = args.batch_size {
        hyper.batch_size = b;
    }
    if let Some(lr) = args.lr {
        hyper.lr_schedule = vec![(0, lr)];
    }
    hyper.seed = args.seed;
    hyper.rpr_monotone = args.rpr_monotone;
    hyper.workers = workers;
    if let Some(q) = &args.qat {
        let schedule = if q == "preset" {
            let name = args
                .preset
                .as_deref()
                .ok_or_else(|| CliError::validation("--qat without a schedule needs --preset"))?;
            preset(name, true)?.hyper.qat.expect("preset QAT schedule")
        } else {
            parse_qat(q)?
        };
        if let Some(e) = args.epochs {
            if e != schedule.t_end {
                return Err(CliError::validation(format!(
                    "--epochs {e} conflicts with the QAT schedule ending at epoch {}",
                    schedule.t_end
                )));
            }
        }
        hyper = hyper.with_qat(schedule);
    }
    hyper.validate()?;
    Ok((base.map(|p| p.config), hyper))
}

pub fn run(args: TrainArgs, workers: Option<usize>) -> CliResult<()> {
    let curves_path = args.curves.clone().unwrap_or_else(|| sibling(&args.out, ".curves.txt"));
    check_output_path(&args.out)?;
    check_output_path(&curves_path)?;
    if curves_path == args.out {
        return Err(CliError::validation("--curves must differ from --out"));
    }
    let (base, hyper) = resolve_hyper(&args, workers)?;
    let pick = |flag: Option<usize>, from: Option<usize>, name: &str| {
        flag.or(from)
            .ok_or_else(|| CliError::validation(format!("--{name} is required without --preset")))
    };
    let n_k = pick(args.nk, base.map(|c| c.n_k), "nk")?;
    let n_f = pick(args.nf, base.map(|c| c.n_f), "nf")?;

    let data = load_dataset(&args.data)?;
    let validation = args.validation.as_deref().map(load_dataset).transpose()?;
    let d = &data.value;
    if d.is_empty() {
        return Err(CliError::validation(format!("{} holds no trials", args.data.display())));
    }
    let config = ModelConfig::new(d.n_ch(), d.n_samples(), n_k, n_f, d.n_classes())?;
    if let (Some(v), Some(path)) = (&validation, &args.validation) {
        check_geometry(&config, &v.value, path)?;
    }
    let init_seed = args.init_seed.unwrap_or(args.seed);

    let net = Network::build(config, init_seed)?;
    let outcome = train(net, d, &hyper)?;
    let checkpoint_bytes = outcome.checkpoint.to_bytes()?;
    let last = outcome.curves.last();
    println!(
        "trained ({}, {}, {}, {}, {}) for {} epochs: loss {:.4}, train accuracy {:.4}",
        config.n_ch,
        config.n_s,
        config.n_k,
        config.n_f,
        config.n_cl,
        hyper.epochs,
        last.map_or(f64::NAN, |e| e.loss),
        last.map_or(f64::NAN, |e| e.accuracy)
    );
    if let Some(v) = &validation {
        let mut net = outcome.checkpoint.network.clone();
        let m = evaluate(&mut net, &v.value)?;
        println!("validation accuracy {:.4}, kappa {:.4}", m.accuracy, m.kappa);
    }

    let digest = digest_json(
        &json!({ "config": config, "hyper": TrainHyper { workers: None, ..hyper.clone() }, "init_seed": init_seed }),
    );
    let mut manifest = RunManifest::new("train", digest)
        .seed("seed", args.seed)
        .seed("init_seed", init_seed);
    manifest.inputs.push(data.record);
    if let Some(v) = validation {
        manifest.inputs.push(v.record);
    }
    let mut out = Outputs::default();
    out.add(&args.out, checkpoint_bytes);
    out.add(&curves_path, curves_text(&outcome.curves).into_bytes());
    out.commit(manifest)?;
    println!("wrote {} and {}", args.out.display(), curves_path.display());
    Ok(())
}
