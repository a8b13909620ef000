use mibmi::io::{synth, ClassSignal, SynthSpec};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::{check_output_path, digest_json, read_input, Outputs, RunManifest};
use crate::SynthArgs;

fn spec_from_flags(a: &SynthArgs) -> SynthSpec {
    SynthSpec {
        n_ch: a.nch,
        n_samples: a.ns,
        sample_rate_hz: a.rate,
        classes: a
            .freqs
            .iter()
            .map(|&center_hz| ClassSignal {
                channels: a.informative.clone(),
                center_hz,
                amplitude: a.amplitude,
            })
            .collect(),
        noise_sigma: a.noise,
        mixing_seed: a.mixing_seed,
    }
}

pub fn run(args: SynthArgs) -> CliResult<()> {
    check_output_path(&args.out)?;
    let mut inputs = Vec::new();
    let spec = match &args.spec {
        Some(path) => {
            let bytes = read_input(path)?;
            let spec: SynthSpec = serde_json::from_slice(&bytes)
                .map_err(|e| CliError::validation(format!("spec {}: {e}", path.display())))?;
            inputs.push((path.clone(), bytes));
            spec
        }
        None => spec_from_flags(&args),
    };
    if args.per_class == 0 {
        return Err(CliError::validation("--per-class must be at least 1"));
    }
    let data = synth(&spec, args.per_class, args.seed)?;
    let bytes = data.to_bytes()?;

    let digest = digest_json(&json!({ "spec": spec, "per_class": args.per_class }));
    let mut manifest = RunManifest::new("synth-data", digest)
        .seed("seed", args.seed)
        .seed("mixing_seed", spec.mixing_seed);
    for (p, b) in &inputs {
        manifest.input(p, b);
    }
    let mut out = Outputs::default();
    out.add(&args.out, bytes);
    out.commit(manifest)?;
    println!(
        "wrote {}: {} trials, {} channels x {} samples, {} classes",
        args.out.display(),
        data.n_trials(),
        data.n_ch(),
        data.n_samples(),
        data.n_classes()
    );
    Ok(())
}
