use mibmi::quant::{export_with_report, CALIBRATION_PERCENTILE};
use serde_json::json;

use super::{check_geometry, load_checkpoint, load_dataset, print_json};
use crate::error::CliResult;
use crate::manifest::{check_output_path, digest_json, Outputs, RunManifest};
use crate::QuantizeArgs;

pub fn run(args: QuantizeArgs) -> CliResult<()> {
    check_output_path(&args.out)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let calib = load_dataset(&args.calib)?;
    let config = *ckpt.value.config();
    check_geometry(&config, &calib.value, &args.calib)?;
    let (qnet, report) = export_with_report(&ckpt.value.network, &calib.value)?;
    let bytes = qnet.to_bytes()?;

    if args.json {
        print_json(&json!({
            "report": report,
            "weight_bytes": qnet.weight_bytes(),
            "weight_storage_bytes": qnet.weight_storage_bytes(),
        }));
    } else {
        println!(
            "activation exponents (input, spatial, temporal, depthwise, separable): {:?}",
            report.act_exps
        );
        println!(
            "weight exponents (spatial, temporal, depthwise, pointwise, fc): {:?}",
            report.weight_exps
        );
        println!("saturated weights: {:?}", report.saturated_weights);
        println!(
            "weight bytes: {} (stored {})",
            qnet.weight_bytes(),
            qnet.weight_storage_bytes()
        );
    }

    let digest = digest_json(&json!({ "config": config, "calibration_percentile": CALIBRATION_PERCENTILE }));
    let mut manifest = RunManifest::new("quantize", digest).seed("checkpoint_seed", ckpt.value.meta.seed);
    manifest.inputs.push(ckpt.record);
    manifest.inputs.push(calib.record);
    let mut out = Outputs::default();
    out.add(&args.out, bytes);
    out.commit(manifest)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
