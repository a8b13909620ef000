use mibmi::estimate::{check_budget, discrepancy_report, estimate, Budget, Precision};
use mibmi::ModelConfig;
use serde_json::json;

use super::print_json;
use crate::error::{CliError, CliResult};
use crate::{DimArgs, EstimateArgs};

/// Resolve the configuration from a preset and/or the five dimension flags.
pub fn resolve_config(preset: Option<&str>, dims: &DimArgs) -> CliResult<ModelConfig> {
    let base = match preset {
        Some(name) => Some(mibmi::train::preset(name, false)?.config),
        None => None,
    };
    let pick = |flag: Option<usize>, from: fn(&ModelConfig) -> usize, name: &str| {
        flag.or(base.as_ref().map(from))
            .ok_or_else(|| CliError::validation(format!("--{name} is required without --preset")))
    };
    let config = ModelConfig::new(
        pick(dims.nch, |c| c.n_ch, "nch")?,
        pick(dims.ns, |c| c.n_s, "ns")?,
        pick(dims.nk, |c| c.n_k, "nk")?,
        pick(dims.nf, |c| c.n_f, "nf")?,
        pick(dims.ncl, |c| c.n_cl, "ncl")?,
    )?;
    Ok(config)
}

pub fn run(args: EstimateArgs) -> CliResult<()> {
    let precision = Precision::from_bits(args.precision)
        .ok_or_else(|| CliError::validation(format!("--precision must be 8 or 32, got {}", args.precision)))?;
    let config = resolve_config(args.preset.as_deref(), &args.dims)?;
    let report = estimate(&config)?;
    let discrepancies = discrepancy_report(&report);
    let budget = args
        .budget
        .map(|limit_bytes| check_budget(&report, precision, Budget { limit_bytes }));

    if args.json {
        print_json(&json!({
            "config": config,
            "precision_bits": args.precision,
            "report": report,
            "memory_bytes": report.memory_bytes(precision),
            "budget": budget,
            "discrepancies": discrepancies,
        }));
    } else {
        print!("{}", report.table(precision));
        for d in &discrepancies {
            println!(
                "discrepancy {}: published {} computed {} ({:.2}%){}",
                d.cell,
                d.published,
                d.computed,
                100.0 * d.relative,
                if d.reason.is_empty() {
                    String::new()
                } else {
                    format!(" — {}", d.reason)
                }
            );
        }
        if let (Some(b), Some(limit)) = (budget, args.budget) {
            println!(
                "budget {} B: {} (required {} B, margin {} B)",
                limit,
                if b.fits { "fits" } else { "EXCEEDED" },
                b.required_bytes,
                b.margin_bytes
            );
        }
    }
    match budget {
        Some(b) if !b.fits => Err(CliError::budget(format!(
            "model needs {} B at {}-bit, {} B over the {} B budget",
            b.required_bytes,
            args.precision,
            -b.margin_bytes,
            args.budget.unwrap_or(0)
        ))),
        _ => Ok(()),
    }
}
