//! One module per subcommand plus shared loaders.

pub mod estimate;
pub mod infer;
pub mod quantize;
pub mod select;
pub mod synth;
pub mod train;
pub mod verify;

use std::path::{Path, PathBuf};

use mibmi::io::{Checkpoint, TrialDataset};
use mibmi::quant::QuantNetwork;

use crate::error::{CliError, CliResult};
use crate::manifest::{read_input, sha256_hex, FileRecord};

/// An input artifact with the record of the bytes it was parsed from.
pub struct Loaded<T> {
    pub value: T,
    pub record: FileRecord,
}

fn load<T>(path: &Path, what: &str, parse: impl FnOnce(&[u8]) -> mibmi::Result<T>) -> CliResult<Loaded<T>> {
    let bytes = read_input(path)?;
    let value = parse(&bytes).map_err(|e| CliError::context(format!("{what} {}", path.display()), e))?;
    Ok(Loaded {
        value,
        record: FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        },
    })
}

pub fn load_dataset(path: &Path) -> CliResult<Loaded<TrialDataset>> {
    load(path, "trial file", TrialDataset::from_bytes)
}

pub fn load_checkpoint(path: &Path) -> CliResult<Loaded<Checkpoint>> {
    load(path, "checkpoint", Checkpoint::from_bytes)
}

pub fn load_qnet(path: &Path) -> CliResult<Loaded<QuantNetwork>> {
    load(path, "quantized network", QuantNetwork::from_bytes)
}

/// `<path><suffix>`, e.g. `model.ckpt` → `model.ckpt.curves.txt`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Require the data to match the network's input geometry.
pub fn check_geometry(config: &mibmi::ModelConfig, data: &TrialDataset, path: &Path) -> CliResult<()> {
    if (data.n_ch(), data.n_samples()) != (config.n_ch, config.n_s) {
        return Err(CliError::validation(format!(
            "{} holds trials of {} channels x {} samples but the model expects {} x {}",
            path.display(),
            data.n_ch(),
            data.n_samples(),
            config.n_ch,
            config.n_s
        )));
    }
    if data.n_classes() > config.n_cl {
        return Err(CliError::validation(format!(
            "{} has {} classes but the model has {} outputs",
            path.display(),
            data.n_classes(),
            config.n_cl
        )));
    }
    if data.is_empty() {
        return Err(CliError::validation(format!("{} holds no trials", path.display())));
    }
    Ok(())
}

/// Print JSON to stdout.
pub fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

pub fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}
