//! Trial files, synthetic EEG, checkpoints, quantized networks and reports.
//!
//! All binary formats are little-endian with a 4-byte magic and a `u16`
//! version; byte offsets are documented in `docs/formats.md`. Writers go
//! through [`write_atomic`], so a failed command never leaves a partial file.

pub(crate) mod bin;
mod checkpoint;
mod dataset;
mod qnet;
mod synth;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

pub use checkpoint::{expect_config, Checkpoint, CheckpointMeta};
pub use dataset::TrialDataset;
pub use synth::{synth, ClassSignal, SynthSpec};

use crate::error::Result;

/// Write `bytes` to a temporary file in the destination directory, then
/// rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Pretty JSON document for reports.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| crate::Error::InvalidArgument(format!("cannot serialize report: {e}")))
}

/// Atomically write `value` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_json(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}
