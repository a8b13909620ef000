//! Run manifests and all-or-nothing output writing.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the compact JSON encoding of `value`.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("configuration serializes"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Provenance of one command run, written next to every artifact as
/// `<artifact>.manifest.json`. Re-running `argv` reproduces the outputs
/// bitwise; no timestamps or host details are recorded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name.
    pub argv: Vec<String>,
    /// SHA-256 of the command's effective configuration (JSON).
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub toolkit_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: String) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().skip(1).collect(),
            config_digest,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    /// Record an input file with the hash of the bytes that were read.
    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }
}

/// Read an input file, mapping failures to exit code 4.
pub fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

/// Fail early (before any long computation) when an output cannot be
/// created: its directory must exist.
pub fn check_output_path(path: &Path) -> CliResult<()> {
    let dir = parent_dir(path);
    if !dir.is_dir() {
        return Err(CliError::io(format!(
            "output directory {} for {} does not exist",
            dir.display(),
            path.display()
        )));
    }
    if path.is_dir() {
        return Err(CliError::io(format!("output path {} is a directory", path.display())));
    }
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Artifacts of one run, written together or not at all.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: &Path, bytes: Vec<u8>) {
        self.files.push((path.to_path_buf(), bytes));
    }

    /// Write every artifact plus a manifest next to each. All files are
    /// first staged as temporary files in their destination directories;
    /// only when every one is staged are they renamed into place. If a rename
    /// fails, the artifacts already renamed are removed again.
    pub fn commit(self, mut manifest: RunManifest) -> CliResult<()> {
        manifest.outputs = self
            .files
            .iter()
            .map(|(p, b)| FileRecord {
                path: p.display().to_string(),
                sha256: sha256_hex(b),
            })
            .collect();
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        let mut all = Vec::new();
        for (path, bytes) in self.files {
            all.push((manifest_path(&path), json.clone().into_bytes()));
            all.push((path, bytes));
        }

        let io = |path: &Path, e: std::io::Error| CliError::io(format!("cannot write {}: {e}", path.display()));
        let mut staged = Vec::with_capacity(all.len());
        for (path, bytes) in &all {
            let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(|e| io(path, e))?;
            tmp.write_all(bytes).map_err(|e| io(path, e))?;
            tmp.as_file().sync_all().map_err(|e| io(path, e))?;
            staged.push((tmp, path.clone()));
        }
        let mut placed: Vec<PathBuf> = Vec::new();
        for (tmp, path) in staged {
            if let Err(e) = tmp.persist(&path) {
                for p in &placed {
                    let _ = std::fs::remove_file(p);
                }
                return Err(io(&path, e.error));
            }
            placed.push(path);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_writes_artifacts_and_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let mut out = Outputs::default();
        out.add(&a, b"abc".to_vec());
        out.commit(RunManifest::new("test", "00".into()).seed("seed", 1))
            .unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), b"abc");
        let m: RunManifest = serde_json::from_slice(&std::fs::read(manifest_path(&a)).unwrap()).unwrap();
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"abc"));
        assert_eq!(m.seeds["seed"], 1);
    }

    #[test]
    fn nothing_is_written_when_a_destination_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("missing").join("b.bin");
        let mut out = Outputs::default();
        out.add(&a, b"abc".to_vec());
        out.add(&b, b"def".to_vec());
        let err = out.commit(RunManifest::new("test", "00".into())).unwrap_err();
        assert_eq!(err.code, crate::error::ExitCode::Io);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
