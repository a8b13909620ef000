//! Headset electrode configurations (10-10 names, upper case).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectrodePreset {
    pub name: String,
    pub electrodes: Vec<String>,
}

/// Canonical electrode spelling: trimmed, upper case (`Cz` → `CZ`).
pub fn normalize(name: &str) -> String {
    name.trim().to_ascii_uppercase()
}

const TABLE: &[(&str, &[&str])] = &[
    ("Central-2", &["C3", "C4"]),
    ("Central-3", &["C3", "CZ", "C4"]),
    ("Central-5", &["C5", "C3", "CZ", "C4", "C6"]),
    ("Central-7", &["C5", "C3", "C1", "CZ", "C2", "C4", "C6"]),
    ("Central-9", &["T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8"]),
    (
        "Central-11",
        &["T9", "T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8", "T10"],
    ),
    ("Center+Frontal-4", &["C3", "C4", "FC3", "FC4"]),
    ("Center+Frontal-6", &["C3", "CZ", "C4", "FC3", "FCZ", "FC4"]),
    (
        "Center+Frontal-10",
        &["C5", "C3", "CZ", "C4", "C6", "FC5", "FC3", "FCZ", "FC4", "FC6"],
    ),
    (
        "Center+Frontal-14",
        &[
            "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6",
        ],
    ),
    (
        "Center+Frontal-18",
        &[
            "T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8", "FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4",
            "FC6", "FT8",
        ],
    ),
    (
        "Center+Frontal-20",
        &[
            "T9", "T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8", "T10", "FT7", "FC5", "FC3", "FC1", "FCZ",
            "FC2", "FC4", "FC6", "FT8",
        ],
    ),
    ("Center+Parietal-4", &["C3", "C4", "CP3", "CP4"]),
    ("Center+Parietal-6", &["C3", "CZ", "C4", "CP3", "CPZ", "CP4"]),
    (
        "Center+Parietal-10",
        &["C5", "C3", "CZ", "C4", "C6", "CP5", "CP3", "CPZ", "CP4", "CP6"],
    ),
    (
        "Center+Parietal-14",
        &[
            "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6",
        ],
    ),
    // The appendix lists TP7 twice in this row; the duplicate is dropped so
    // the row has its 18 distinct electrodes.
    (
        "Center+Parietal-18",
        &[
            "T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8", "TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4",
            "CP6", "TP8",
        ],
    ),
    (
        "Center+Parietal-20",
        &[
            "T9", "T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8", "T10", "TP7", "CP5", "CP3", "CP1", "CPZ",
            "CP2", "CP4", "CP6", "TP8",
        ],
    ),
    // International 10-20 system without the ear references A1/A2.
    (
        "Distributed-19",
        &[
            "FP1", "FP2", "F7", "F3", "FZ", "F4", "F8", "T7", "C3", "CZ", "C4", "T8", "P7", "P3", "PZ", "P4", "P8",
            "O1", "O2",
        ],
    ),
];

/// Names of all built-in presets.
pub fn preset_names() -> Vec<&'static str> {
    TABLE.iter().map(|(n, _)| *n).collect()
}

/// Built-in preset by name (case-insensitive). The 8- and 38-electrode
/// distributed layouts are only published as figures; load them with
/// [`preset_from_file`].
pub fn preset(name: &str) -> Result<ElectrodePreset> {
    let (n, list) = TABLE
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| {
            let hint = if name.to_ascii_lowercase().starts_with("distributed") {
                " (Distributed-8 and Distributed-38 must be supplied as a file)"
            } else {
                ""
            };
            Error::InvalidArgument(format!(
                "unknown electrode preset {name:?}{hint}; known presets: {}",
                preset_names().join(", ")
            ))
        })?;
    Ok(ElectrodePreset {
        name: n.to_string(),
        electrodes: list.iter().map(|s| s.to_string()).collect(),
    })
}

/// Read a user preset: electrode names separated by commas, whitespace or
/// newlines; `#` starts a comment. The preset is named after the file stem.
pub fn preset_from_file(path: &Path) -> Result<ElectrodePreset> {
    let text = std::fs::read_to_string(path)?;
    let electrodes: Vec<String> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|s| !s.is_empty())
        .map(normalize)
        .collect();
    if electrodes.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "preset file {} lists no electrodes",
            path.display()
        )));
    }
    let mut seen = electrodes.clone();
    seen.sort();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!("preset file lists {} twice", w[0])));
    }
    Ok(ElectrodePreset {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        electrodes,
    })
}
