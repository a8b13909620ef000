//! Closed-form resource accounting for a [`ModelConfig`].
//!
//! Counting rules, with `L2 = floor(N_s/8)` and `N_in = N_k·floor(L2/8)`:
//!
//! | block      | params                      | MACCs                     |
//! |------------|-----------------------------|---------------------------|
//! | spatial    | `N_k·N_ch + 4·N_k`          | `N_ch·N_s·N_k`            |
//! | temporal   | `N_k·N_f + 4·N_k`           | `N_f·N_s·N_k`             |
//! | separable  | `16·N_k + N_k² + 4·N_k`     | `(16·N_k + N_k²)·L2`      |
//! | classifier | `(N_in + 1)·N_cl`           | `N_in·N_cl`               |
//!
//! Convolutions carry no bias; each batch norm counts four vectors. Batch
//! norm, ReLU and pooling arithmetic is not counted as MACCs. Memory is
//! `bytes_per_value · (params_total + peak_feature_pair)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ModelConfig, SEP_KERNEL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    Int8,
    Float32,
}

impl Precision {
    pub fn bytes(self) -> u64 {
        match self {
            Precision::Int8 => 1,
            Precision::Float32 => 4,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            8 => Some(Precision::Int8),
            32 => Some(Precision::Float32),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerResources {
    pub name: String,
    pub params: u64,
    pub in_features: u64,
    pub out_features: u64,
    pub maccs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub config: Option<ModelConfig>,
    pub layers: Vec<LayerResources>,
    pub params_total: u64,
    pub peak_feature_pair: u64,
    pub macc_total: u64,
}

impl ResourceReport {
    /// A report with no layers.
    pub fn empty() -> Self {
        Self {
            config: None,
            layers: Vec::new(),
            params_total: 0,
            peak_feature_pair: 0,
            macc_total: 0,
        }
    }

    fn from_layers(config: Option<ModelConfig>, layers: Vec<LayerResources>) -> Self {
        let params_total = layers.iter().map(|l| l.params).sum();
        let macc_total = layers.iter().map(|l| l.maccs).sum();
        let peak_feature_pair = layers.iter().map(|l| l.in_features + l.out_features).max().unwrap_or(0);
        Self {
            config,
            layers,
            params_total,
            peak_feature_pair,
            macc_total,
        }
    }

    pub fn memory_bytes(&self, precision: Precision) -> u64 {
        precision.bytes() * (self.params_total + self.peak_feature_pair)
    }

    /// Fixed-width text table, one row per layer plus totals.
    pub fn table(&self, precision: Precision) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<12} {:>10} {:>12} {:>12} {:>14}\n",
            "layer", "params", "in_feat", "out_feat", "maccs"
        ));
        for l in &self.layers {
            s.push_str(&format!(
                "{:<12} {:>10} {:>12} {:>12} {:>14}\n",
                l.name,
                group(l.params),
                group(l.in_features),
                group(l.out_features),
                group(l.maccs)
            ));
        }
        let bytes = self.memory_bytes(precision);
        s.push_str(&format!(
            "total        params={} peak_features={} maccs={} memory={} B ({:.2} kB, {}-bit)\n",
            group(self.params_total),
            group(self.peak_feature_pair),
            group(self.macc_total),
            group(bytes),
            bytes as f64 / 1000.0,
            precision.bytes() * 8
        ));
        s
    }
}

impl fmt::Display for ResourceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table(Precision::Int8))
    }
}

/// Digits with thousands separators.
pub fn group(v: u64) -> String {
    let s = v.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn estimate(config: &ModelConfig) -> Result<ResourceReport> {
    config.validate()?;
    let ModelConfig {
        n_ch,
        n_s,
        n_k,
        n_f,
        n_cl,
    } = *config;
    let (n_ch, n_s, n_k, n_f, n_cl) = (n_ch as u64, n_s as u64, n_k as u64, n_f as u64, n_cl as u64);
    let sep = SEP_KERNEL as u64;
    let l2 = config.len_after_temporal() as u64;
    let n_in = config.fc_inputs() as u64;
    let layers = vec![
        LayerResources {
            name: "spatial".into(),
            params: n_k * n_ch + 4 * n_k,
            in_features: n_ch * n_s,
            out_features: n_k * n_s,
            maccs: n_ch * n_s * n_k,
        },
        LayerResources {
            name: "temporal".into(),
            params: n_k * n_f + 4 * n_k,
            in_features: n_k * n_s,
            out_features: n_k * l2,
            maccs: n_f * n_s * n_k,
        },
        LayerResources {
            name: "separable".into(),
            params: sep * n_k + n_k * n_k + 4 * n_k,
            in_features: n_k * l2,
            out_features: n_in,
            maccs: (sep * n_k + n_k * n_k) * l2,
        },
        LayerResources {
            name: "classifier".into(),
            params: (n_in + 1) * n_cl,
            in_features: n_in,
            out_features: n_cl,
            maccs: n_in * n_cl,
        },
    ];
    Ok(ResourceReport::from_layers(Some(*config), layers))
}

/// Memory budget, 64 kB by default (a typical MCU L1 scratchpad).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub limit_bytes: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self { limit_bytes: 65_536 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetCheck {
    pub fits: bool,
    pub required_bytes: u64,
    /// Negative when the budget is exceeded.
    pub margin_bytes: i64,
}

pub fn check_budget(report: &ResourceReport, precision: Precision, budget: Budget) -> BudgetCheck {
    let required = report.memory_bytes(precision);
    let margin = budget.limit_bytes as i64 - required as i64;
    BudgetCheck {
        fits: margin >= 0,
        required_bytes: required,
        margin_bytes: margin,
    }
}

/// How many times smaller `b` is than `a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub params: f64,
    /// Ratio of the peak consecutive feature-map pair (activation memory).
    pub memory: f64,
    pub macc: f64,
    /// Ratio of total 8-bit bytes (parameters plus activations).
    pub memory_bytes: f64,
}

pub fn compare(a: &ResourceReport, b: &ResourceReport) -> Reduction {
    let ratio = |x: u64, y: u64| if y == 0 { f64::INFINITY } else { x as f64 / y as f64 };
    Reduction {
        params: ratio(a.params_total, b.params_total),
        memory: ratio(a.peak_feature_pair, b.peak_feature_pair),
        macc: ratio(a.macc_total, b.macc_total),
        memory_bytes: ratio(a.memory_bytes(Precision::Int8), b.memory_bytes(Precision::Int8)),
    }
}

/// A published table cell that the floor-based rules do not reproduce
/// exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub cell: String,
    pub published: u64,
    pub computed: u64,
    pub relative: f64,
    pub reason: String,
}

struct PublishedCell {
    cell: &'static str,
    published: u64,
    pick: fn(&ResourceReport) -> u64,
    reason: &'static str,
}

const BCI_REFERENCE: &[PublishedCell] = &[
    PublishedCell {
        cell: "spatial params",
        published: 704 + 128,
        pick: |r| r.layers[0].params,
        reason: "",
    },
    PublishedCell {
        cell: "temporal params",
        published: 2_048 + 128,
        pick: |r| r.layers[1].params,
        reason: "",
    },
    PublishedCell {
        cell: "separable params",
        published: 1_536 + 128,
        pick: |r| r.layers[2].params,
        reason: "",
    },
    PublishedCell {
        cell: "classifier params",
        published: 1_412,
        pick: |r| r.layers[3].params,
        reason: "",
    },
    PublishedCell {
        cell: "input features",
        published: 16_500,
        pick: |r| r.layers[0].in_features,
        reason: "",
    },
    PublishedCell {
        cell: "spatial features",
        published: 24_000,
        pick: |r| r.layers[0].out_features,
        reason: "",
    },
    PublishedCell {
        cell: "temporal features",
        published: 3_000,
        pick: |r| r.layers[1].out_features,
        reason: "published value uses 750/8 = 93.75 unfloored; floor gives 93",
    },
    PublishedCell {
        cell: "separable features",
        published: 176,
        pick: |r| r.layers[2].out_features,
        reason: "published value contradicts the classifier's 1,412 params, which need 352 inputs",
    },
    PublishedCell {
        cell: "spatial maccs",
        published: 528_000,
        pick: |r| r.layers[0].maccs,
        reason: "",
    },
    PublishedCell {
        cell: "temporal maccs",
        published: 1_536_000,
        pick: |r| r.layers[1].maccs,
        reason: "",
    },
    PublishedCell {
        cell: "separable maccs",
        published: 96_000,
        pick: |r| r.layers[2].maccs,
        reason:
            "published row matches none of the stated formulas; the published total implies 1,536 x 93.75 = 144,000",
    },
    PublishedCell {
        cell: "classifier maccs",
        published: 704,
        pick: |r| r.layers[3].maccs,
        reason: "published row uses 176 inputs; the published total uses 352 x 4 = 1,408",
    },
    PublishedCell {
        cell: "params total",
        published: 6_084,
        pick: |r| r.params_total,
        reason: "",
    },
    PublishedCell {
        cell: "peak feature pair",
        published: 40_500,
        pick: |r| r.peak_feature_pair,
        reason: "",
    },
    PublishedCell {
        cell: "macc total",
        published: 2_209_408,
        pick: |r| r.macc_total,
        reason: "published total uses the unfloored length 93.75 in the separable block",
    },
];

const PHYSIONET_REFERENCE: &[PublishedCell] = &[
    PublishedCell {
        cell: "spatial params",
        published: 1_024 + 64,
        pick: |r| r.layers[0].params,
        reason: "",
    },
    PublishedCell {
        cell: "temporal params",
        published: 2_048 + 64,
        pick: |r| r.layers[1].params,
        reason: "",
    },
    PublishedCell {
        cell: "separable params",
        published: 512 + 64,
        pick: |r| r.layers[2].params,
        reason: "",
    },
    PublishedCell {
        cell: "classifier params",
        published: 484,
        pick: |r| r.layers[3].params,
        reason: "published row implies 120 inputs; the 112 published features give (112+1) x 4 = 452",
    },
    PublishedCell {
        cell: "input features",
        published: 30_720,
        pick: |r| r.layers[0].in_features,
        reason: "",
    },
    PublishedCell {
        cell: "spatial features",
        published: 7_680,
        pick: |r| r.layers[0].out_features,
        reason: "",
    },
    PublishedCell {
        cell: "temporal features",
        published: 960,
        pick: |r| r.layers[1].out_features,
        reason: "",
    },
    PublishedCell {
        cell: "separable features",
        published: 112,
        pick: |r| r.layers[2].out_features,
        reason: "",
    },
    PublishedCell {
        cell: "spatial maccs",
        published: 491_520,
        pick: |r| r.layers[0].maccs,
        reason: "",
    },
    PublishedCell {
        cell: "temporal maccs",
        published: 983_040,
        pick: |r| r.layers[1].maccs,
        reason: "",
    },
    PublishedCell {
        cell: "separable maccs",
        published: 30_720,
        pick: |r| r.layers[2].maccs,
        reason: "",
    },
    PublishedCell {
        cell: "classifier maccs",
        published: 448,
        pick: |r| r.layers[3].maccs,
        reason: "",
    },
    PublishedCell {
        cell: "params total",
        published: 4_228,
        pick: |r| r.params_total,
        reason: "published rows sum to 4,260; the total itself is reproduced",
    },
    PublishedCell {
        cell: "peak feature pair",
        published: 38_400,
        pick: |r| r.peak_feature_pair,
        reason: "",
    },
    PublishedCell {
        cell: "macc total",
        published: 1_505_728,
        pick: |r| r.macc_total,
        reason: "",
    },
];

/// Published reference cells for `config`, if it is one of the two
/// full-channel 4-class configurations with published tables.
fn reference_for(config: &ModelConfig) -> Option<&'static [PublishedCell]> {
    if *config == ModelConfig::bci_iv2a() {
        Some(BCI_REFERENCE)
    } else if *config == ModelConfig::physionet_mmmi() {
        Some(PHYSIONET_REFERENCE)
    } else {
        None
    }
}

/// Every published cell for this configuration, with the computed value.
/// Empty when no published table exists for the configuration.
pub fn reference_cells(report: &ResourceReport) -> Vec<Discrepancy> {
    let Some(cells) = report.config.as_ref().and_then(reference_for) else {
        return Vec::new();
    };
    cells
        .iter()
        .map(|c| {
            let computed = (c.pick)(report);
            Discrepancy {
                cell: c.cell.to_string(),
                published: c.published,
                computed,
                relative: (computed as f64 - c.published as f64).abs() / c.published as f64,
                reason: c.reason.to_string(),
            }
        })
        .collect()
}

/// Published cells that the estimator does not reproduce exactly, and cells
/// known to be internally inconsistent in the published table even where the
/// computed value happens to agree with the published total.
pub fn discrepancy_report(report: &ResourceReport) -> Vec<Discrepancy> {
    reference_cells(report)
        .into_iter()
        .filter(|d| d.computed != d.published || !d.reason.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bci_totals() {
        let r = estimate(&ModelConfig::bci_iv2a()).unwrap();
        assert_eq!(r.params_total, 6_084);
        assert_eq!(r.peak_feature_pair, 40_500);
        assert_eq!(r.memory_bytes(Precision::Int8), 46_584);
        assert_eq!(r.memory_bytes(Precision::Float32), 186_336);
        assert_eq!(r.layers[0].maccs, 528_000);
        assert_eq!(r.layers[1].maccs, 1_536_000);
    }

    #[test]
    fn physionet_totals() {
        let r = estimate(&ModelConfig::physionet_mmmi()).unwrap();
        assert_eq!(r.macc_total, 1_505_728);
        assert_eq!(r.peak_feature_pair, 38_400);
        assert_eq!(r.layers[2].maccs, 30_720);
        assert_eq!(r.layers[3].maccs, 448);
    }

    #[test]
    fn physionet_ten_channel_two_class() {
        let r = estimate(&ModelConfig::physionet_mmmi().with_channels(10).with_classes(2)).unwrap();
        assert_eq!(r.peak_feature_pair, 12_480);
        assert_eq!(r.macc_total, 1_090_784);
        assert_eq!(r.params_total, 3_138);
    }

    #[test]
    fn budget_checks() {
        let r = estimate(&ModelConfig::bci_iv2a()).unwrap();
        let c = check_budget(&r, Precision::Int8, Budget::default());
        assert!(c.fits);
        assert_eq!(c.margin_bytes, 18_952);
        let c = check_budget(&r, Precision::Float32, Budget::default());
        assert!(!c.fits);
        assert_eq!(c.required_bytes, 186_336);
        let e = check_budget(&ResourceReport::empty(), Precision::Int8, Budget::default());
        assert!(e.fits);
        assert_eq!(e.margin_bytes, 65_536);
    }

    #[test]
    fn compare_identical_is_unity() {
        let r = estimate(&ModelConfig::bci_iv2a()).unwrap();
        let red = compare(&r, &r);
        assert_eq!(
            (red.params, red.memory, red.macc, red.memory_bytes),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn compare_against_fewer_channels() {
        let full = estimate(&ModelConfig::bci_iv2a()).unwrap();
        let six = estimate(&ModelConfig::bci_iv2a().with_channels(6)).unwrap();
        let red = compare(&full, &six);
        // spatial MACCs scale with channels; the rest is unchanged
        let expected = full.macc_total as f64 / (full.macc_total - 16 * 750 * 32) as f64;
        assert!((red.macc - expected).abs() < 1e-12);
        assert!(red.params > 1.0 && red.memory > 1.0);
    }

    #[test]
    fn monotone_in_channels() {
        let base = ModelConfig::new(4, 256, 8, 16, 2).unwrap();
        let mut prev = estimate(&base).unwrap();
        for ch in 5..12 {
            let r = estimate(&base.with_channels(ch)).unwrap();
            assert!(r.layers[0].params > prev.layers[0].params);
            assert!(r.peak_feature_pair > prev.peak_feature_pair);
            assert!(r.macc_total > prev.macc_total);
            prev = r;
        }
    }

    #[test]
    fn discrepancies_listed_for_published_configs() {
        let bci = discrepancy_report(&estimate(&ModelConfig::bci_iv2a()).unwrap());
        let cells: Vec<_> = bci.iter().map(|d| d.cell.as_str()).collect();
        assert!(cells.contains(&"macc total"));
        assert!(cells.contains(&"separable features"));
        let phys = discrepancy_report(&estimate(&ModelConfig::physionet_mmmi()).unwrap());
        assert!(phys.iter().any(|d| d.cell == "params total"));
        let other = estimate(&ModelConfig::new(3, 64, 2, 3, 2).unwrap()).unwrap();
        assert!(discrepancy_report(&other).is_empty());
    }

    #[test]
    fn group_digits() {
        assert_eq!(group(0), "0");
        assert_eq!(group(999), "999");
        assert_eq!(group(46_584), "46,584");
        assert_eq!(group(1_505_728), "1,505,728");
    }
}
