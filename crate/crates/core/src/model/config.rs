use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pooling window and stride used after the temporal and separable blocks.
pub const POOL: usize = 8;
/// Kernel length of the depthwise half of the separable convolution.
pub const SEP_KERNEL: usize = 16;

/// Shape parameters of one network instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    /// EEG channels.
    pub n_ch: usize,
    /// Samples per trial.
    pub n_s: usize,
    /// Number of filters.
    pub n_k: usize,
    /// Temporal kernel length.
    pub n_f: usize,
    /// Classes.
    pub n_cl: usize,
}

impl ModelConfig {
    pub fn new(n_ch: usize, n_s: usize, n_k: usize, n_f: usize, n_cl: usize) -> Result<Self> {
        let cfg = Self {
            n_ch,
            n_s,
            n_k,
            n_f,
            n_cl,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// BCI Competition IV-2a, 4 classes.
    pub fn bci_iv2a() -> Self {
        Self {
            n_ch: 22,
            n_s: 750,
            n_k: 32,
            n_f: 64,
            n_cl: 4,
        }
    }

    /// Physionet motor movement/imagery, 4 classes.
    pub fn physionet_mmmi() -> Self {
        Self {
            n_ch: 64,
            n_s: 480,
            n_k: 16,
            n_f: 128,
            n_cl: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_ch", self.n_ch),
            ("n_s", self.n_s),
            ("n_k", self.n_k),
            ("n_f", self.n_f),
            ("n_cl", self.n_cl),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.n_s / POOL / POOL == 0 {
            return Err(Error::InvalidConfig(format!(
                "n_s = {} leaves no samples after two pooling stages (need n_s >= {})",
                self.n_s,
                POOL * POOL
            )));
        }
        Ok(())
    }

    pub fn with_channels(self, n_ch: usize) -> Self {
        Self { n_ch, ..self }
    }

    pub fn with_classes(self, n_cl: usize) -> Self {
        Self { n_cl, ..self }
    }

    /// Length after the temporal block's pooling.
    pub fn len_after_temporal(&self) -> usize {
        self.n_s / POOL
    }

    /// Length after the separable block's pooling.
    pub fn len_after_separable(&self) -> usize {
        self.len_after_temporal() / POOL
    }

    /// Flattened input size of the classifier.
    pub fn fc_inputs(&self) -> usize {
        self.n_k * self.len_after_separable()
    }
}

impl std::fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "N_ch={} N_s={} N_k={} N_f={} N_cl={}",
            self.n_ch, self.n_s, self.n_k, self.n_f, self.n_cl
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        ModelConfig::bci_iv2a().validate().unwrap();
        ModelConfig::physionet_mmmi().validate().unwrap();
        assert_eq!(ModelConfig::bci_iv2a().fc_inputs(), 352);
        assert_eq!(ModelConfig::physionet_mmmi().fc_inputs(), 112);
    }

    #[test]
    fn degenerate_config_builds() {
        let c = ModelConfig::new(1, 64, 1, 3, 2).unwrap();
        assert_eq!(c.fc_inputs(), 1);
    }

    #[test]
    fn invalid_configs() {
        assert!(ModelConfig::new(0, 64, 1, 3, 2).is_err());
        assert!(ModelConfig::new(1, 63, 1, 3, 2).is_err());
        assert!(ModelConfig::new(1, 64, 1, 3, 0).is_err());
    }
}
