use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Epoch spacing of random-partition-relaxation increments.
pub const RPR_STEP: usize = 10;

/// Quantization-aware training phases. `t_end` is the total epoch count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QatSchedule {
    /// First epoch with fake-quantized activations.
    pub t_a: usize,
    /// First epoch of weight freezing.
    pub t_w: usize,
    pub t_end: usize,
}

impl QatSchedule {
    pub fn new(t_a: usize, t_w: usize, t_end: usize) -> Result<Self> {
        let q = Self { t_a, t_w, t_end };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.t_a && self.t_a < self.t_w && self.t_w < self.t_end) {
            return Err(Error::InvalidConfig(format!(
                "QAT schedule needs 0 < t_a < t_w < t_end, got {}/{}/{}",
                self.t_a, self.t_w, self.t_end
            )));
        }
        Ok(())
    }

    /// Number of 10-epoch increments between `t_w` and `t_end`.
    pub fn rpr_increments(&self) -> usize {
        (self.t_end - self.t_w).div_ceil(RPR_STEP)
    }

    /// Whether `epoch` starts a new frozen partition.
    pub fn is_rpr_epoch(&self, epoch: usize) -> bool {
        epoch >= self.t_w && epoch < self.t_end && (epoch - self.t_w) % RPR_STEP == 0
    }
}

/// Fraction of quantized weights frozen during `epoch`: 0 before `t_w`, then
/// equal increments every 10 epochs, 1 from `t_end` on.
pub fn rpr_schedule(epoch: usize, q: &QatSchedule) -> f64 {
    if epoch < q.t_w {
        return 0.0;
    }
    if epoch >= q.t_end {
        return 1.0;
    }
    let steps = (epoch - q.t_w) / RPR_STEP;
    (steps as f64 / q.rpr_increments() as f64).min(1.0)
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    /// `(first epoch, learning rate)` pairs, ascending; the first starts at 0.
    pub lr_schedule: Vec<(usize, f64)>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds shuffling and the RPR partitions (weight init is seeded when the
    /// network is built).
    pub seed: u64,
    pub qat: Option<QatSchedule>,
    /// Grow the frozen set monotonically instead of re-sampling it.
    pub rpr_monotone: bool,
    /// Threads for per-trial gradient evaluation; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            lr_schedule: vec![(0, 1e-3)],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            seed: 0,
            qat: None,
            rpr_monotone: false,
            workers: None,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        match self.lr_schedule.first() {
            Some((0, _)) => {}
            _ => return bad("learning-rate schedule must start at epoch 0".into()),
        }
        if self.lr_schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return bad("learning-rate schedule epochs must increase".into());
        }
        if let Some((_, lr)) = self.lr_schedule.iter().find(|(_, lr)| !(lr.is_finite() && *lr > 0.0)) {
            return bad(format!("learning rate {lr} must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad("Adam epsilon must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if let Some(q) = &self.qat {
            q.validate()?;
            if q.t_end != self.epochs {
                return bad(format!(
                    "QAT t_end = {} must equal the total epoch count {}",
                    q.t_end, self.epochs
                ));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_schedule
            .iter()
            .rev()
            .find(|(e, _)| *e <= epoch)
            .map(|(_, lr)| *lr)
            .unwrap_or(self.lr_schedule[0].1)
    }

    /// Attach a QAT schedule and extend training to `t_end` epochs.
    pub fn with_qat(mut self, q: QatSchedule) -> Self {
        self.epochs = q.t_end;
        self.qat = Some(q);
        self
    }

    /// SHA-256 of the canonical JSON encoding. `workers` is left out: the
    /// thread count does not change the trained weights.
    pub fn digest(&self) -> [u8; 32] {
        let canonical = Self {
            workers: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("hyperparameters serialize");
        Sha256::digest(&json).into()
    }
}

/// A named dataset configuration from the paper's experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPreset {
    pub name: &'static str,
    pub config: ModelConfig,
    pub hyper: TrainHyper,
}

pub const PRESET_NAMES: [&str; 2] = ["bci-iv2a", "physionet-mmmi"];

/// Built-in presets. With `qat`, training runs to `t_end`.
///
/// - `bci-iv2a`: (22, 750, 32, 64, 4); Adam lr 1e-3, 500 epochs, batch 32,
///   eps 1e-7; QAT t_a = 450, t_w = 550, t_end = 650.
/// - `physionet-mmmi`: (64, 480, 16, 128, 4); batch 16; lr 0.01 / 0.001 /
///   0.0001 from epochs 0 / 40 / 80 (100 epochs); QAT 60 / 160 / 260.
pub fn preset(name: &str, qat: bool) -> Result<TrainPreset> {
    let (name, config, hyper, q) = match name {
        "bci-iv2a" => (
            "bci-iv2a",
            ModelConfig::bci_iv2a(),
            TrainHyper {
                epochs: 500,
                batch_size: 32,
                lr_schedule: vec![(0, 1e-3)],
                ..TrainHyper::default()
            },
            QatSchedule::new(450, 550, 650)?,
        ),
        "physionet-mmmi" => (
            "physionet-mmmi",
            ModelConfig::physionet_mmmi(),
            TrainHyper {
                epochs: 100,
                batch_size: 16,
                lr_schedule: vec![(0, 1e-2), (40, 1e-3), (80, 1e-4)],
                ..TrainHyper::default()
            },
            QatSchedule::new(60, 160, 260)?,
        ),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; known presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let hyper = if qat { hyper.with_qat(q) } else { hyper };
    Ok(TrainPreset { name, config, hyper })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rpr_examples() {
        let q = QatSchedule::new(450, 550, 650).unwrap();
        assert_eq!(rpr_schedule(100, &q), 0.0);
        for (i, e) in (550..=650).step_by(10).enumerate() {
            assert!((rpr_schedule(e, &q) - i as f64 / 10.0).abs() < 1e-12, "epoch {e}");
        }
        assert_eq!(rpr_schedule(555, &q), 0.0);
        assert_eq!(rpr_schedule(700, &q), 1.0);
    }

    #[test]
    fn rpr_is_monotone_and_piecewise_constant() {
        let q = QatSchedule::new(3, 17, 44).unwrap();
        let f: Vec<f64> = (0..60).map(|e| rpr_schedule(e, &q)).collect();
        assert!(f.windows(2).all(|w| w[0] <= w[1]));
        for e in q.t_w..q.t_end {
            if !q.is_rpr_epoch(e) {
                assert_eq!(f[e], f[e - 1]);
            }
        }
        assert_eq!(f[43], 2.0 / 3.0);
        assert_eq!(f[44], 1.0);
    }

    #[test]
    fn qat_validation() {
        assert!(QatSchedule::new(0, 2, 3).is_err());
        assert!(QatSchedule::new(5, 5, 9).is_err());
        let h = TrainHyper {
            qat: Some(QatSchedule::new(1, 2, 30).unwrap()),
            epochs: 20,
            ..TrainHyper::default()
        };
        assert!(h.validate().is_err());
    }

    #[test]
    fn lr_schedule_lookup() {
        let p = preset("physionet-mmmi", false).unwrap();
        assert_eq!(p.hyper.lr_at(0), 1e-2);
        assert_eq!(p.hyper.lr_at(39), 1e-2);
        assert_eq!(p.hyper.lr_at(40), 1e-3);
        assert_eq!(p.hyper.lr_at(99), 1e-4);
        p.hyper.validate().unwrap();
    }

    #[test]
    fn presets() {
        let b = preset("bci-iv2a", true).unwrap();
        assert_eq!(b.config, ModelConfig::bci_iv2a());
        assert_eq!((b.hyper.epochs, b.hyper.batch_size, b.hyper.eps), (650, 32, 1e-7));
        b.hyper.validate().unwrap();
        let p = preset("physionet-mmmi", true).unwrap();
        assert_eq!(p.hyper.qat, Some(QatSchedule::new(60, 160, 260).unwrap()));
        assert_eq!(p.hyper.epochs, 260);
        assert!(preset("nope", false).is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = TrainHyper::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }
}
