//! Adam training with cross-entropy loss, quantization-aware training with
//! random partition relaxation, metrics and subject-wise cross-validation.

mod adam;
mod hyper;
mod metrics;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use hyper::{preset, rpr_schedule, QatSchedule, TrainHyper, TrainPreset, PRESET_NAMES, RPR_STEP};
pub use metrics::{kappa, kfold_split, repeat, summarize, Fold, Metrics, Summary};
pub use trainer::{argmax, curves_text, evaluate, predict_logits, train, EpochStats, TrainOutcome};
