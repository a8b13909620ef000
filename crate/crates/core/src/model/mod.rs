//! Network construction, float forward pass and execution planning.

mod config;
mod network;
mod plan;

pub use config::{ModelConfig, POOL, SEP_KERNEL};
pub use network::{Network, QuantPoint};
pub use plan::{layer_plan, LayerPlan, PlanStep};
