//! Compact CNN toolkit for EEG motor-imagery classification on
//! microcontrollers.
//!
//! The crate covers the whole path from a float model to an int8 deployment:
//!
//! - [`numerics`]: tensors and symmetric power-of-two 8-bit quantization
//! - [`nn`]: float layers with manual backpropagation
//! - [`model`]: the four-block network, its float forward pass and the
//!   layer-by-layer execution plan
//! - [`estimate`]: parameter / feature / MACC / memory accounting and budget checks
//! - [`train`]: Adam, cross-entropy training, quantization-aware training, metrics
//! - [`channels`]: channel ranking from spatial filters and electrode presets
//! - [`quant`]: batch-norm folding and int8 export
//! - [`engine`]: bit-exact integer inference with a two-region memory arena
//! - [`io`]: trial files, synthetic EEG, checkpoints and quantized networks

pub mod channels;
pub mod engine;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod quant;
pub mod train;

pub use error::{Error, Result};
pub use model::{ModelConfig, Network};
pub use numerics::{QuantTensor, Tensor};
