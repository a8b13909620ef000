//! Tensor containers and quantization primitives.

mod quant;
mod tensor;

pub use quant::{
    choose_scale_exp, fake_quant, pow2, quantize, quantize_values, round_half_away, rshift_round, QuantTensor,
    Quantized, ACT_MAX, ACT_MIN, SCALE_EXP_LIMIT, WEIGHT_MAX,
};
pub use tensor::{Scalar, Tensor};
