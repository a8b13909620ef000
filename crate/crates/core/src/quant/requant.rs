use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pow2, round_half_away, rshift_round, ACT_MAX, ACT_MIN};

/// Largest right shift a requantization may use.
pub const MAX_SHIFT: u32 = 31;

/// Integer requantization `clamp(rshift_round((acc + bias) * mult, shift), -128, 127)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Requant {
    pub mult: i32,
    pub shift: u32,
    pub bias: i32,
}

impl Requant {
    pub const IDENTITY: Requant = Requant {
        mult: 1,
        shift: 0,
        bias: 0,
    };

    /// The unclamped rescaled value, 64-bit.
    pub fn scaled(&self, acc: i32) -> i64 {
        rshift_round((acc as i64 + self.bias as i64) * self.mult as i64, self.shift)
    }

    /// Real-valued multiplier `mult / 2^shift`.
    pub fn multiplier(&self) -> f64 {
        self.mult as f64 * pow2(-(self.shift as i32))
    }
}

/// Requantize a 32-bit accumulator to int8.
pub fn requantize(acc: i32, c: &Requant) -> i8 {
    c.scaled(acc).clamp(ACT_MIN as i64, ACT_MAX as i64) as i8
}

/// Requantize and apply ReLU as a clamp at zero.
pub fn requantize_relu(acc: i32, c: &Requant) -> i8 {
    c.scaled(acc).clamp(0, ACT_MAX as i64) as i8
}

/// Fold the per-feature affine map `y = a·mean + b` into integer constants.
///
/// The accumulator holds a sum of `window` values with real value
/// `acc · 2^-acc_exp`; the output code is `y · 2^out_exp`. Hence
/// `code = (acc + b·window·2^acc_exp / a) · a·2^(out_exp − acc_exp) / window`.
/// The multiplier uses the largest shift ≤ 31 that keeps `|mult| < 2^31`,
/// then drops trailing zero bits so exact powers of two stay small
/// (`a = 1, b = 0`, equal scales gives `(1, 0, 0)`).
///
/// The error against the exact affine map is below one output quantum when
/// `|M| < 1` (the accumulator quantum is finer than the output quantum, the
/// normal case since `acc_exp = in_exp + weight_exp`): half a quantum from the
/// final rounding, `|M|/2` from rounding the bias, plus the `2^-shift`
/// multiplier rounding.
///
/// A negative `a` is accepted: pooling precedes ReLU in this network, so the
/// sign of the scale does not affect the ReLU reordering. Rejected: non-finite
/// inputs, `a = 0` or any `a` whose multiplier underflows, multipliers of
/// 2^31 or more, and biases that overflow 32 bits.
pub fn fold_affine(a: f64, b: f64, acc_exp: i32, out_exp: i32, window: u32) -> Result<Requant> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quantization(format!("non-finite affine map a={a}, b={b}")));
    }
    if window == 0 {
        return Err(Error::Quantization("pooling window must be positive".into()));
    }
    let m = a * pow2(out_exp - acc_exp) / window as f64;
    if m == 0.0 {
        return Err(Error::Quantization(format!(
            "scale a={a} is zero; the feature carries no signal"
        )));
    }
    let limit = pow2(31);
    let mut shift = None;
    for s in (0..=MAX_SHIFT).rev() {
        if round_half_away(m.abs() * pow2(s as i32)) < limit {
            shift = Some(s);
            break;
        }
    }
    let Some(mut shift) = shift else {
        return Err(Error::Quantization(format!(
            "requantization multiplier {m} needs at least 2^31; output scale is too fine"
        )));
    };
    let mut mult = round_half_away(m * pow2(shift as i32)) as i64;
    if mult == 0 {
        return Err(Error::Quantization(format!(
            "requantization multiplier {m} underflows a 31-bit shift (a={a})"
        )));
    }
    while mult % 2 == 0 && shift > 0 {
        mult /= 2;
        shift -= 1;
    }
    let bias = round_half_away(b * window as f64 * pow2(acc_exp) / a);
    if bias.abs() > i32::MAX as f64 {
        return Err(Error::Quantization(format!(
            "folded bias {bias} overflows 32 bits (a={a}, b={b})"
        )));
    }
    Ok(Requant {
        mult: mult as i32,
        shift,
        bias: bias as i32,
    })
}

/// Fold batch-norm coefficients feature by feature.
pub fn fold_bn(a: &[f64], b: &[f64], acc_exp: i32, out_exp: i32, window: u32) -> Result<Vec<Requant>> {
    if a.len() != b.len() {
        return Err(Error::shape(&[a.len()], &[b.len()]));
    }
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (&a, &b))| {
            fold_affine(a, b, acc_exp, out_exp, window).map_err(|e| Error::Quantization(format!("feature {i}: {e}")))
        })
        .collect()
}
