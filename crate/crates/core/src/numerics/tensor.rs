use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating-point element type used by [`Tensor`]: `f32` for training and
/// inference, `f64` for gradient checking.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + Send + Sync + 'static {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} holds {n} elements but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Same data viewed under a new shape with equal element count.
    pub fn reshape(self, new_shape: &[usize]) -> Result<Self> {
        let n: usize = new_shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(new_shape, &self.shape));
        }
        Ok(Self {
            shape: new_shape.to_vec(),
            data: self.data,
        })
    }

    pub fn expect_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(expected, &self.shape));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.to_f64_lossless())).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Slice for the leading-axis item `i` (a trial in a batch).
    pub fn item(&self, i: usize) -> &[T] {
        let stride = self.data.len() / self.shape[0];
        &self.data[i * stride..(i + 1) * stride]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_preserves_order() {
        let t = Tensor::new(vec![2, 3], vec![1.0f32, 2., 3., 4., 5., 6.]).unwrap();
        let r = t.clone().reshape(&[6]).unwrap();
        assert_eq!(r.shape(), &[6]);
        assert_eq!(r.data(), t.data());
        let back = r.reshape(&[2, 3]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn reshape_scalar_to_rank3() {
        let t = Tensor::new(vec![1], vec![4.0f32]).unwrap();
        let r = t.reshape(&[1, 1, 1]).unwrap();
        assert_eq!(r.shape(), &[1, 1, 1]);
        assert_eq!(r.data(), &[4.0]);
    }

    #[test]
    fn flatten_eeg_input() {
        let t = Tensor::<f32>::zeros(&[22, 750]);
        let r = t.reshape(&[16_500]).unwrap();
        assert_eq!(r.len(), 16_500);
    }

    #[test]
    fn reshape_mismatch_is_an_error() {
        let t = Tensor::<f32>::zeros(&[2, 3]);
        assert!(matches!(t.reshape(&[5]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 2], vec![1.0f32; 3]).is_err());
    }
}
