use crate::error::{Error, Result};
use crate::nn::Param;
use crate::numerics::{Scalar, Tensor};

/// First and second moments per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[&mut Param<T>]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            t: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One bias-corrected Adam update using each parameter's `grad`.
///
/// `frozen[i][j] == true` pins element `j` of parameter `i`: it is neither
/// updated nor accumulated into the moments.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Param<T>],
    state: &mut AdamState<T>,
    cfg: AdamConfig,
    frozen: Option<&[Vec<bool>]>,
) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::shape(&[state.m.len()], &[params.len()]));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        if p.value.shape() != state.m[i].shape() || p.grad.shape() != p.value.shape() {
            return Err(Error::shape(state.m[i].shape(), p.grad.shape()));
        }
        let mask = frozen.map(|f| f[i].as_slice());
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let g = p.grad.data();
        let w = p.value.data_mut();
        for j in 0..w.len() {
            if mask.is_some_and(|f| f[j]) {
                continue;
            }
            let gj = g[j].to_f64_lossless();
            let mj = cfg.beta1 * m[j].to_f64_lossless() + (1.0 - cfg.beta1) * gj;
            let vj = cfg.beta2 * v[j].to_f64_lossless() + (1.0 - cfg.beta2) * gj * gj;
            m[j] = T::of(mj);
            v[j] = T::of(vj);
            let update = cfg.lr * (mj / c1) / ((vj / c2).sqrt() + cfg.eps);
            w[j] = T::of(w[j].to_f64_lossless() - update);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: AdamConfig = AdamConfig {
        lr: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-7,
    };

    fn param(v: &[f64], g: &[f64]) -> Param<f64> {
        let mut p = Param::new(Tensor::new(vec![v.len()], v.to_vec()).unwrap());
        p.grad = Tensor::new(vec![g.len()], g.to_vec()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut p = param(&[1.0, -2.0], &[0.5, 0.5]);
        let mut s = AdamState::new(&[&mut p]);
        adam_step(&mut [&mut p], &mut s, CFG, None).unwrap();
        let before = p.value.clone();
        let (m0, v0) = (s.m[0].data()[0], s.v[0].data()[0]);
        p.grad = Tensor::zeros(&[2]);
        adam_step(&mut [&mut p], &mut s, CFG, None).unwrap();
        assert!((s.m[0].data()[0] - 0.9 * m0).abs() < 1e-15);
        assert!((s.v[0].data()[0] - 0.999 * v0).abs() < 1e-15);
        // Parameters keep moving on momentum alone, but a fresh state with
        // zero gradient does not move at all.
        let mut q = param(&[3.0], &[0.0]);
        let mut sq = AdamState::new(&[&mut q]);
        adam_step(&mut [&mut q], &mut sq, CFG, None).unwrap();
        assert_eq!(q.value.data(), &[3.0]);
        assert_ne!(p.value, before);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        let mut p = param(&[0.0], &[1.0]);
        let mut s = AdamState::new(&[&mut p]);
        adam_step(&mut [&mut p], &mut s, CFG, None).unwrap();
        assert!((p.value.data()[0] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = param(&[0.3, 0.1], &[0.2, -0.7]);
        let mut b = a.clone();
        let mut sa = AdamState::new(&[&mut a]);
        let mut sb = AdamState::new(&[&mut b]);
        for _ in 0..5 {
            adam_step(&mut [&mut a], &mut sa, CFG, None).unwrap();
            adam_step(&mut [&mut b], &mut sb, CFG, None).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn frozen_entries_do_not_move() {
        let mut p = param(&[1.0, 1.0], &[1.0, 1.0]);
        let mut s = AdamState::new(&[&mut p]);
        let mask = vec![vec![true, false]];
        adam_step(&mut [&mut p], &mut s, CFG, Some(&mask)).unwrap();
        assert_eq!(p.value.data()[0], 1.0);
        assert!(p.value.data()[1] < 1.0);
        assert_eq!(s.m[0].data()[0], 0.0);
    }
}
