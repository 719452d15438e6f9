use super::{Result, TrainError};
use crate::tensor::{Parameter, Tensor};
use crate::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Moment estimates for one parameter list, plus a per-parameter freeze
/// mask. Frozen parameters are never touched.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    frozen: Vec<bool>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Parameter<T>]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            frozen: vec![false; params.len()],
        }
    }

    pub fn freeze(&mut self, index: usize) {
        self.frozen[index] = true;
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen[index]
    }
}

/// One bias-corrected Adam update from the gradients stored in `params`.
/// Every gradient is checked before any parameter moves.
pub fn adam_step<T: Scalar>(params: &mut [Parameter<T>], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    assert_eq!(params.len(), state.m.len(), "optimizer state built for a different parameter list");
    for (i, p) in params.iter().enumerate() {
        if !state.frozen[i] && !p.grad.all_finite() {
            return Err(TrainError::NonFiniteGradient(p.name.clone()));
        }
        assert_eq!(p.grad.shape(), p.value.shape(), "{}: gradient shape", p.name);
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let (b1, b2) = (T::from_f64_lossy(ADAM_BETA1), T::from_f64_lossy(ADAM_BETA2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    // m_hat = m / c1, sqrt(v_hat) = sqrt(v) / sqrt(c2)
    let step = T::from_f64_lossy(lr / c1);
    let inv_sqrt_c2 = T::from_f64_lossy(1.0 / c2.sqrt());
    let eps = T::from_f64_lossy(ADAM_EPSILON);
    for (i, p) in params.iter_mut().enumerate() {
        if state.frozen[i] {
            continue;
        }
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *w -= step * *m / ((*v).sqrt() * inv_sqrt_c2 + eps);
        }
    }
    Ok(())
}
