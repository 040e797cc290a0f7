//! Bias-corrected Adam.

use crate::error::{NumericError, Result};
use crate::matrix::Matrix;
use crate::params::ParamStore;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = |p: &crate::params::Param<T>| Matrix::zeros(p.value.rows(), p.value.cols());
        Self {
            config,
            t: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    fn matches(&self, params: &ParamStore<T>) -> bool {
        self.m.len() == params.len()
            && params
                .iter()
                .zip(&self.m)
                .zip(&self.v)
                .all(|((p, m), v)| p.value.shape() == m.shape() && p.value.shape() == v.shape())
    }
}

/// Applies one Adam update from the accumulated gradients, then zeroes them.
pub fn adam_step<T: Real>(params: &mut ParamStore<T>, state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(NumericError::Config(format!("learning rate must be positive, got {lr}")));
    }
    if !state.matches(params) {
        return Err(NumericError::Contract(
            "optimizer state does not match parameter shapes".into(),
        ));
    }
    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let (bc1, bc2) = (T::from_f64_lossy(bc1), T::from_f64_lossy(bc2));
    let (lr, eps) = (T::from_f64_lossy(lr), T::from_f64_lossy(eps));

    for ((p, m), v) in params
        .params_mut()
        .iter_mut()
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((w, g), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(p.grad.data_mut().iter_mut())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + one_b1 * *g;
            *vi = b2 * *vi + one_b2 * *g * *g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            *g = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64, g: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("x", Matrix::filled(1, 1, x)).unwrap();
        s.grad_mut(id).set(0, 0, g);
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar_store(0.0, 1.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        adam_step(&mut s, &mut st, 0.01).unwrap();
        let x = s.iter().next().unwrap().value.get(0, 0);
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        assert!((x + 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop_but_counts() {
        let mut s = scalar_store(2.5, 0.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        adam_step(&mut s, &mut st, 0.01).unwrap();
        assert_eq!(s.iter().next().unwrap().value.get(0, 0), 2.5);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn nonpositive_lr_rejected() {
        let mut s = scalar_store(0.0, 1.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        assert!(matches!(adam_step(&mut s, &mut st, 0.0), Err(NumericError::Config(_))));
        assert!(matches!(adam_step(&mut s, &mut st, -1.0), Err(NumericError::Config(_))));
    }

    #[test]
    fn gradients_cleared_after_step() {
        let mut s = scalar_store(0.0, 3.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        adam_step(&mut s, &mut st, 0.1).unwrap();
        assert_eq!(s.flat_grads(), vec![0.0]);
    }
}
