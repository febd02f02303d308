use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.99, epsilon: 1e-8 }
    }
}

/// First and second moment estimates of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T: Scalar = f32> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Moments<T> {
    pub fn zeros(len: usize) -> Self {
        Moments { m: alloc::vec![T::zero(); len], v: alloc::vec![T::zero(); len] }
    }
}

/// One bias-corrected Adam update of `param` at step `t` (1-based).
pub fn adam_update<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    moments: &mut Moments<T>,
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != moments.m.len() || param.len() != moments.v.len() {
        return Err(shape_err!(
            "adam: param {} / grad {} / moments {} lengths differ",
            param.len(),
            grad.len(),
            moments.m.len()
        ));
    }
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let one = T::one();
    let c1 = T::of(1.0 - libm::pow(cfg.beta1, t as f64));
    let c2 = T::of(1.0 - libm::pow(cfg.beta2, t as f64));
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.epsilon);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(moments.m.iter_mut()).zip(moments.v.iter_mut()) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T: Scalar = f32> {
    pub config: AdamConfig,
    /// Completed steps.
    pub t: u64,
    pub moments: Vec<Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, t: 0, moments: Vec::new() }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update to every parameter from its gradient buffer. The
    /// parameter order must be the same on every call.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params.iter().map(|p| Moments::zeros(p.len())).collect();
        }
        if self.moments.len() != params.len() {
            return Err(shape_err!("adam tracks {} tensors, got {}", self.moments.len(), params.len()));
        }
        self.t += 1;
        for (p, mom) in params.iter_mut().zip(self.moments.iter_mut()) {
            let (data, grad) = p.data_and_grad_mut();
            adam_update(data, grad, mom, self.t, &self.config)?;
        }
        Ok(())
    }
}
