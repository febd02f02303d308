//! Per-channel batch normalization over `(N, H, W)`.

use alloc::vec;
use alloc::vec::Vec;

use super::Mode;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BnParams<T: Scalar = f32> {
    /// `(1, C, 1, 1)` scale.
    pub gamma: Tensor<T>,
    /// `(1, C, 1, 1)` shift.
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    /// Weight of the current batch in the running statistics update.
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Scalar> BnParams<T> {
    /// `gamma = 1`, `beta = 0`, running statistics `(0, 1)`.
    pub fn new(channels: usize) -> Result<Self> {
        let shape = Shape::new(1, channels, 1, 1)?;
        Ok(BnParams {
            gamma: Tensor::ones(shape),
            beta: Tensor::zeros(shape),
            running_mean: Tensor::zeros(shape),
            running_var: Tensor::ones(shape),
            momentum: T::of(DEFAULT_MOMENTUM),
            epsilon: T::of(DEFAULT_EPSILON),
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.shape().c()
    }
}

/// Values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T: Scalar = f32> {
    mode: Mode,
    /// Normalized input.
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    shape: Shape,
}

#[derive(Debug, Clone)]
pub struct BnGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    p: &mut BnParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BnCache<T>)> {
    match mode {
        Mode::Train => batchnorm_train(x, p),
        Mode::Infer => batchnorm_infer(x, p),
    }
}

fn check_channels<T: Scalar>(x: &Tensor<T>, p: &BnParams<T>) -> Result<()> {
    if x.shape().c() != p.channels() {
        return Err(shape_err!("batchnorm expects {} channels, got {}", p.channels(), x.shape().c()));
    }
    Ok(())
}

/// Normalizes with batch statistics and folds them into the running ones.
pub fn batchnorm_train<T: Scalar>(x: &Tensor<T>, p: &mut BnParams<T>) -> Result<(Tensor<T>, BnCache<T>)> {
    check_channels(x, p)?;
    let s = x.shape();
    let c = s.c();
    let plane = s.plane();
    let count = s.n() * plane;
    if count < 2 {
        return Err(Error::DegenerateBatch(alloc::format!(
            "batch statistics need N*H*W > 1, got {}",
            count
        )));
    }
    let m = T::of(count as f64);
    let mut y = Tensor::zeros(s);
    let mut x_hat = vec![T::zero(); s.numel()];
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum = T::zero();
        for n in 0..s.n() {
            let off = (n * c + ch) * plane;
            sum += x.data()[off..off + plane].iter().copied().sum::<T>();
        }
        let mean = sum / m;
        let mut sq = T::zero();
        for n in 0..s.n() {
            let off = (n * c + ch) * plane;
            for &v in &x.data()[off..off + plane] {
                let d = v - mean;
                sq += d * d;
            }
        }
        let var = sq / m;
        let istd = T::one() / (var + p.epsilon).sqrt();
        inv_std[ch] = istd;
        let (g, b) = (p.gamma.data()[ch], p.beta.data()[ch]);
        let out = y.data_mut();
        for n in 0..s.n() {
            let off = (n * c + ch) * plane;
            for i in off..off + plane {
                let xh = (x.data()[i] - mean) * istd;
                x_hat[i] = xh;
                out[i] = g * xh + b;
            }
        }
        let mom = p.momentum;
        let unbiased = sq / T::of((count - 1) as f64);
        let rm = &mut p.running_mean.data_mut()[ch];
        *rm = (T::one() - mom) * *rm + mom * mean;
        let rv = &mut p.running_var.data_mut()[ch];
        *rv = (T::one() - mom) * *rv + mom * unbiased;
    }
    Ok((y, BnCache { mode: Mode::Train, x_hat, inv_std, shape: s }))
}

/// Normalizes with the running statistics; `p` is left untouched.
pub fn batchnorm_infer<T: Scalar>(x: &Tensor<T>, p: &BnParams<T>) -> Result<(Tensor<T>, BnCache<T>)> {
    check_channels(x, p)?;
    let s = x.shape();
    let c = s.c();
    let plane = s.plane();
    let mut y = Tensor::zeros(s);
    let mut x_hat = vec![T::zero(); s.numel()];
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let istd = T::one() / (p.running_var.data()[ch] + p.epsilon).sqrt();
        inv_std[ch] = istd;
        let mean = p.running_mean.data()[ch];
        let (g, b) = (p.gamma.data()[ch], p.beta.data()[ch]);
        let out = y.data_mut();
        for n in 0..s.n() {
            let off = (n * c + ch) * plane;
            for i in off..off + plane {
                let xh = (x.data()[i] - mean) * istd;
                x_hat[i] = xh;
                out[i] = g * xh + b;
            }
        }
    }
    Ok((y, BnCache { mode: Mode::Infer, x_hat, inv_std, shape: s }))
}

/// Gradients for input, `gamma` and `beta`. In inference mode the
/// statistics are constants.
pub fn batchnorm_backward<T: Scalar>(
    p: &BnParams<T>,
    cache: &BnCache<T>,
    grad_y: &Tensor<T>,
) -> Result<BnGrads<T>> {
    let s = cache.shape;
    if grad_y.shape() != s {
        return Err(shape_err!("batchnorm backward: gradient {} vs cached {}", grad_y.shape(), s));
    }
    let c = s.c();
    let plane = s.plane();
    let m = T::of((s.n() * plane) as f64);
    let mut gx = Tensor::zeros(s);
    let mut gg = Tensor::zeros(p.gamma.shape());
    let mut gb = Tensor::zeros(p.beta.shape());
    let gy = grad_y.data();
    let xh = &cache.x_hat;
    for ch in 0..c {
        let istd = cache.inv_std[ch];
        let mut sum_gy = T::zero();
        let mut sum_gy_xh = T::zero();
        for n in 0..s.n() {
            let off = (n * c + ch) * plane;
            for i in off..off + plane {
                sum_gy += gy[i];
                sum_gy_xh += gy[i] * xh[i];
            }
        }
        gg.data_mut()[ch] = sum_gy_xh;
        gb.data_mut()[ch] = sum_gy;
        let gamma = p.gamma.data()[ch];
        let out = gx.data_mut();
        for n in 0..s.n() {
            let off = (n * c + ch) * plane;
            for i in off..off + plane {
                out[i] = match cache.mode {
                    Mode::Train => gamma * istd / m * (m * gy[i] - sum_gy - xh[i] * sum_gy_xh),
                    Mode::Infer => gamma * istd * gy[i],
                };
            }
        }
    }
    Ok(BnGrads { input: gx, gamma: gg, beta: gb })
}
