use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_PRELU_SLOPE: f64 = 0.25;

/// Learnable per-channel negative slope.
#[derive(Debug, Clone, PartialEq)]
pub struct PReluParams<T: Scalar = f32> {
    /// `(1, C, 1, 1)`
    pub slope: Tensor<T>,
}

impl<T: Scalar> PReluParams<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(PReluParams { slope: Tensor::full(Shape::new(1, channels, 1, 1)?, T::of(DEFAULT_PRELU_SLOPE)) })
    }
}

fn check<T: Scalar>(x: &Tensor<T>, p: &PReluParams<T>) -> Result<()> {
    if x.shape().c() != p.slope.shape().c() {
        return Err(shape_err!("prelu expects {} channels, got {}", p.slope.shape().c(), x.shape().c()));
    }
    Ok(())
}

/// `y = x` for `x >= 0`, `a_c * x` otherwise.
pub fn prelu_forward<T: Scalar>(x: &Tensor<T>, p: &PReluParams<T>) -> Result<Tensor<T>> {
    check(x, p)?;
    let s = x.shape();
    let plane = s.plane();
    let mut y = x.clone();
    for (i, chunk) in y.data_mut().chunks_exact_mut(plane).enumerate() {
        let a = p.slope.data()[i % s.c()];
        for v in chunk {
            if *v < T::zero() {
                *v *= a;
            }
        }
    }
    Ok(y)
}

/// Returns `(grad_x, grad_slope)`.
pub fn prelu_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &PReluParams<T>,
    grad_y: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check(x, p)?;
    if grad_y.shape() != x.shape() {
        return Err(shape_err!("prelu backward: {} vs {}", grad_y.shape(), x.shape()));
    }
    let s = x.shape();
    let plane = s.plane();
    let mut gx = grad_y.clone();
    let mut ga = Tensor::zeros(p.slope.shape());
    for (i, (gchunk, xchunk)) in gx.data_mut().chunks_exact_mut(plane).zip(x.data().chunks_exact(plane)).enumerate() {
        let ch = i % s.c();
        let a = p.slope.data()[ch];
        let mut acc = T::zero();
        for (g, &xv) in gchunk.iter_mut().zip(xchunk) {
            if xv < T::zero() {
                acc += *g * xv;
                *g *= a;
            }
        }
        ga.data_mut()[ch] += acc;
    }
    Ok((gx, ga))
}
