//! Dilated, strided 2D convolution lowered to a matrix product.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Static geometry of a square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || dilation == 0 || stride == 0 {
            return Err(Error::Domain(alloc::format!(
                "convolution extents must be positive: in={} out={} k={} D={} s={}",
                in_channels,
                out_channels,
                kernel,
                dilation,
                stride
            )));
        }
        Ok(ConvGeom { in_channels, out_channels, kernel, dilation, stride, padding })
    }

    /// Stride-1 convolution padded so the output keeps the input extent
    /// (odd kernels only): `p = D * (k - 1) / 2`.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> Result<Self> {
        Self::new(in_channels, out_channels, kernel, dilation, 1, dilation * (kernel - 1) / 2)
    }

    /// `k + (k - 1)(D - 1)`.
    pub fn effective_extent(&self) -> usize {
        self.kernel + (self.kernel - 1) * (self.dilation - 1)
    }

    pub fn output_extent(&self, input: usize) -> Result<usize> {
        let padded = input + 2 * self.padding;
        let eff = self.effective_extent();
        if eff > padded {
            return Err(shape_err!(
                "effective kernel extent {} exceeds padded input extent {}",
                eff,
                padded
            ));
        }
        Ok((padded - eff) / self.stride + 1)
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel, self.kernel)
            .expect("validated extents")
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_channels, 1, 1).expect("validated extents")
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel + self.out_channels
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T: Scalar = f32> {
    pub geom: ConvGeom,
    /// `(out, in, k, k)`
    pub weight: Tensor<T>,
    /// `(1, out, 1, 1)`
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(geom: ConvGeom) -> Self {
        ConvParams {
            geom,
            weight: Tensor::zeros(geom.weight_shape()),
            bias: Tensor::zeros(geom.bias_shape()),
        }
    }

    pub fn new(geom: ConvGeom, weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape() != geom.weight_shape() || bias.shape() != geom.bias_shape() {
            return Err(shape_err!(
                "conv params {} / {} do not match geometry {:?}",
                weight.shape(),
                bias.shape(),
                geom
            ));
        }
        Ok(ConvParams { geom, weight, bias })
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn output_shape(x: Shape, g: &ConvGeom) -> Result<Shape> {
    if x.c() != g.in_channels {
        return Err(shape_err!(
            "conv expects {} input channels, got {}",
            g.in_channels,
            x.c()
        ));
    }
    let ho = g.output_extent(x.h())?;
    let wo = g.output_extent(x.w())?;
    Shape::new(x.n(), g.out_channels, ho, wo)
}

/// Valid output columns `j` for which `j*s + off` lands in `[0, w)`.
fn valid_range(off: isize, s: usize, w: usize, wo: usize) -> (usize, usize) {
    let s = s as isize;
    let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
    let hi = if off >= w as isize { 0 } else { (w as isize - off + s - 1) / s };
    let lo = (lo as usize).min(wo);
    let hi = (hi as usize).min(wo);
    (lo, hi.max(lo))
}

/// Unfolds one `(C, H, W)` sample into a `(C*k*k, Ho*Wo)` patch matrix.
fn im2col<T: Scalar>(x: &[T], h: usize, w: usize, g: &ConvGeom, ho: usize, wo: usize, cols: &mut [T]) {
    let k = g.kernel;
    let p = ho * wo;
    for c in 0..g.in_channels {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for u in 0..k {
            for v in 0..k {
                let row = &mut cols[((c * k + u) * k + v) * p..((c * k + u) * k + v + 1) * p];
                let voff = (v * g.dilation) as isize - g.padding as isize;
                let (jlo, jhi) = valid_range(voff, g.stride, w, wo);
                for i in 0..ho {
                    let hi = (i * g.stride + u * g.dilation) as isize - g.padding as isize;
                    let out = &mut row[i * wo..(i + 1) * wo];
                    if hi < 0 || hi >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[hi as usize * w..(hi as usize + 1) * w];
                    out[..jlo].fill(T::zero());
                    out[jhi..].fill(T::zero());
                    if jhi == jlo {
                        continue;
                    }
                    if g.stride == 1 {
                        let start = (jlo as isize + voff) as usize;
                        out[jlo..jhi].copy_from_slice(&src[start..start + (jhi - jlo)]);
                    } else {
                        for j in jlo..jhi {
                            out[j] = src[(j as isize * g.stride as isize + voff) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Folds a patch-matrix gradient back onto a `(C, H, W)` sample, summing
/// overlapping taps.
fn col2im<T: Scalar>(cols: &[T], h: usize, w: usize, g: &ConvGeom, ho: usize, wo: usize, x: &mut [T]) {
    let k = g.kernel;
    let p = ho * wo;
    for c in 0..g.in_channels {
        let plane = &mut x[c * h * w..(c + 1) * h * w];
        for u in 0..k {
            for v in 0..k {
                let row = &cols[((c * k + u) * k + v) * p..((c * k + u) * k + v + 1) * p];
                let voff = (v * g.dilation) as isize - g.padding as isize;
                let (jlo, jhi) = valid_range(voff, g.stride, w, wo);
                for i in 0..ho {
                    let hi = (i * g.stride + u * g.dilation) as isize - g.padding as isize;
                    if hi < 0 || hi >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[hi as usize * w..(hi as usize + 1) * w];
                    let src = &row[i * wo..(i + 1) * wo];
                    for j in jlo..jhi {
                        dst[(j as isize * g.stride as isize + voff) as usize] += src[j];
                    }
                }
            }
        }
    }
}

/// `y[n,o,i,j] = b[o] + sum_{c,u,v} w[o,c,u,v] * x[n, c, i*s + u*D - p, j*s + v*D - p]`
/// with zero reads outside the input.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let g = &params.geom;
    let xs = x.shape();
    let ys = output_shape(xs, g)?;
    let (ho, wo) = (ys.h(), ys.w());
    let p = ho * wo;
    let kk = g.patch_len();
    let mut y = Tensor::zeros(ys);
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); kk * p] };
    let bias = params.bias.data();
    for n in 0..xs.n() {
        let patches: &[T] = if g.is_pointwise() {
            x.sample(n)
        } else {
            im2col(x.sample(n), xs.h(), xs.w(), g, ho, wo, &mut cols);
            &cols
        };
        let out = y.sample_mut(n);
        T::gemm(g.out_channels, kk, p, T::one(), params.weight.data(), false, patches, false, T::zero(), out);
        for (o, row) in out.chunks_exact_mut(p).enumerate() {
            let b = bias[o];
            for v in row {
                *v += b;
            }
        }
    }
    Ok(y)
}

/// Gradients of a scalar loss with respect to input, weights and bias,
/// given the gradient at the convolution output.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    params: &ConvParams<T>,
    grad_y: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = &params.geom;
    let xs = x.shape();
    let ys = output_shape(xs, g)?;
    if grad_y.shape() != ys {
        return Err(shape_err!(
            "conv output gradient {} does not match forward output {}",
            grad_y.shape(),
            ys
        ));
    }
    let (ho, wo) = (ys.h(), ys.w());
    let p = ho * wo;
    let kk = g.patch_len();
    let mut gx = Tensor::zeros(xs);
    let mut gw = Tensor::zeros(g.weight_shape());
    let mut gb = Tensor::zeros(g.bias_shape());
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); kk * p] };
    let mut gcols = vec![T::zero(); kk * p];
    for n in 0..xs.n() {
        let gy = grad_y.sample(n);
        for (o, row) in gy.chunks_exact(p).enumerate() {
            gb.data_mut()[o] += row.iter().copied().sum::<T>();
        }
        let patches: &[T] = if g.is_pointwise() {
            x.sample(n)
        } else {
            im2col(x.sample(n), xs.h(), xs.w(), g, ho, wo, &mut cols);
            &cols
        };
        // dW += dY * cols^T
        T::gemm(g.out_channels, p, kk, T::one(), gy, false, patches, true, T::one(), gw.data_mut());
        // dcols = W^T * dY
        if g.is_pointwise() {
            T::gemm(kk, g.out_channels, p, T::one(), params.weight.data(), true, gy, false, T::zero(), gx.sample_mut(n));
        } else {
            T::gemm(kk, g.out_channels, p, T::one(), params.weight.data(), true, gy, false, T::zero(), &mut gcols);
            col2im(&gcols, xs.h(), xs.w(), g, ho, wo, gx.sample_mut(n));
        }
    }
    Ok(ConvGrads { input: gx, weight: gw, bias: gb })
}
