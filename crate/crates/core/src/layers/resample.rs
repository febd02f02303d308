//! Resolution changes and channel plumbing: nearest upsampling, 2x2 max
//! pooling, channel concatenation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Replicates every pixel into a 2x2 block: `(N, C, H, W) -> (N, C, 2H, 2W)`.
pub fn upsample_nearest2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (h, w) = (s.h(), s.w());
    let os = Shape::new(s.n(), s.c(), 2 * h, 2 * w).expect("doubled extents are positive");
    let mut y = Tensor::zeros(os);
    for (src, dst) in x.data().chunks_exact(h * w).zip(y.data_mut().chunks_exact_mut(4 * h * w)) {
        for i in 0..h {
            let row = &src[i * w..(i + 1) * w];
            let (top, bottom) = dst[2 * i * 2 * w..(2 * i + 2) * 2 * w].split_at_mut(2 * w);
            for (j, &v) in row.iter().enumerate() {
                top[2 * j] = v;
                top[2 * j + 1] = v;
            }
            bottom.copy_from_slice(top);
        }
    }
    y
}

/// Sums each 2x2 block of the output gradient onto its source pixel.
pub fn upsample_nearest2x_backward<T: Scalar>(grad_y: &Tensor<T>) -> Result<Tensor<T>> {
    let s = grad_y.shape();
    if s.h() % 2 != 0 || s.w() % 2 != 0 {
        return Err(shape_err!("upsample gradient {} has odd spatial extent", s));
    }
    let (h, w) = (s.h() / 2, s.w() / 2);
    let mut gx = Tensor::zeros(Shape::new(s.n(), s.c(), h, w)?);
    for (src, dst) in grad_y.data().chunks_exact(4 * h * w).zip(gx.data_mut().chunks_exact_mut(h * w)) {
        for i in 0..h {
            for j in 0..w {
                let a = src[2 * i * 2 * w + 2 * j];
                let b = src[2 * i * 2 * w + 2 * j + 1];
                let c = src[(2 * i + 1) * 2 * w + 2 * j];
                let d = src[(2 * i + 1) * 2 * w + 2 * j + 1];
                dst[i * w + j] = a + b + c + d;
            }
        }
    }
    Ok(gx)
}

/// Channel-wise concatenation, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n() != sb.n() || sa.h() != sb.h() || sa.w() != sb.w() {
        return Err(shape_err!("concat needs equal N, H, W: {} vs {}", sa, sb));
    }
    let mut out = Vec::with_capacity(sa.numel() + sb.numel());
    for n in 0..sa.n() {
        out.extend_from_slice(a.sample(n));
        out.extend_from_slice(b.sample(n));
    }
    Tensor::from_vec(sa.with_channels(sa.c() + sb.c()), out)
}

/// Inverse of [`concat_channels`]: the first `c_a` channels, then the rest.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, c_a: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = x.shape();
    if c_a == 0 || c_a >= s.c() {
        return Err(shape_err!("cannot split {} channels at {}", s.c(), c_a));
    }
    let la = c_a * s.plane();
    let mut a = Vec::with_capacity(s.n() * la);
    let mut b = Vec::with_capacity(s.numel() - s.n() * la);
    for n in 0..s.n() {
        let (sa, sb) = x.sample(n).split_at(la);
        a.extend_from_slice(sa);
        b.extend_from_slice(sb);
    }
    Ok((Tensor::from_vec(s.with_channels(c_a), a)?, Tensor::from_vec(s.with_channels(s.c() - c_a), b)?))
}

/// Flat input index of the maximum inside each pooling window.
#[derive(Debug, Clone)]
pub struct PoolIndices {
    input: Shape,
    argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Requires even spatial extents.
pub fn maxpool2x2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let s = x.shape();
    if s.h() % 2 != 0 || s.w() % 2 != 0 {
        return Err(shape_err!("max pooling needs even spatial extents, got {}", s));
    }
    let (h, w) = (s.h() / 2, s.w() / 2);
    let os = Shape::new(s.n(), s.c(), h, w)?;
    let mut y = Tensor::zeros(os);
    let mut argmax = vec![0usize; os.numel()];
    let src = x.data();
    let (ih, iw) = (s.h(), s.w());
    for plane in 0..s.n() * s.c() {
        let base = plane * ih * iw;
        for i in 0..h {
            for j in 0..w {
                let mut best = base + 2 * i * iw + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let k = base + (2 * i + di) * iw + 2 * j + dj;
                    if src[k] > src[best] {
                        best = k;
                    }
                }
                let o = plane * h * w + i * w + j;
                y.data_mut()[o] = src[best];
                argmax[o] = best;
            }
        }
    }
    Ok((y, PoolIndices { input: s, argmax }))
}

pub fn maxpool2x2_backward<T: Scalar>(idx: &PoolIndices, grad_y: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_y.len() != idx.argmax.len() {
        return Err(shape_err!("max pool gradient {} does not match forward output", grad_y.shape()));
    }
    let mut gx = Tensor::zeros(idx.input);
    for (&k, &g) in idx.argmax.iter().zip(grad_y.data()) {
        gx.data_mut()[k] += g;
    }
    Ok(gx)
}
