//! Dense rank-4 `(batch, channel, height, width)` arrays.
//!
//! Element `(n, c, h, w)` lives at flat index `((n*C + c)*H + h)*W + w`.
//! Lower-rank data uses degenerate leading extents, e.g. a per-channel bias
//! is `(1, C, 1, 1)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape([usize; 4]);

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        Self::from_dims(&[n, c, h, w])
    }

    /// Builds a shape from up to four extents; missing leading extents are 1.
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(shape_err!("rank must be 1..=4, got {}", dims.len()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(shape_err!("extent {} of {:?} is zero", pos, dims));
        }
        let mut out = [1usize; 4];
        out[4 - dims.len()..].copy_from_slice(dims);
        Ok(Shape(out))
    }

    pub fn dims(&self) -> [usize; 4] {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0[0]
    }

    pub fn c(&self) -> usize {
        self.0[1]
    }

    pub fn h(&self) -> usize {
        self.0[2]
    }

    pub fn w(&self) -> usize {
        self.0[3]
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Elements in one `(c, h, w)` sample.
    pub fn sample_len(&self) -> usize {
        self.0[1] * self.0[2] * self.0[3]
    }

    pub fn plane(&self) -> usize {
        self.0[2] * self.0[3]
    }

    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        debug_assert!(n < self.0[0] && c < self.0[1] && h < self.0[2] && w < self.0[3]);
        ((n * self.0[1] + c) * self.0[2] + h) * self.0[3] + w
    }

    /// True when the shapes agree on every axis except possibly the batch
    /// axis, where one side has extent 1.
    pub fn batch_broadcastable(&self, other: &Shape) -> bool {
        self.0[1..] == other.0[1..]
            && (self.0[0] == other.0[0] || self.0[0] == 1 || other.0[0] == 1)
    }

    pub fn with_batch(&self, n: usize) -> Shape {
        Shape([n, self.0[1], self.0[2], self.0[3]])
    }

    pub fn with_channels(&self, c: usize) -> Shape {
        Shape([self.0[0], c, self.0[2], self.0[3]])
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

/// A set of axes, `0..4` for `(N, C, H, W)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Axes(u8);

impl Axes {
    pub const ALL: Axes = Axes(0b1111);

    pub fn new(axes: &[usize]) -> Result<Self> {
        let mut bits = 0u8;
        for &a in axes {
            if a >= 4 {
                return Err(shape_err!("axis {} out of range for rank 4", a));
            }
            bits |= 1 << a;
        }
        Ok(Axes(bits))
    }

    pub fn contains(&self, axis: usize) -> bool {
        axis < 4 && self.0 & (1 << axis) != 0
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Shape,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("dtype", &T::NAME)
            .field("has_grad", &self.grad.is_some())
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    /// Zeros from raw extents, validating each one.
    pub fn zeros_dims(dims: &[usize]) -> Result<Self> {
        Ok(Self::zeros(Shape::from_dims(dims)?))
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor { shape, data: vec![value; shape.numel()], grad: None }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(shape_err!(
                "buffer of {} elements does not fill shape {}",
                data.len(),
                shape
            ));
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> T) -> Self {
        Tensor { shape, data: (0..shape.numel()).map(&mut f).collect(), grad: None }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.offset(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let i = self.shape.offset(n, c, h, w);
        self.data[i] = v;
    }

    /// Contiguous `(c, h, w)` block of sample `n`.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.shape.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.shape.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Same data under a different shape with equal element count.
    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(shape_err!("cannot reshape {} into {}", self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect(), grad: None }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            grad: None,
        }
    }

    pub fn elementwise(op: BinaryOp, a: &Self, b: &Self) -> Result<Self> {
        if a.shape != b.shape {
            return Err(shape_err!("elementwise {:?}: {} vs {}", op, a.shape, b.shape));
        }
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
            })
            .collect();
        Ok(Tensor { shape: a.shape, data, grad: None })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::elementwise(BinaryOp::Add, self, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::elementwise(BinaryOp::Sub, self, other)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        Self::elementwise(BinaryOp::Mul, self, other)
    }

    /// In place `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!("add_assign: {} vs {}", self.shape, other.shape));
        }
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: T) {
        for x in &mut self.data {
            *x *= k;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Reduces over `axes`; reduced extents become 1.
    pub fn reduce(&self, op: ReduceOp, axes: Axes) -> Self {
        let d = self.shape.0;
        let mut out_dims = d;
        for (a, ext) in out_dims.iter_mut().enumerate() {
            if axes.contains(a) {
                *ext = 1;
            }
        }
        let out_shape = Shape(out_dims);
        let init = match op {
            ReduceOp::Max => T::neg_infinity(),
            _ => T::zero(),
        };
        let mut out = vec![init; out_shape.numel()];
        let mut i = 0;
        for n in 0..d[0] {
            for c in 0..d[1] {
                for h in 0..d[2] {
                    for w in 0..d[3] {
                        let idx = [n, c, h, w];
                        let mut o = [0usize; 4];
                        for a in 0..4 {
                            o[a] = if axes.contains(a) { 0 } else { idx[a] };
                        }
                        let j = out_shape.offset(o[0], o[1], o[2], o[3]);
                        let v = self.data[i];
                        match op {
                            ReduceOp::Max => {
                                if v > out[j] {
                                    out[j] = v
                                }
                            }
                            _ => out[j] += v,
                        }
                        i += 1;
                    }
                }
            }
        }
        if op == ReduceOp::Mean {
            let count = T::of((self.shape.numel() / out_shape.numel()) as f64);
            for v in &mut out {
                *v /= count;
            }
        }
        Tensor { shape: out_shape, data: out, grad: None }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let len = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); len])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn drop_grad(&mut self) {
        self.grad = None;
    }

    /// Data and gradient together, for optimizer updates.
    pub fn data_and_grad_mut(&mut self) -> (&mut [T], &mut [T]) {
        let len = self.data.len();
        let g = self.grad.get_or_insert_with(|| vec![T::zero(); len]);
        (&mut self.data, g)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
