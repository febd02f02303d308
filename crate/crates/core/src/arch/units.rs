//! Stateful building blocks that cache activations for the backward pass.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, conv2d_backward, conv2d_forward, prelu_backward,
    prelu_forward, BnCache, BnParams, ConvGeom, ConvParams, PReluParams,
};
use crate::optim::glorot_init;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Updated by the optimizer.
    Trainable,
    /// Running statistics, persisted but not optimized.
    Buffer,
}

/// A named view of one parameter tensor.
pub struct NamedParam<'a, T: Scalar> {
    pub name: String,
    pub role: ParamRole,
    pub tensor: &'a mut Tensor<T>,
}

pub(crate) type Registry<'a, T> = Vec<NamedParam<'a, T>>;

fn push<'a, T: Scalar>(out: &mut Registry<'a, T>, prefix: &str, name: &str, role: ParamRole, tensor: &'a mut Tensor<T>) {
    out.push(NamedParam { name: format!("{}.{}", prefix, name), role, tensor });
}

fn missing_cache(what: &str) -> Error {
    Error::Shape(format!("{}: backward called without a training forward pass", what))
}

fn accumulate<T: Scalar>(param: &mut Tensor<T>, grad: &Tensor<T>) {
    for (g, &d) in param.grad_mut().iter_mut().zip(grad.data()) {
        *g += d;
    }
}

/// Convolution without normalization or activation (the classifier head).
#[derive(Debug, Clone)]
pub struct ConvLayer<T: Scalar = f32> {
    pub params: ConvParams<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new<R: Rng>(geom: ConvGeom, rng: &mut R) -> Self {
        let weight = glorot_init(geom.weight_shape(), rng);
        ConvLayer { params: ConvParams { geom, weight, bias: Tensor::zeros(geom.bias_shape()) }, input: None }
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let y = conv2d_forward(&x, &self.params)?;
        self.input = Some(x);
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, &self.params)
    }

    pub fn backward(&mut self, grad_y: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| missing_cache("conv"))?;
        let g = conv2d_backward(&x, &self.params, &grad_y)?;
        accumulate(&mut self.params.weight, &g.weight);
        accumulate(&mut self.params.bias, &g.bias);
        Ok(g.input)
    }

    pub(crate) fn register<'a>(&'a mut self, prefix: &str, out: &mut Registry<'a, T>) {
        push(out, prefix, "weight", ParamRole::Trainable, &mut self.params.weight);
        push(out, prefix, "bias", ParamRole::Trainable, &mut self.params.bias);
    }

    pub fn geom(&self) -> ConvGeom {
        self.params.geom
    }
}

struct UnitCache<T: Scalar> {
    input: Tensor<T>,
    bn: BnCache<T>,
    normalized: Tensor<T>,
}

/// Convolution, batch normalization, PReLU.
pub struct ConvUnit<T: Scalar = f32> {
    pub conv: ConvParams<T>,
    pub bn: BnParams<T>,
    pub act: PReluParams<T>,
    cache: Option<UnitCache<T>>,
}

impl<T: Scalar> ConvUnit<T> {
    pub fn new<R: Rng>(geom: ConvGeom, rng: &mut R) -> Result<Self> {
        let weight = glorot_init(geom.weight_shape(), rng);
        Ok(ConvUnit {
            conv: ConvParams { geom, weight, bias: Tensor::zeros(geom.bias_shape()) },
            bn: BnParams::new(geom.out_channels)?,
            act: PReluParams::new(geom.out_channels)?,
            cache: None,
        })
    }

    pub fn geom(&self) -> ConvGeom {
        self.conv.geom
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let z = conv2d_forward(&x, &self.conv)?;
        let (normalized, bn) = batchnorm_train(&z, &mut self.bn)?;
        let y = prelu_forward(&normalized, &self.act)?;
        self.cache = Some(UnitCache { input: x, bn, normalized });
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let z = conv2d_forward(x, &self.conv)?;
        let (normalized, _) = batchnorm_infer(&z, &self.bn)?;
        prelu_forward(&normalized, &self.act)
    }

    pub fn backward(&mut self, grad_y: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("conv unit"))?;
        let (g_norm, g_slope) = prelu_backward(&cache.normalized, &self.act, &grad_y)?;
        accumulate(&mut self.act.slope, &g_slope);
        let bn = batchnorm_backward(&self.bn, &cache.bn, &g_norm)?;
        accumulate(&mut self.bn.gamma, &bn.gamma);
        accumulate(&mut self.bn.beta, &bn.beta);
        let g = conv2d_backward(&cache.input, &self.conv, &bn.input)?;
        accumulate(&mut self.conv.weight, &g.weight);
        accumulate(&mut self.conv.bias, &g.bias);
        Ok(g.input)
    }

    pub(crate) fn register<'a>(&'a mut self, prefix: &str, out: &mut Registry<'a, T>) {
        push(out, prefix, "conv.weight", ParamRole::Trainable, &mut self.conv.weight);
        push(out, prefix, "conv.bias", ParamRole::Trainable, &mut self.conv.bias);
        push(out, prefix, "bn.gamma", ParamRole::Trainable, &mut self.bn.gamma);
        push(out, prefix, "bn.beta", ParamRole::Trainable, &mut self.bn.beta);
        push(out, prefix, "bn.running_mean", ParamRole::Buffer, &mut self.bn.running_mean);
        push(out, prefix, "bn.running_var", ParamRole::Buffer, &mut self.bn.running_var);
        push(out, prefix, "prelu.slope", ParamRole::Trainable, &mut self.act.slope);
    }
}

/// Two conv units plus an identity (or 1x1 projected) skip added to the
/// output.
pub struct ResidualBlock<T: Scalar = f32> {
    pub first: ConvUnit<T>,
    pub second: ConvUnit<T>,
    pub projection: Option<ConvLayer<T>>,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new<R: Rng>(in_channels: usize, out_channels: usize, rng: &mut R) -> Result<Self> {
        let first = ConvUnit::new(ConvGeom::same(in_channels, out_channels, 3, 1)?, rng)?;
        let second = ConvUnit::new(ConvGeom::same(out_channels, out_channels, 3, 1)?, rng)?;
        let projection = if in_channels != out_channels {
            Some(ConvLayer::new(ConvGeom::new(in_channels, out_channels, 1, 1, 1, 0)?, rng))
        } else {
            None
        };
        Ok(ResidualBlock { first, second, projection })
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let skip = match &mut self.projection {
            Some(p) => p.forward(x.clone())?,
            None => x.clone(),
        };
        let mut y = self.second.forward(self.first.forward(x)?)?;
        y.add_assign(&skip)?;
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = self.second.infer(&self.first.infer(x)?)?;
        match &self.projection {
            Some(p) => y.add_assign(&p.infer(x)?)?,
            None => y.add_assign(x)?,
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad_y: Tensor<T>) -> Result<Tensor<T>> {
        let skip_grad = match &mut self.projection {
            Some(p) => p.backward(grad_y.clone())?,
            None => grad_y.clone(),
        };
        let mut g = self.first.backward(self.second.backward(grad_y)?)?;
        g.add_assign(&skip_grad)?;
        Ok(g)
    }

    pub(crate) fn register<'a>(&'a mut self, prefix: &str, out: &mut Registry<'a, T>) {
        self.first.register(&format!("{}.conv0", prefix), out);
        self.second.register(&format!("{}.conv1", prefix), out);
        if let Some(p) = &mut self.projection {
            p.register(&format!("{}.proj", prefix), out);
        }
    }
}
