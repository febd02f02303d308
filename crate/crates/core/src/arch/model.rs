//! Trainable encoder-decoder networks built from a [`NetSpec`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::{
    concat_channels, maxpool2x2_backward, maxpool2x2_forward, split_channels, upsample_nearest2x,
    upsample_nearest2x_backward, ConvGeom, Mode, PoolIndices,
};
use crate::optim::seeded_rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::spec::{LayerOp, ModelKind, NetSpec, DEPTH};
use super::units::{ConvLayer, ConvUnit, NamedParam, ParamRole, Registry, ResidualBlock};

enum Down<T: Scalar> {
    Conv(ConvUnit<T>),
    Pool(Option<PoolIndices>),
}

struct EncoderLevel<T: Scalar> {
    units: Vec<ConvUnit<T>>,
    down: Down<T>,
}

struct DecoderLevel<T: Scalar> {
    level: usize,
    upconv: Option<ConvUnit<T>>,
    units: Vec<ConvUnit<T>>,
    /// Channels contributed by the upsampled path to the concatenation.
    up_channels: usize,
}

/// A segmentation network. Parameters are initialized deterministically
/// from the construction seed.
pub struct Model<T: Scalar = f32> {
    spec: NetSpec,
    encoder: Vec<EncoderLevel<T>>,
    bridge: Vec<ConvUnit<T>>,
    residual: Option<ResidualBlock<T>>,
    decoder: Vec<DecoderLevel<T>>,
    head: ConvLayer<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(spec: &NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded_rng(seed);
        let mut ch = spec.input_channels;
        let mut encoder = Vec::with_capacity(DEPTH);
        for level in 1..=DEPTH {
            let w = spec.width(level);
            let mut units = Vec::new();
            for d in spec.kind.encoder_block(level).dilations() {
                units.push(ConvUnit::new(ConvGeom::same(ch, w, 3, d)?, &mut rng)?);
                ch = w;
            }
            let down = if spec.kind == ModelKind::UnetOriginal {
                Down::Pool(None)
            } else {
                let next = spec.width(level + 1);
                let unit = ConvUnit::new(ConvGeom::new(ch, next, 3, 1, 2, 1)?, &mut rng)?;
                ch = next;
                Down::Conv(unit)
            };
            encoder.push(EncoderLevel { units, down });
        }
        let bw = spec.bridge_width();
        let mut bridge = Vec::with_capacity(2);
        for _ in 0..2 {
            bridge.push(ConvUnit::new(ConvGeom::same(ch, bw, 3, 1)?, &mut rng)?);
            ch = bw;
        }
        let residual = if spec.has_residual_bridge() { Some(ResidualBlock::new(bw, bw, &mut rng)?) } else { None };
        let mut decoder = Vec::with_capacity(DEPTH);
        for level in (1..=DEPTH).rev() {
            let w = spec.width(level);
            let (upconv, convs) = if spec.kind == ModelKind::UnetOriginal {
                let unit = ConvUnit::new(ConvGeom::same(ch, w, 3, 1)?, &mut rng)?;
                ch = w;
                (Some(unit), 2)
            } else {
                (None, 4)
            };
            let up_channels = ch;
            ch += w;
            let mut units = Vec::with_capacity(convs);
            for _ in 0..convs {
                units.push(ConvUnit::new(ConvGeom::same(ch, w, 3, 1)?, &mut rng)?);
                ch = w;
            }
            decoder.push(DecoderLevel { level, upconv, units, up_channels });
        }
        let head = ConvLayer::new(ConvGeom::new(ch, spec.classes, 1, 1, 1, 0)?, &mut rng);
        Ok(Model { spec: spec.clone(), encoder, bridge, residual, decoder, head })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        let m = 1 << DEPTH;
        if s.c() != self.spec.input_channels {
            return Err(Error::Shape(format!(
                "{} expects {} input channel(s), got {}",
                self.spec.kind,
                self.spec.input_channels,
                s.c()
            )));
        }
        if s.h() % m != 0 || s.w() % m != 0 {
            return Err(Error::Shape(format!("input extent {}x{} is not divisible by {}", s.h(), s.w(), m)));
        }
        if let Some(size) = self.spec.input_size {
            if s.h() != size || s.w() != size {
                return Err(Error::Shape(format!("expected {}x{} input, got {}x{}", size, size, s.h(), s.w())));
            }
        }
        Ok(())
    }

    /// Runs the network. In [`Mode::Train`] batch statistics are used, running
    /// statistics are updated and activations are cached for [`backward`](Self::backward).
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match mode {
            Mode::Infer => self.infer(x),
            Mode::Train => self.forward_train(x),
        }
    }

    fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut skips = Vec::with_capacity(DEPTH);
        for level in &mut self.encoder {
            for u in &mut level.units {
                h = u.forward(h)?;
            }
            skips.push(h.clone());
            h = match &mut level.down {
                Down::Conv(u) => u.forward(h)?,
                Down::Pool(idx) => {
                    let (y, i) = maxpool2x2_forward(&h)?;
                    *idx = Some(i);
                    y
                }
            };
        }
        for u in &mut self.bridge {
            h = u.forward(h)?;
        }
        if let Some(r) = &mut self.residual {
            h = r.forward(h)?;
        }
        for dec in &mut self.decoder {
            h = upsample_nearest2x(&h);
            if let Some(u) = &mut dec.upconv {
                h = u.forward(h)?;
            }
            h = concat_channels(&h, &skips[dec.level - 1])?;
            for u in &mut dec.units {
                h = u.forward(h)?;
            }
        }
        self.head.forward(h)
    }

    /// Inference with running statistics; the model is not modified.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut skips = Vec::with_capacity(DEPTH);
        for level in &self.encoder {
            for u in &level.units {
                h = u.infer(&h)?;
            }
            skips.push(h.clone());
            h = match &level.down {
                Down::Conv(u) => u.infer(&h)?,
                Down::Pool(_) => maxpool2x2_forward(&h)?.0,
            };
        }
        for u in &self.bridge {
            h = u.infer(&h)?;
        }
        if let Some(r) = &self.residual {
            h = r.infer(&h)?;
        }
        for dec in &self.decoder {
            h = upsample_nearest2x(&h);
            if let Some(u) = &dec.upconv {
                h = u.infer(&h)?;
            }
            h = concat_channels(&h, &skips[dec.level - 1])?;
            for u in &dec.units {
                h = u.infer(&h)?;
            }
        }
        self.head.infer(&h)
    }

    /// Back-propagates the loss gradient w.r.t. the logits of the last
    /// training forward pass, accumulating parameter gradients. Returns the
    /// gradient w.r.t. the input.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = self.head.backward(grad_logits.clone())?;
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..DEPTH).map(|_| None).collect();
        for dec in self.decoder.iter_mut().rev() {
            for u in dec.units.iter_mut().rev() {
                g = u.backward(g)?;
            }
            let (g_up, g_skip) = split_channels(&g, dec.up_channels)?;
            skip_grads[dec.level - 1] = Some(g_skip);
            g = g_up;
            if let Some(u) = &mut dec.upconv {
                g = u.backward(g)?;
            }
            g = upsample_nearest2x_backward(&g)?;
        }
        if let Some(r) = &mut self.residual {
            g = r.backward(g)?;
        }
        for u in self.bridge.iter_mut().rev() {
            g = u.backward(g)?;
        }
        for (i, level) in self.encoder.iter_mut().enumerate().rev() {
            g = match &mut level.down {
                Down::Conv(u) => u.backward(g)?,
                Down::Pool(idx) => {
                    let idx = idx.take().ok_or_else(|| Error::Shape("pool backward without forward".into()))?;
                    maxpool2x2_backward(&idx, &g)?
                }
            };
            let skip = skip_grads[i].take().ok_or_else(|| Error::Shape("missing skip gradient".into()))?;
            g.add_assign(&skip)?;
            for u in level.units.iter_mut().rev() {
                g = u.backward(g)?;
            }
        }
        Ok(g)
    }

    /// Every parameter and buffer in a fixed order with stable names.
    pub fn params_mut(&mut self) -> Vec<NamedParam<'_, T>> {
        let mut out: Registry<'_, T> = Vec::new();
        for (i, level) in self.encoder.iter_mut().enumerate() {
            for (j, u) in level.units.iter_mut().enumerate() {
                u.register(&format!("enc{}.conv{}", i + 1, j), &mut out);
            }
            if let Down::Conv(u) = &mut level.down {
                u.register(&format!("enc{}.down", i + 1), &mut out);
            }
        }
        for (j, u) in self.bridge.iter_mut().enumerate() {
            u.register(&format!("bridge.conv{}", j), &mut out);
        }
        if let Some(r) = &mut self.residual {
            r.register("bridge.res", &mut out);
        }
        for dec in &mut self.decoder {
            if let Some(u) = &mut dec.upconv {
                u.register(&format!("dec{}.upconv", dec.level), &mut out);
            }
            for (j, u) in dec.units.iter_mut().enumerate() {
                u.register(&format!("dec{}.conv{}", dec.level, j), &mut out);
            }
        }
        self.head.register("head", &mut out);
        out
    }

    /// Trainable tensors only, in [`params_mut`](Self::params_mut) order.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params_mut().into_iter().filter(|p| p.role == ParamRole::Trainable).map(|p| p.tensor).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.tensor.zero_grad();
        }
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&mut self) -> usize {
        self.trainable_mut().iter().map(|t| t.len()).sum()
    }

    /// Names and geometries of every convolution in forward order.
    pub fn conv_geoms(&self) -> Vec<(String, ConvGeom)> {
        let mut out = Vec::new();
        for (i, level) in self.encoder.iter().enumerate() {
            for (j, u) in level.units.iter().enumerate() {
                out.push((format!("enc{}.conv{}", i + 1, j), u.geom()));
            }
            if let Down::Conv(u) = &level.down {
                out.push((format!("enc{}.down", i + 1), u.geom()));
            }
        }
        for (j, u) in self.bridge.iter().enumerate() {
            out.push((format!("bridge.conv{}", j), u.geom()));
        }
        if let Some(r) = &self.residual {
            out.push(("bridge.res.conv0".into(), r.first.geom()));
            out.push(("bridge.res.conv1".into(), r.second.geom()));
        }
        for dec in &self.decoder {
            if let Some(u) = &dec.upconv {
                out.push((format!("dec{}.upconv", dec.level), u.geom()));
            }
            for (j, u) in dec.units.iter().enumerate() {
                out.push((format!("dec{}.conv{}", dec.level, j), u.geom()));
            }
        }
        out.push(("head".into(), self.head.geom()));
        out
    }
}

/// Trainable parameter count implied by a layout: every convolution except
/// the head carries batch normalization (2C) and a PReLU slope (C).
pub fn layout_parameter_count(spec: &NetSpec) -> Result<usize> {
    let mut total = 0;
    for desc in spec.layout()? {
        if let LayerOp::Conv(g) = desc.op {
            total += g.param_count();
            if desc.name != "head" {
                total += 3 * g.out_channels;
            }
        }
    }
    Ok(total)
}
