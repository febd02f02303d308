//! Declarative network descriptions and their layer layout.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{ConvGeom, CLASS_COUNT};

/// Number of resolution levels in the encoder (and upsampling modules in
/// the decoder). Inputs must be divisible by `2^DEPTH`.
pub const DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Two-conv blocks, max pooling, upsample + conv decoding, no residual bridge.
    UnetOriginal,
    /// Three-conv blocks, strided downsampling, residual bridge, all dilations 1.
    UnetBaseline,
    /// Baseline whose first conv per encoder block is dilated 1, 2, 4, 8 by depth.
    UnetDilated,
    /// Baseline whose encoder blocks use dilations 1, 2, 4.
    UnetProgressive,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] =
        [ModelKind::UnetOriginal, ModelKind::UnetBaseline, ModelKind::UnetDilated, ModelKind::UnetProgressive];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::UnetOriginal => "unet_original",
            ModelKind::UnetBaseline => "unet_baseline",
            ModelKind::UnetDilated => "unet_dilated",
            ModelKind::UnetProgressive => "unet_progressive",
        }
    }

    /// Block type of encoder level `level` (1-based).
    pub fn encoder_block(self, level: usize) -> BlockKind {
        match self {
            ModelKind::UnetOriginal => BlockKind::Pair,
            ModelKind::UnetBaseline => BlockKind::Standard,
            ModelKind::UnetDilated => BlockKind::DilatedHead(1 << (level - 1)),
            ModelKind::UnetProgressive => BlockKind::Progressive,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown model name {:?}", s)))
    }
}

/// Dilation pattern of one encoder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Two undilated convolutions (original UNet).
    Pair,
    /// Three undilated convolutions.
    Standard,
    /// Three convolutions, the first dilated by the given rate.
    DilatedHead(usize),
    /// Three convolutions dilated 1, 2, 4.
    Progressive,
}

impl BlockKind {
    pub fn dilations(self) -> Vec<usize> {
        match self {
            BlockKind::Pair => alloc::vec![1, 1],
            BlockKind::Standard => alloc::vec![1, 1, 1],
            BlockKind::DilatedHead(d) => alloc::vec![d, 1, 1],
            BlockKind::Progressive => alloc::vec![1, 2, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetSpec {
    pub kind: ModelKind,
    /// Channels of the first encoder block; doubled at every level.
    pub base_width: usize,
    pub classes: usize,
    pub input_channels: usize,
    /// Expected square input extent, if fixed.
    pub input_size: Option<usize>,
}

impl NetSpec {
    pub fn new(kind: ModelKind) -> Self {
        NetSpec { kind, base_width: 32, classes: CLASS_COUNT, input_channels: 1, input_size: None }
    }

    pub fn with_base_width(mut self, width: usize) -> Self {
        self.base_width = width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::Construction("base_width must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Construction(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.input_channels == 0 {
            return Err(Error::Construction("input_channels must be positive".into()));
        }
        if let Some(size) = self.input_size {
            if size == 0 || size % (1 << DEPTH) != 0 {
                return Err(Error::Construction(format!(
                    "input_size {} is not a positive multiple of {}",
                    size,
                    1 << DEPTH
                )));
            }
        }
        Ok(())
    }

    /// Width of encoder level `level` (1-based); level `DEPTH + 1` is the bridge.
    pub fn width(&self, level: usize) -> usize {
        self.base_width << (level - 1)
    }

    pub fn bridge_width(&self) -> usize {
        self.width(DEPTH + 1)
    }

    pub fn has_residual_bridge(&self) -> bool {
        self.kind != ModelKind::UnetOriginal
    }

    /// Every layer in forward order.
    pub fn layout(&self) -> Result<Vec<LayerDesc>> {
        self.validate()?;
        let mut out = Vec::new();
        let conv = |out: &mut Vec<LayerDesc>, name: String, stage: Stage, geom: ConvGeom| {
            out.push(LayerDesc { name, stage, op: LayerOp::Conv(geom) });
        };
        let mut ch = self.input_channels;
        for level in 1..=DEPTH {
            let w = self.width(level);
            for (i, &d) in self.kind.encoder_block(level).dilations().iter().enumerate() {
                conv(&mut out, format!("enc{}.conv{}", level, i), Stage::Encoder(level), ConvGeom::same(ch, w, 3, d)?);
                ch = w;
            }
            let next = self.width(level + 1);
            if self.kind == ModelKind::UnetOriginal {
                out.push(LayerDesc { name: format!("enc{}.pool", level), stage: Stage::Down(level), op: LayerOp::MaxPool });
            } else {
                conv(&mut out, format!("enc{}.down", level), Stage::Down(level), ConvGeom::new(ch, next, 3, 1, 2, 1)?);
                ch = next;
            }
        }
        let bw = self.bridge_width();
        for i in 0..2 {
            conv(&mut out, format!("bridge.conv{}", i), Stage::Bridge, ConvGeom::same(ch, bw, 3, 1)?);
            ch = bw;
        }
        if self.has_residual_bridge() {
            for i in 0..2 {
                conv(&mut out, format!("bridge.res.conv{}", i), Stage::Residual, ConvGeom::same(bw, bw, 3, 1)?);
            }
        }
        for level in (1..=DEPTH).rev() {
            let w = self.width(level);
            out.push(LayerDesc { name: format!("dec{}.up", level), stage: Stage::Decoder(level), op: LayerOp::Upsample });
            let convs = if self.kind == ModelKind::UnetOriginal {
                conv(&mut out, format!("dec{}.upconv", level), Stage::Decoder(level), ConvGeom::same(ch, w, 3, 1)?);
                ch = w;
                2
            } else {
                4
            };
            ch += w;
            for i in 0..convs {
                conv(&mut out, format!("dec{}.conv{}", level, i), Stage::Decoder(level), ConvGeom::same(ch, w, 3, 1)?);
                ch = w;
            }
        }
        conv(&mut out, "head".to_string(), Stage::Head, ConvGeom::new(ch, self.classes, 1, 1, 1, 0)?);
        Ok(out)
    }

    /// Convolution counts `(encoder incl. downsampling, bridge, decoder incl. head)`.
    pub fn conv_counts(&self) -> Result<(usize, usize, usize)> {
        let mut counts = (0, 0, 0);
        for l in self.layout()? {
            if let LayerOp::Conv(_) = l.op {
                match l.stage {
                    Stage::Encoder(_) | Stage::Down(_) => counts.0 += 1,
                    Stage::Bridge | Stage::Residual => counts.1 += 1,
                    Stage::Decoder(_) | Stage::Head => counts.2 += 1,
                }
            }
        }
        Ok(counts)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut spec = NetSpec::new(ModelKind::UnetProgressive);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: {} is not an integer: {:?}", lineno + 1, key, v)))
            };
            match key {
                "name" => kind = Some(value.parse::<ModelKind>()?),
                "base_width" => spec.base_width = num(value)?,
                "classes" => spec.classes = num(value)?,
                "input_channels" => spec.input_channels = num(value)?,
                "input_size" => spec.input_size = Some(num(value)?),
                other => return Err(Error::Parse(format!("line {}: unknown key {:?}", lineno + 1, other))),
            }
        }
        spec.kind = kind.ok_or_else(|| Error::Parse("missing `name`".into()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "name = {}\nbase_width = {}\nclasses = {}\ninput_channels = {}\n",
            self.kind, self.base_width, self.classes, self.input_channels
        );
        if let Some(size) = self.input_size {
            s.push_str(&format!("input_size = {}\n", size));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Convolutional block at encoder level (1-based).
    Encoder(usize),
    /// Downsampling after encoder level.
    Down(usize),
    /// Plain bridge convolutions.
    Bridge,
    /// Convolutions inside the bridge's residual block.
    Residual,
    /// Upsampling module restoring encoder level.
    Decoder(usize),
    /// Final 1x1 classifier.
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOp {
    Conv(ConvGeom),
    MaxPool,
    Upsample,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDesc {
    pub name: String,
    pub stage: Stage,
    pub op: LayerOp,
}
