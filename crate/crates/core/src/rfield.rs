//! Geometric receptive-field calculator and gridding-coverage analyzer.
//!
//! Per layer the effective kernel is `k + (k - 1)(D - 1)`. Across layers,
//! `RF_l = RF_{l-1} + (k_l - 1) * D_l * jump_{l-1}` and
//! `jump_l = jump_{l-1} * s_l`, starting from `RF_0 = jump_0 = 1`. Nearest
//! 2x upsampling halves the jump and leaves the field unchanged.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::arch::{LayerOp, NetSpec, Stage};
use crate::error::{Error, Result};

/// A layer as seen by the receptive-field composition.
#[derive(Debug, Clone, PartialEq)]
pub struct RfLayer {
    pub label: String,
    pub kind: RfKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfKind {
    /// Square window (convolution or pooling) with dilation and stride.
    Window { kernel: usize, dilation: usize, stride: usize },
    /// Nearest-neighbour 2x upsampling.
    Upsample2x,
}

impl RfLayer {
    pub fn conv(label: impl Into<String>, kernel: usize, dilation: usize, stride: usize) -> Self {
        RfLayer { label: label.into(), kind: RfKind::Window { kernel, dilation, stride } }
    }

    pub fn upsample(label: impl Into<String>) -> Self {
        RfLayer { label: label.into(), kind: RfKind::Upsample2x }
    }
}

/// Builds anonymous stride-1 layers from `(k, D, s)` triples.
pub fn layers_from_triples(triples: &[(usize, usize, usize)]) -> Vec<RfLayer> {
    triples
        .iter()
        .enumerate()
        .map(|(i, &(k, d, s))| RfLayer::conv(alloc::format!("layer{}", i + 1), k, d, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfLayerReport {
    pub label: String,
    pub kind: RfKind,
    /// `None` for upsampling.
    pub effective_kernel: Option<usize>,
    /// Cumulative field in input pixels per spatial dimension.
    pub receptive_field: f64,
    /// Input pixels between adjacent units of this layer's output.
    pub jump: f64,
}

/// Contributing input positions inside the `RF x RF` window of one
/// output unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coverage {
    pub contributing: u64,
    pub window: u64,
}

impl Coverage {
    pub fn density(&self) -> f64 {
        self.contributing as f64 / self.window as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfReport {
    pub layers: Vec<RfLayerReport>,
    pub receptive_field: f64,
    pub jump: f64,
    /// Present when every layer has stride 1.
    pub coverage: Option<Coverage>,
}

/// `k + (k - 1)(D - 1)`.
pub fn effective_kernel(kernel: usize, dilation: usize) -> Result<usize> {
    if kernel == 0 || dilation == 0 {
        return Err(Error::Domain(alloc::format!(
            "kernel ({}) and dilation ({}) must be positive",
            kernel,
            dilation
        )));
    }
    Ok(kernel + (kernel - 1) * (dilation - 1))
}

pub fn compose_rf(layers: &[RfLayer]) -> Result<RfReport> {
    if layers.is_empty() {
        return Err(Error::Domain("receptive field of an empty layer list".into()));
    }
    let mut rf = 1.0f64;
    let mut jump = 1.0f64;
    let mut out = Vec::with_capacity(layers.len());
    for layer in layers {
        let eff = match layer.kind {
            RfKind::Window { kernel, dilation, stride } => {
                if stride == 0 {
                    return Err(Error::Domain(alloc::format!("layer {} has stride 0", layer.label)));
                }
                let eff = effective_kernel(kernel, dilation)?;
                rf += ((kernel - 1) * dilation) as f64 * jump;
                jump *= stride as f64;
                Some(eff)
            }
            RfKind::Upsample2x => {
                jump /= 2.0;
                None
            }
        };
        out.push(RfLayerReport {
            label: layer.label.clone(),
            kind: layer.kind,
            effective_kernel: eff,
            receptive_field: rf,
            jump,
        });
    }
    let coverage = gridding_coverage(layers).ok();
    Ok(RfReport { layers: out, receptive_field: rf, jump, coverage })
}

/// Reachable 1D tap-offset sums of a stride-1 stack, indexed from the
/// leftmost possible offset. Square kernels make the 2D set the product of
/// this set with itself.
pub fn reachable_offsets(layers: &[RfLayer]) -> Result<Vec<bool>> {
    if layers.is_empty() {
        return Err(Error::Domain("coverage of an empty layer list".into()));
    }
    let mut taps_per_layer = Vec::with_capacity(layers.len());
    let mut radius = 0usize;
    for layer in layers {
        match layer.kind {
            RfKind::Window { kernel, dilation, stride: 1 } => {
                effective_kernel(kernel, dilation)?;
                taps_per_layer.push((kernel, dilation));
                radius += (kernel - 1) * dilation;
            }
            _ => {
                return Err(Error::Unsupported(alloc::format!(
                    "coverage needs stride-1 windows, layer {} is {:?}",
                    layer.label,
                    layer.kind
                )))
            }
        }
    }
    let side = radius + 1;
    let mut reach = vec![false; side];
    reach[0] = true;
    let mut extent = 1usize;
    for &(kernel, dilation) in &taps_per_layer {
        let mut next = vec![false; side];
        for (p, _) in reach.iter().enumerate().take(extent).filter(|(_, r)| **r) {
            for u in 0..kernel {
                next[p + u * dilation] = true;
            }
        }
        extent += (kernel - 1) * dilation;
        reach = next;
    }
    Ok(reach)
}

/// Counts the input positions that contribute to the centre output unit of
/// a stride-1 stack, out of the full square window.
pub fn gridding_coverage(layers: &[RfLayer]) -> Result<Coverage> {
    let reach = reachable_offsets(layers)?;
    let per_axis = reach.iter().filter(|&&r| r).count() as u64;
    let window = reach.len() as u64;
    Ok(Coverage { contributing: per_axis * per_axis, window: window * window })
}

/// Which part of a network enters the receptive-field composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accounting {
    /// Encoder blocks and their downsampling layers.
    Encoder,
    /// Encoder plus the bridge's plain convolutions.
    EncoderBridge,
    /// Encoder plus the whole bridge, residual block included.
    EncoderBridgeResidual,
}

impl Accounting {
    pub const ALL: [Accounting; 3] = [Accounting::Encoder, Accounting::EncoderBridge, Accounting::EncoderBridgeResidual];
    /// The accounting used for the headline figure.
    pub const HEADLINE: Accounting = Accounting::Encoder;

    pub fn describe(self) -> &'static str {
        match self {
            Accounting::Encoder => "encoder blocks + downsampling",
            Accounting::EncoderBridge => "encoder + bridge convs",
            Accounting::EncoderBridgeResidual => "encoder + bridge convs + residual block",
        }
    }

    fn includes(self, stage: Stage) -> bool {
        match stage {
            Stage::Encoder(_) | Stage::Down(_) => true,
            Stage::Bridge => self != Accounting::Encoder,
            Stage::Residual => self == Accounting::EncoderBridgeResidual,
            Stage::Decoder(_) | Stage::Head => false,
        }
    }
}

/// RF layers of the contracting path of `spec` under `accounting`. Max
/// pooling enters as a 2x2 window with stride 2.
pub fn network_layers(spec: &NetSpec, accounting: Accounting) -> Result<Vec<RfLayer>> {
    let mut out = Vec::new();
    for desc in spec.layout()? {
        if !accounting.includes(desc.stage) {
            continue;
        }
        match desc.op {
            LayerOp::Conv(g) => out.push(RfLayer::conv(desc.name, g.kernel, g.dilation, g.stride)),
            LayerOp::MaxPool => out.push(RfLayer::conv(desc.name, 2, 1, 2)),
            LayerOp::Upsample => out.push(RfLayer::upsample(desc.name)),
        }
    }
    Ok(out)
}

pub fn network_rf(spec: &NetSpec, accounting: Accounting) -> Result<RfReport> {
    compose_rf(&network_layers(spec, accounting)?)
}
