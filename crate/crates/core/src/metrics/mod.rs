//! Overlap and surface-distance segmentation metrics, and the paired
//! one-tailed Wilcoxon signed-rank test used to compare models.
//!
//! Metrics are `Option`-valued: `None` flags a structure that is absent
//! (so the metric is undefined) and lets aggregation skip it explicitly.

mod overlap;
mod surface;
mod wilcoxon;

use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};

pub use overlap::{dsc, pooled_dsc};
pub use surface::{assd, distance_to_set, surface};
pub use wilcoxon::{wilcoxon_normal_approx, wilcoxon_one_tailed, WilcoxonResult, EXACT_LIMIT};

/// Segmentation classes, in label-code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Class {
    Background = 0,
    Lumen = 1,
    Wall = 2,
    Tumor = 3,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::Background, Class::Lumen, Class::Wall, Class::Tumor];
    pub const FOREGROUND: [Class; 3] = [Class::Lumen, Class::Wall, Class::Tumor];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Class> {
        Class::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Background => "background",
            Class::Lumen => "lumen",
            Class::Wall => "wall",
            Class::Tumor => "tumor",
        }
    }

    pub fn from_name(name: &str) -> Option<Class> {
        Class::ALL.iter().copied().find(|c| c.name() == name)
    }
}

/// Physical pixel size in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing {
    pub row_mm: f64,
    pub col_mm: f64,
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing { row_mm: 0.5, col_mm: 0.5 }
    }
}

/// Per-pixel class codes on an `H x W` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    codes: Vec<u8>,
    spacing: Spacing,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, codes: Vec<u8>) -> Result<Self> {
        Self::with_spacing(height, width, codes, Spacing::default())
    }

    pub fn with_spacing(height: usize, width: usize, codes: Vec<u8>, spacing: Spacing) -> Result<Self> {
        if height == 0 || width == 0 || codes.len() != height * width {
            return Err(shape_err!("{} codes for a {}x{} label map", codes.len(), height, width));
        }
        if let Some(&bad) = codes.iter().find(|&&c| c as usize >= Class::ALL.len()) {
            return Err(Error::Label(alloc::format!("class code {} is not in 0..4", bad)));
        }
        if !(spacing.row_mm > 0.0 && spacing.col_mm > 0.0) {
            return Err(Error::Domain(alloc::format!("pixel spacing must be positive: {:?}", spacing)));
        }
        Ok(LabelMap { height, width, codes, spacing })
    }

    pub fn filled(height: usize, width: usize, class: Class) -> Result<Self> {
        Self::new(height, width, alloc::vec![class.code(); height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn set_spacing(&mut self, spacing: Spacing) -> Result<()> {
        if !(spacing.row_mm > 0.0 && spacing.col_mm > 0.0) {
            return Err(Error::Domain(alloc::format!("pixel spacing must be positive: {:?}", spacing)));
        }
        self.spacing = spacing;
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.codes[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: Class) {
        self.codes[row * self.width + col] = class.code();
    }

    pub fn count(&self, class: Class) -> usize {
        self.codes.iter().filter(|&&c| c == class.code()).count()
    }

    fn same_grid(&self, other: &LabelMap) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(shape_err!(
                "label maps differ in extent: {}x{} vs {}x{}",
                self.height,
                self.width,
                other.height,
                other.width
            ));
        }
        Ok(())
    }
}

/// Per-class DSC and ASSD (mm), indexed by class code.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub dsc: [Option<f64>; 4],
    pub assd_mm: [Option<f64>; 4],
}

impl MetricReport {
    pub fn dsc(&self, class: Class) -> Option<f64> {
        self.dsc[class as usize]
    }

    pub fn assd(&self, class: Class) -> Option<f64> {
        self.assd_mm[class as usize]
    }
}

/// DSC and ASSD of `pred` against `truth` for every class.
pub fn evaluate(pred: &LabelMap, truth: &LabelMap) -> Result<MetricReport> {
    let mut report = MetricReport { dsc: [None; 4], assd_mm: [None; 4] };
    for class in Class::ALL {
        report.dsc[class as usize] = dsc(pred, truth, class)?;
        report.assd_mm[class as usize] = assd(pred, truth, class)?;
    }
    Ok(report)
}

/// Mean and population standard deviation of the defined values, or
/// `None` when every value is undefined.
pub fn mean_std(values: &[Option<f64>]) -> Option<(f64, f64)> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return None;
    }
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, libm::sqrt(var)))
}
