//! Binary 8-bit PGM (`P5`) export for visual inspection.

use std::fs;
use std::path::Path;

use dilseg_core::metrics::LabelMap;
use dilseg_core::Tensor;

use crate::error::{IoError, IoResult};

pub fn encode(height: usize, width: usize, pixels: &[u8]) -> IoResult<Vec<u8>> {
    if pixels.len() != height * width {
        return Err(IoError::Format(format!("{} pixels for a {}x{} image", pixels.len(), height, width)));
    }
    let mut out = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Maps `[0, 1]` to `0..=255`; channel 0 of sample 0.
pub fn image_pixels(image: &Tensor<f32>) -> Vec<u8> {
    let plane = image.shape().plane();
    image.data()[..plane].iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

/// Spreads the four class codes over the grey range.
pub fn label_pixels(labels: &LabelMap) -> Vec<u8> {
    labels.codes().iter().map(|&c| c.saturating_mul(85)).collect()
}

pub fn write_image(path: &Path, image: &Tensor<f32>) -> IoResult<()> {
    let s = image.shape();
    let bytes = encode(s.h(), s.w(), &image_pixels(image))?;
    fs::write(path, bytes).map_err(|e| IoError::Path(path.display().to_string(), e))
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> IoResult<()> {
    let bytes = encode(labels.height(), labels.width(), &label_pixels(labels))?;
    fs::write(path, bytes).map_err(|e| IoError::Path(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_payload() {
        let b = encode(2, 3, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(&b[..11], b"P5\n3 2\n255\n");
        assert_eq!(&b[11..], &[0, 1, 2, 3, 4, 5]);
        assert!(encode(2, 2, &[0]).is_err());
    }

    #[test]
    fn label_grey_levels() {
        let l = LabelMap::new(1, 4, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(label_pixels(&l), [0, 85, 170, 255]);
    }
}
