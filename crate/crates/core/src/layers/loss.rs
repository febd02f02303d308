//! Per-pixel softmax and cross-entropy against integer label maps.

use crate::error::{shape_err, Error, Result};
use crate::metrics::LabelMap;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Background, lumen, wall, tumor.
pub const CLASS_COUNT: usize = 4;

/// Channel-wise softmax at every pixel, with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let s = logits.shape();
    let (c, plane) = (s.c(), s.plane());
    let mut out = logits.clone();
    for n in 0..s.n() {
        let sample = out.sample_mut(n);
        for px in 0..plane {
            let mut mx = T::neg_infinity();
            for ch in 0..c {
                mx = mx.max(sample[ch * plane + px]);
            }
            let mut z = T::zero();
            for ch in 0..c {
                let e = (sample[ch * plane + px] - mx).exp();
                sample[ch * plane + px] = e;
                z += e;
            }
            for ch in 0..c {
                sample[ch * plane + px] /= z;
            }
        }
    }
    out
}

/// Mean cross-entropy over all pixels of the batch and its gradient
/// `(softmax - onehot) / pixel_count`. `targets[n]` labels sample `n`.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, targets: &[LabelMap]) -> Result<(T, Tensor<T>)> {
    let s = logits.shape();
    if targets.len() != s.n() {
        return Err(shape_err!("{} label maps for a batch of {}", targets.len(), s.n()));
    }
    let plane = s.plane();
    for t in targets {
        if t.height() != s.h() || t.width() != s.w() {
            return Err(shape_err!(
                "label map {}x{} does not match logits {}",
                t.height(),
                t.width(),
                s
            ));
        }
        if let Some(&bad) = t.codes().iter().find(|&&v| v as usize >= s.c()) {
            return Err(Error::Label(alloc::format!("label {} outside {} classes", bad, s.c())));
        }
    }
    let mut grad = softmax(logits);
    let count = T::of((s.n() * plane) as f64);
    let mut loss = T::zero();
    for (n, t) in targets.iter().enumerate() {
        let sample = grad.sample_mut(n);
        for (px, &label) in t.codes().iter().enumerate() {
            let i = label as usize * plane + px;
            // clamp keeps the loss finite when a probability underflows
            loss -= sample[i].max(T::min_positive_value()).ln();
            sample[i] -= T::one();
        }
    }
    grad.scale(T::one() / count);
    Ok((loss / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn labels(h: usize, w: usize, codes: &[u8]) -> LabelMap {
        LabelMap::new(h, w, codes.to_vec()).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln4() {
        let logits = Tensor::<f64>::zeros(Shape::new(1, 4, 2, 2).unwrap());
        let (loss, _) = softmax_xent(&logits, &[labels(2, 2, &[0, 1, 2, 3])]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn saturated_target_gives_zero_loss() {
        let mut logits = Tensor::<f64>::zeros(Shape::new(1, 4, 1, 1).unwrap());
        logits.data_mut()[2] = 100.0;
        let (loss, _) = softmax_xent(&logits, &[labels(1, 1, &[2])]).unwrap();
        assert!(loss < 1e-40);
    }

    #[test]
    fn softmax_sums_to_one() {
        let logits = Tensor::<f32>::from_fn(Shape::new(2, 4, 3, 3).unwrap(), |i| (i as f32 * 0.77).sin() * 30.0);
        let p = softmax(&logits);
        for n in 0..2 {
            for px in 0..9 {
                let s: f32 = (0..4).map(|c| p.sample(n)[c * 9 + px]).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn label_and_shape_errors() {
        let three = Tensor::<f64>::zeros(Shape::new(1, 3, 1, 2).unwrap());
        assert!(matches!(softmax_xent(&three, &[labels(1, 2, &[0, 3])]), Err(Error::Label(_))));
        let logits = Tensor::<f64>::zeros(Shape::new(1, 4, 1, 2).unwrap());
        assert!(matches!(softmax_xent(&logits, &[labels(2, 1, &[0, 0])]), Err(Error::Shape(_))));
        assert!(matches!(softmax_xent(&logits, &[]), Err(Error::Shape(_))));
    }
}
