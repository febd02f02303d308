use super::{Class, LabelMap};
use crate::error::Result;

/// `2|A ∩ B| / (|A| + |B|)` for the pixels of `class`; `None` when both
/// masks are empty.
pub fn dsc(a: &LabelMap, b: &LabelMap, class: Class) -> Result<Option<f64>> {
    a.same_grid(b)?;
    let code = class.code();
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.codes().iter().zip(b.codes()) {
        let (ia, ib) = (x == code, y == code);
        na += ia as usize;
        nb += ib as usize;
        inter += (ia && ib) as usize;
    }
    if na + nb == 0 {
        return Ok(None);
    }
    Ok(Some(2.0 * inter as f64 / (na + nb) as f64))
}

/// DSC over a stack of slices treated as one volume.
pub fn pooled_dsc(a: &[LabelMap], b: &[LabelMap], class: Class) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(crate::error::shape_err!("{} vs {} slices", a.len(), b.len()));
    }
    let code = class.code();
    let (mut inter, mut total) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        x.same_grid(y)?;
        for (&p, &q) in x.codes().iter().zip(y.codes()) {
            total += (p == code) as usize + (q == code) as usize;
            inter += (p == code && q == code) as usize;
        }
    }
    Ok((total > 0).then(|| 2.0 * inter as f64 / total as f64))
}
