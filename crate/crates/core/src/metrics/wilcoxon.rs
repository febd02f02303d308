//! Paired one-tailed Wilcoxon signed-rank test.
//!
//! The alternative is that `x` tends to exceed `y`: the statistic is the
//! rank sum of the positive differences `x - y`, and the p-value is the
//! upper-tail probability under the symmetric null. Zero differences are
//! dropped and tied magnitudes share the average rank.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest number of nonzero differences evaluated exactly.
pub const EXACT_LIMIT: usize = 12;

const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Nonzero differences and their doubled average ranks (integers, so
/// half ranks from ties stay exact).
fn signed_ranks(x: &[f64], y: &[f64]) -> Result<Option<(Vec<f64>, Vec<u64>)>> {
    if x.len() != y.len() {
        return Err(Error::Domain(alloc::format!("paired samples differ in length: {} vs {}", x.len(), y.len())));
    }
    if x.len() < MIN_PAIRS {
        return Err(Error::Domain(alloc::format!("need at least {} pairs, got {}", MIN_PAIRS, x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("paired samples must be finite".into()));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| libm::fabs(diffs[i]).total_cmp(&libm::fabs(diffs[j])));
    let mut ranks2 = alloc::vec![0u64; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && libm::fabs(diffs[order[j + 1]]) == libm::fabs(diffs[order[i]]) {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, doubled
        let r2 = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            ranks2[k] = r2;
        }
        i = j + 1;
    }
    Ok(Some((diffs, ranks2)))
}

/// One-tailed test of `x > y`. Exact enumeration of all sign assignments
/// when at most [`EXACT_LIMIT`] differences are nonzero, otherwise the
/// normal approximation with continuity correction. `Ok(None)` flags an
/// undefined test (every difference is zero).
pub fn wilcoxon_one_tailed(x: &[f64], y: &[f64]) -> Result<Option<WilcoxonResult>> {
    let Some((diffs, ranks2)) = signed_ranks(x, y)? else {
        return Ok(None);
    };
    let n = diffs.len();
    let observed2: u64 = diffs.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    if n > EXACT_LIMIT {
        return Ok(Some(normal_tail(n, observed2, &ranks2)));
    }
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        let mut w2 = 0u64;
        for (bit, r) in ranks2.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                w2 += r;
            }
        }
        if w2 >= observed2 {
            hits += 1;
        }
    }
    Ok(Some(WilcoxonResult {
        w_plus: observed2 as f64 / 2.0,
        n,
        p_value: hits as f64 / (1u64 << n) as f64,
        exact: true,
    }))
}

/// Normal approximation regardless of sample size.
pub fn wilcoxon_normal_approx(x: &[f64], y: &[f64]) -> Result<Option<WilcoxonResult>> {
    let Some((diffs, ranks2)) = signed_ranks(x, y)? else {
        return Ok(None);
    };
    let observed2: u64 = diffs.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    Ok(Some(normal_tail(diffs.len(), observed2, &ranks2)))
}

fn normal_tail(n: usize, observed2: u64, ranks2: &[u64]) -> WilcoxonResult {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
    let mut sorted: Vec<u64> = ranks2.to_vec();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        var -= (t * t * t - t) / 48.0;
    }
    let w = observed2 as f64 / 2.0;
    let p = if var > 0.0 {
        let z = (w - mean - 0.5) / libm::sqrt(var);
        0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
    } else {
        1.0
    };
    WilcoxonResult { w_plus: w, n, p_value: p.clamp(0.0, 1.0), exact: false }
}
