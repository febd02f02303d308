//! Brute-force overlap, surface distance and signed-rank references.

#![allow(dead_code)]

use dilseg_core::metrics::{Class, LabelMap, Spacing};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 64;

/// Union of a few random rectangles and disks, plus sparse speckle, so
/// surfaces have both long borders and isolated pixels.
pub fn random_mask(rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut m = vec![false; SIDE * SIDE];
    for _ in 0..rng.gen_range(0..4) {
        let (r0, c0) = (rng.gen_range(0..SIDE), rng.gen_range(0..SIDE));
        let (h, w) = (rng.gen_range(1..24), rng.gen_range(1..24));
        for r in r0..(r0 + h).min(SIDE) {
            for c in c0..(c0 + w).min(SIDE) {
                m[r * SIDE + c] = true;
            }
        }
    }
    for _ in 0..rng.gen_range(0..3) {
        let (cr, cc, rad) = (rng.gen_range(0.0..64.0), rng.gen_range(0.0..64.0), rng.gen_range(1.0..16.0));
        for r in 0..SIDE {
            for c in 0..SIDE {
                let (dr, dc): (f64, f64) = (r as f64 - cr, c as f64 - cc);
                if dr * dr + dc * dc <= rad * rad {
                    m[r * SIDE + c] = true;
                }
            }
        }
    }
    let speckle = rng.gen_range(0.0..0.02);
    for v in m.iter_mut() {
        if rng.gen_bool(speckle) {
            *v = !*v;
        }
    }
    m
}

pub fn to_map(mask: &[bool], class: Class) -> LabelMap {
    LabelMap::new(SIDE, SIDE, mask.iter().map(|&b| if b { class.code() } else { 0 }).collect()).unwrap()
}

pub fn brute_dsc(a: &[bool], b: &[bool]) -> Option<f64> {
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        None
    } else {
        Some(2.0 * both as f64 / (na + nb) as f64)
    }
}

pub fn brute_surface(mask: &[bool], h: usize, w: usize) -> Vec<(usize, usize)> {
    let at = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && mask[r as usize * w + c as usize];
    let mut out = Vec::new();
    for r in 0..h as isize {
        for c in 0..w as isize {
            if at(r, c) && [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)].iter().any(|&(y, x)| !at(y, x)) {
                out.push((r as usize, c as usize));
            }
        }
    }
    out
}

/// All pairs, `O(|A| |B|)`.
pub fn brute_assd(a: &[(usize, usize)], b: &[(usize, usize)], s: Spacing) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let d = |p: &(usize, usize), q: &(usize, usize)| {
        let dr = (p.0 as f64 - q.0 as f64) * s.row_mm;
        let dc = (p.1 as f64 - q.1 as f64) * s.col_mm;
        (dr * dr + dc * dc).sqrt()
    };
    let nearest = |p: &(usize, usize), set: &[(usize, usize)]| set.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min);
    let ab: f64 = a.iter().map(|p| nearest(p, b)).sum();
    let ba: f64 = b.iter().map(|p| nearest(p, a)).sum();
    Some((ab + ba) / (a.len() + b.len()) as f64)
}

/// Average ranks of `|d|`, computed by counting rather than sorting.
pub fn average_ranks(d: &[f64]) -> Vec<f64> {
    d.iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Share of the `2^n` sign flips whose positive rank sum reaches the
/// observed one.
pub fn enumerate_p(x: &[f64], y: &[f64]) -> Option<f64> {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return None;
    }
    let ranks = average_ranks(&d);
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let mut hits = 0u64;
    for signs in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| signs >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w >= observed - 1e-9 {
            hits += 1;
        }
    }
    Some(hits as f64 / (1u64 << n) as f64)
}
