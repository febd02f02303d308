//! Surface extraction and the average symmetric surface distance.
//!
//! A surface pixel is a pixel of the class with at least one 4-neighbour
//! outside the class, or lying on the image border. Nearest-surface
//! distances come from an exact Euclidean distance transform (lower
//! envelope of parabolas, separable over rows and columns) that honours
//! anisotropic pixel spacing.

use alloc::vec;
use alloc::vec::Vec;

use super::{Class, LabelMap, Spacing};
use crate::error::Result;

/// `(row, col)` coordinates of the surface pixels of `class`.
pub fn surface(map: &LabelMap, class: Class) -> Vec<(usize, usize)> {
    let (h, w) = (map.height(), map.width());
    let code = class.code();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if map.get(r, c) != code {
                continue;
            }
            let border = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
            if border
                || map.get(r - 1, c) != code
                || map.get(r + 1, c) != code
                || map.get(r, c - 1) != code
                || map.get(r, c + 1) != code
            {
                out.push((r, c));
            }
        }
    }
    out
}

/// One-dimensional squared distance transform of `f` with sample spacing
/// `step`; infinite entries are not sites.
fn edt_1d(f: &[f64], step: f64, out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    let s2 = step * step;
    let key = |q: usize| f[q] + (q * q) as f64 * s2;
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match sites.last() {
                None => {
                    sites.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&v) => {
                    let x = (key(q) - key(v)) / (2.0 * s2 * (q - v) as f64);
                    if x <= *bounds.last().expect("parallel stacks") {
                        sites.pop();
                        bounds.pop();
                    } else {
                        sites.push(q);
                        bounds.push(x);
                        break;
                    }
                }
            }
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, slot) in out.iter_mut().enumerate() {
        while k + 1 < sites.len() && bounds[k + 1] < p as f64 {
            k += 1;
        }
        let q = sites[k];
        let d = (p as f64 - q as f64) * step;
        *slot = d * d + f[q];
    }
}

/// Squared Euclidean distance (mm²) from every pixel to the nearest point
/// of `points`, on an `h x w` grid.
fn squared_distance_map(h: usize, w: usize, points: &[(usize, usize)], spacing: Spacing) -> Vec<f64> {
    let mut grid = vec![f64::INFINITY; h * w];
    for &(r, c) in points {
        grid[r * w + c] = 0.0;
    }
    let mut sites = Vec::new();
    let mut bounds = Vec::new();
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            col[r] = grid[r * w + c];
        }
        edt_1d(&col, spacing.row_mm, &mut col_out, &mut sites, &mut bounds);
        for r in 0..h {
            grid[r * w + c] = col_out[r];
        }
    }
    let mut row_out = vec![0.0; w];
    for r in 0..h {
        edt_1d(&grid[r * w..(r + 1) * w], spacing.col_mm, &mut row_out, &mut sites, &mut bounds);
        grid[r * w..(r + 1) * w].copy_from_slice(&row_out);
    }
    grid
}

/// Distance in mm from each of `from` to the nearest of `to`.
pub fn distance_to_set(
    h: usize,
    w: usize,
    from: &[(usize, usize)],
    to: &[(usize, usize)],
    spacing: Spacing,
) -> Vec<f64> {
    let dist = squared_distance_map(h, w, to, spacing);
    from.iter().map(|&(r, c)| libm::sqrt(dist[r * w + c])).collect()
}

/// Average symmetric surface distance in mm, or `None` when either surface
/// is empty. Uses the spacing of `a`.
pub fn assd(a: &LabelMap, b: &LabelMap, class: Class) -> Result<Option<f64>> {
    a.same_grid(b)?;
    let sa = surface(a, class);
    let sb = surface(b, class);
    if sa.is_empty() || sb.is_empty() {
        return Ok(None);
    }
    let (h, w) = (a.height(), a.width());
    let spacing = a.spacing();
    let ab: f64 = distance_to_set(h, w, &sa, &sb, spacing).iter().sum();
    let ba: f64 = distance_to_set(h, w, &sb, &sa, spacing).iter().sum();
    Ok(Some((ab + ba) / (sa.len() + sb.len()) as f64))
}
