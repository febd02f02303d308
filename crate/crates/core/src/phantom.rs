//! Synthetic bladder-like phantoms with exact label maps.
//!
//! Each sample is an elliptical bright lumen inside a dark wall ring whose
//! thickness grows towards the ends of the major axis, optionally with
//! tumors attached to the wall or floating inside the lumen. The image is
//! degraded by an intensity gradient across the lumen, a quadratic bias
//! field, a blur that weakens boundaries, and clipped Gaussian noise.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{Class, LabelMap};
use crate::optim::seeded_rng;
use crate::tensor::{Shape, Tensor};

/// Pixels of wall kept between the lumen and any attached tumor.
pub const PROTECTED_WALL: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    /// Square image extent in pixels.
    pub size: usize,
    /// Range of the lumen semi-axes as fractions of `size`.
    pub lumen_axis: (f64, f64),
    /// Range of the base wall thickness in pixels.
    pub wall_thickness: (f64, f64),
    /// Thickness multiplier reached at the ends of the major axis (1 = uniform).
    pub apex_thickening: f64,
    /// Inclusive range of tumors per sample.
    pub tumor_count: (usize, usize),
    pub tumor_radius: (f64, f64),
    /// Probability that a tumor grows from the wall rather than floating in the lumen.
    pub attached_probability: f64,
    /// Maximum offset of the lumen centre from the image centre, fraction of `size`.
    pub center_jitter: f64,
    pub lumen_intensity: f64,
    pub wall_intensity: f64,
    pub tumor_intensity: f64,
    pub background_intensity: f64,
    /// Maximum relative intensity drop across the lumen.
    pub lumen_gradient: f64,
    /// Maximum deviation of the multiplicative bias field from 1.
    pub bias_amplitude: f64,
    /// Passes of a 3x3 binomial blur.
    pub blur_passes: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            size: 128,
            lumen_axis: (0.12, 0.22),
            wall_thickness: (3.0, 5.0),
            apex_thickening: 1.5,
            tumor_count: (0, 2),
            tumor_radius: (4.0, 8.0),
            attached_probability: 0.7,
            center_jitter: 0.03,
            lumen_intensity: 0.85,
            wall_intensity: 0.2,
            tumor_intensity: 0.6,
            background_intensity: 0.4,
            lumen_gradient: 0.2,
            bias_amplitude: 0.3,
            blur_passes: 1,
            noise_sigma: 0.04,
            seed: 0,
        }
    }
}

fn range_ok(r: (f64, f64)) -> bool {
    r.0.is_finite() && r.1.is_finite() && r.0 <= r.1
}

impl PhantomConfig {
    /// Defaults for a `size x size` image. The pixel-valued settings (wall
    /// thickness, tumor radius) scale with `size / 128`, floored so the wall
    /// can still enclose the lumen.
    pub fn for_size(size: usize) -> Self {
        let d = PhantomConfig::default();
        let s = size as f64 / d.size as f64;
        let floor = PROTECTED_WALL + 0.5;
        PhantomConfig {
            size,
            wall_thickness: ((d.wall_thickness.0 * s).max(floor), (d.wall_thickness.1 * s).max(floor + 0.5)),
            tumor_radius: ((d.tumor_radius.0 * s).max(1.0), (d.tumor_radius.1 * s).max(1.5)),
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.size < 16 {
            return bad(format!("image size {} is too small", self.size));
        }
        for (name, r) in [("lumen_axis", self.lumen_axis), ("wall_thickness", self.wall_thickness), ("tumor_radius", self.tumor_radius)] {
            if !range_ok(r) || r.0 <= 0.0 {
                return bad(format!("{} range {:?} must be positive and ordered", name, r));
            }
        }
        if self.wall_thickness.0 < PROTECTED_WALL + 0.5 {
            return bad(format!("wall thinner than {} px cannot enclose the lumen", PROTECTED_WALL + 0.5));
        }
        if self.tumor_count.0 > self.tumor_count.1 {
            return bad(format!("tumor count range {:?} is reversed", self.tumor_count));
        }
        if !(self.apex_thickening >= 1.0) {
            return bad(format!("apex thickening {} must be >= 1", self.apex_thickening));
        }
        if !(0.0..=1.0).contains(&self.attached_probability) {
            return bad(format!("attached probability {} outside [0, 1]", self.attached_probability));
        }
        for (name, v) in [
            ("lumen_intensity", self.lumen_intensity),
            ("wall_intensity", self.wall_intensity),
            ("tumor_intensity", self.tumor_intensity),
            ("background_intensity", self.background_intensity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{} {} outside [0, 1]", name, v));
            }
        }
        if self.lumen_intensity <= self.wall_intensity {
            return bad("lumen must be brighter than the wall".into());
        }
        if !(0.0..1.0).contains(&self.bias_amplitude) || !(0.0..1.0).contains(&self.lumen_gradient) {
            return bad("bias amplitude and lumen gradient must lie in [0, 1)".into());
        }
        if !(self.noise_sigma >= 0.0) || !(self.center_jitter >= 0.0) {
            return bad("noise sigma and centre jitter must be non-negative".into());
        }
        let s = self.size as f64;
        let mut reach = self.center_jitter * s + self.lumen_axis.1 * s + self.wall_thickness.1 * self.apex_thickening;
        if self.tumor_count.1 > 0 && self.attached_probability > 0.0 {
            reach = reach.max(self.center_jitter * s + self.lumen_axis.1 * s + PROTECTED_WALL + 2.0 * self.tumor_radius.1);
        }
        if reach > s / 2.0 - 1.0 {
            return bad(format!("structures reach {:.1} px from the centre, image half-extent is {:.1}", reach, s / 2.0));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    /// Seed this sample was generated from.
    pub seed: u64,
    /// `(1, 1, size, size)`, values in `[0, 1]`.
    pub image: Tensor<f32>,
    pub labels: LabelMap,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sample `index` in a dataset generated from `seed`.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

fn uniform(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.gen_range(r.0..r.1)
    }
}

/// Box-Muller standard normal draw.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

struct Geometry {
    cy: f64,
    cx: f64,
    cos_t: f64,
    sin_t: f64,
    a: f64,
    b: f64,
    thickness: f64,
    apex: f64,
}

impl Geometry {
    /// Rotated frame coordinates `(u, v)`, `u` along the major axis.
    fn local(&self, y: f64, x: f64) -> (f64, f64) {
        let (dy, dx) = (y - self.cy, x - self.cx);
        (dx * self.cos_t + dy * self.sin_t, -dx * self.sin_t + dy * self.cos_t)
    }

    /// Lumen radius in direction `phi` of the rotated frame.
    fn lumen_radius(&self, phi: f64) -> f64 {
        let (c, s) = (libm::cos(phi), libm::sin(phi));
        1.0 / libm::sqrt(c * c / (self.a * self.a) + s * s / (self.b * self.b))
    }

    fn wall_thickness(&self, phi: f64) -> f64 {
        let c = libm::cos(phi);
        self.thickness * (1.0 + (self.apex - 1.0) * c * c)
    }

    /// Radial distance outside the lumen boundary (negative inside) and direction.
    fn radial(&self, y: f64, x: f64) -> (f64, f64) {
        let (u, v) = self.local(y, x);
        let phi = libm::atan2(v, u);
        (libm::sqrt(u * u + v * v) - self.lumen_radius(phi), phi)
    }
}

fn sq(v: f64) -> f64 {
    v * v
}

enum Tumor {
    Attached { cy: f64, cx: f64, r: f64 },
    Floating { cy: f64, cx: f64, r: f64 },
}

/// Generates sample `index` of the dataset defined by `cfg`.
pub fn generate_one(cfg: &PhantomConfig, index: usize) -> Result<Sample> {
    cfg.validate()?;
    let seed = sample_seed(cfg.seed, index);
    let mut rng = seeded_rng(seed);
    let n = cfg.size;
    let s = n as f64;
    let mid = (s - 1.0) / 2.0;
    let jitter = cfg.center_jitter * s;
    let jy = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
    let jx = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
    let theta = rng.gen_range(0.0..PI);
    let (ax1, ax2) = (uniform(&mut rng, cfg.lumen_axis) * s, uniform(&mut rng, cfg.lumen_axis) * s);
    let geo = Geometry {
        cy: mid + jy,
        cx: mid + jx,
        cos_t: libm::cos(theta),
        sin_t: libm::sin(theta),
        a: ax1.max(ax2),
        b: ax1.min(ax2),
        thickness: uniform(&mut rng, cfg.wall_thickness),
        apex: cfg.apex_thickening,
    };

    let count = rng.gen_range(cfg.tumor_count.0..=cfg.tumor_count.1);
    let mut tumors = Vec::with_capacity(count);
    for _ in 0..count {
        let r = uniform(&mut rng, cfg.tumor_radius);
        let psi = rng.gen_range(0.0..2.0 * PI);
        let attached = rng.gen_bool(cfg.attached_probability);
        let (c, sn) = (libm::cos(psi), libm::sin(psi));
        let to_image = |u: f64, v: f64| (geo.cy + u * geo.sin_t + v * geo.cos_t, geo.cx + u * geo.cos_t - v * geo.sin_t);
        if attached {
            let dist = geo.lumen_radius(psi) + PROTECTED_WALL + 0.9 * r;
            let (cy, cx) = to_image(dist * c, dist * sn);
            tumors.push(Tumor::Attached { cy, cx, r });
        } else {
            // keep the disk inside the lumen with a margin
            let r = r.min(geo.b - PROTECTED_WALL - 1.0);
            if r < 1.5 {
                continue;
            }
            let room = (geo.lumen_radius(psi) - r - PROTECTED_WALL).max(0.0);
            let dist = room * libm::sqrt(rng.gen::<f64>());
            let (cy, cx) = to_image(dist * c, dist * sn);
            tumors.push(Tumor::Floating { cy, cx, r });
        }
    }

    let mut labels = LabelMap::filled(n, n, Class::Background)?;
    for i in 0..n {
        for j in 0..n {
            let (y, x) = (i as f64, j as f64);
            let (d, phi) = geo.radial(y, x);
            let mut class = if d <= 0.0 {
                Class::Lumen
            } else if d <= geo.wall_thickness(phi) {
                Class::Wall
            } else {
                Class::Background
            };
            for t in &tumors {
                match *t {
                    Tumor::Attached { cy, cx, r } => {
                        if d > PROTECTED_WALL && sq(y - cy) + sq(x - cx) <= r * r {
                            class = Class::Tumor;
                        }
                    }
                    Tumor::Floating { cy, cx, r } => {
                        if sq(y - cy) + sq(x - cx) <= r * r {
                            class = Class::Tumor;
                        }
                    }
                }
            }
            labels.set(i, j, class);
        }
    }

    // intensity model
    let grad_dir = rng.gen_range(0.0..2.0 * PI);
    let grad_amount = rng.gen_range(0.0..=cfg.lumen_gradient);
    let (gdy, gdx) = (libm::sin(grad_dir), libm::cos(grad_dir));
    let bias = bias_field(&mut rng, n, cfg.bias_amplitude);
    let mut img = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let base = match Class::from_code(labels.get(i, j)).unwrap_or(Class::Background) {
                Class::Background => cfg.background_intensity,
                Class::Wall => cfg.wall_intensity,
                Class::Tumor => cfg.tumor_intensity,
                Class::Lumen => {
                    // projection onto the gradient direction, in [-1, 1] over the lumen
                    let p = ((i as f64 - geo.cy) * gdy + (j as f64 - geo.cx) * gdx) / geo.a;
                    cfg.lumen_intensity * (1.0 - grad_amount * 0.5 * (1.0 + p.clamp(-1.0, 1.0)))
                }
            };
            img[k] = base * bias[k];
        }
    }
    for _ in 0..cfg.blur_passes {
        img = binomial_blur(&img, n);
    }
    for v in &mut img {
        *v = (*v + cfg.noise_sigma * gaussian(&mut rng)).clamp(0.0, 1.0);
    }
    let image = Tensor::from_vec(Shape::new(1, 1, n, n)?, img.into_iter().map(|v| v as f32).collect())?;
    Ok(Sample { index, seed, image, labels })
}

/// `1 + q(x, y)` with `q` a random quadratic scaled so `max |q|` is at most
/// `amplitude` on the grid.
fn bias_field(rng: &mut ChaCha8Rng, n: usize, amplitude: f64) -> Vec<f64> {
    if amplitude == 0.0 {
        return vec![1.0; n * n];
    }
    let coef: [f64; 5] = core::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let norm = |i: usize| 2.0 * i as f64 / (n - 1) as f64 - 1.0;
    let mut q = vec![0.0; n * n];
    let mut peak = 0.0f64;
    for i in 0..n {
        let y = norm(i);
        for j in 0..n {
            let x = norm(j);
            let v = coef[0] * x + coef[1] * y + coef[2] * x * x + coef[3] * x * y + coef[4] * y * y;
            q[i * n + j] = v;
            peak = peak.max(v.abs());
        }
    }
    let scale = if peak > 0.0 { amplitude * rng.gen_range(0.5..=1.0) / peak } else { 0.0 };
    q.into_iter().map(|v| 1.0 + scale * v).collect()
}

/// Separable `[1, 2, 1] / 4` blur with edge replication.
fn binomial_blur(img: &[f64], n: usize) -> Vec<f64> {
    let at = |i: isize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let j = j as isize;
            tmp[i * n + j as usize] =
                (img[i * n + at(j - 1)] + 2.0 * img[i * n + j as usize] + img[i * n + at(j + 1)]) / 4.0;
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let ii = i as isize;
        for j in 0..n {
            out[i * n + j] = (tmp[at(ii - 1) * n + j] + 2.0 * tmp[i * n + j] + tmp[at(ii + 1) * n + j]) / 4.0;
        }
    }
    out
}

/// Generates samples `0..count`.
pub fn generate(cfg: &PhantomConfig, count: usize) -> Result<Vec<Sample>> {
    (0..count).map(|i| generate_one(cfg, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Val, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<SplitKind> {
        SplitKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Default train/validation/test proportions.
pub const DEFAULT_RATIOS: [u64; 3] = [40, 5, 15];

/// Scales `ratios` to `count` items with the largest-remainder rule; ties go
/// to the earlier part.
pub fn split_counts(count: usize, ratios: [u64; 3]) -> Result<[usize; 3]> {
    let total = ratios.iter().try_fold(0u64, |acc, &r| acc.checked_add(r));
    let total = match total {
        Some(t) if t > 0 => t as u128,
        _ => return Err(Error::Config(format!("split ratios {:?} must be positive and not overflow", ratios))),
    };
    let mut out = [0usize; 3];
    let mut rems = [0u128; 3];
    let mut assigned = 0usize;
    for k in 0..3 {
        let prod = count as u128 * ratios[k] as u128;
        out[k] = (prod / total) as usize;
        rems[k] = prod % total;
        assigned += out[k];
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| rems[y].cmp(&rems[x]).then(x.cmp(&y)));
    for &k in order.iter().take(count - assigned) {
        out[k] += 1;
    }
    Ok(out)
}

/// Seeded partition of `0..count` into train/validation/test ids, each
/// sorted ascending.
pub fn split(count: usize, ratios: [u64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    let sizes = split_counts(count, ratios)?;
    let mut ids: Vec<usize> = (0..count).collect();
    ids.shuffle(&mut seeded_rng(splitmix64(seed ^ 0x5b1d)));
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut start = 0;
    for k in 0..3 {
        parts[k] = ids[start..start + sizes[k]].to_vec();
        parts[k].sort_unstable();
        start += sizes[k];
    }
    Ok(parts)
}
