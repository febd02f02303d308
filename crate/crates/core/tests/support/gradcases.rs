//! Central finite differences against the hand-written backward passes, in
//! f64. Loss is `sum(r * y)` for a fixed random `r`, so the analytic
//! gradient is the backward pass fed with `r`. Each case returns the
//! relative error of every gradient it checks.

#![allow(dead_code)]

use dilseg_core::layers::{
    batchnorm_backward, batchnorm_train, conv2d_backward, conv2d_forward, maxpool2x2_backward, maxpool2x2_forward,
    prelu_backward, prelu_forward, softmax_xent, upsample_nearest2x, upsample_nearest2x_backward, BnParams,
    ConvGeom, ConvParams, PReluParams,
};
use dilseg_core::metrics::LabelMap;
use dilseg_core::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;
pub const TOL: f64 = 1e-6;

pub type Errors = Vec<(String, f64)>;

pub fn random(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero, so PReLU kinks stay out of reach of `H`.
pub fn random_off_zero(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// `||a - n|| / max(||a||, ||n||)`, zero when both vanish.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Numeric gradient of `loss` with respect to every entry of `t`.
pub fn numeric(t: &mut Tensor<f64>, mut loss: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let orig = t.data()[i];
        t.data_mut()[i] = orig + H;
        let up = loss(t);
        t.data_mut()[i] = orig - H;
        let down = loss(t);
        t.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * H));
    }
    out
}

pub fn conv_case(seed: u64, dilation: usize, stride: usize) -> Errors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cin = rng.gen_range(1..=3);
    let cout = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=3);
    let pad = rng.gen_range(0..=dilation);
    let eff = k + (k - 1) * (dilation - 1);
    let hw = (eff.saturating_sub(2 * pad)).max(1) + rng.gen_range(0..4);
    let n = rng.gen_range(1..=2);
    let geom = ConvGeom::new(cin, cout, k, dilation, stride, pad).unwrap();
    let mut x = random(Shape::new(n, cin, hw, hw + 1).unwrap(), &mut rng);
    let mut params =
        ConvParams::new(geom, random(geom.weight_shape(), &mut rng), random(geom.bias_shape(), &mut rng)).unwrap();
    let y = conv2d_forward(&x, &params).unwrap();
    let r = random(y.shape(), &mut rng);
    let g = conv2d_backward(&x, &params, &r).unwrap();
    let tag = format!("conv seed {} {:?}", seed, geom);

    let p = params.clone();
    let nx = numeric(&mut x, |x| dot(&conv2d_forward(x, &p).unwrap(), &r));

    let bias = params.bias.clone();
    let nw = numeric(&mut params.weight, |w| {
        let p = ConvParams::new(geom, w.clone(), bias.clone()).unwrap();
        dot(&conv2d_forward(&x, &p).unwrap(), &r)
    });

    let weight = params.weight.clone();
    let nb = numeric(&mut params.bias, |b| {
        let p = ConvParams::new(geom, weight.clone(), b.clone()).unwrap();
        dot(&conv2d_forward(&x, &p).unwrap(), &r)
    });
    vec![
        (format!("{} input", tag), rel_err(g.input.data(), &nx)),
        (format!("{} weight", tag), rel_err(g.weight.data(), &nw)),
        (format!("{} bias", tag), rel_err(g.bias.data(), &nb)),
    ]
}

pub fn batchnorm_case(seed: u64) -> Errors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.gen_range(1..=3);
    let n = rng.gen_range(1..=3);
    let (h, w) = (rng.gen_range(2..=4), rng.gen_range(1..=4));
    let mut x = random(Shape::new(n, c, h, w).unwrap(), &mut rng);
    let mut p = BnParams::<f64>::new(c).unwrap();
    p.gamma = random(p.gamma.shape(), &mut rng);
    p.beta = random(p.beta.shape(), &mut rng);
    let (y, cache) = batchnorm_train(&x, &mut p.clone()).unwrap();
    let r = random(y.shape(), &mut rng);
    let g = batchnorm_backward(&p, &cache, &r).unwrap();
    let loss = |x: &Tensor<f64>, p: &BnParams<f64>| dot(&batchnorm_train(x, &mut p.clone()).unwrap().0, &r);

    let nx = numeric(&mut x, |x| loss(x, &p));
    let mut gamma = p.gamma.clone();
    let ng = numeric(&mut gamma, |t| loss(&x, &BnParams { gamma: t.clone(), ..p.clone() }));
    let mut beta = p.beta.clone();
    let nb = numeric(&mut beta, |t| loss(&x, &BnParams { beta: t.clone(), ..p.clone() }));
    vec![
        (format!("bn seed {} input", seed), rel_err(g.input.data(), &nx)),
        (format!("bn seed {} gamma", seed), rel_err(g.gamma.data(), &ng)),
        (format!("bn seed {} beta", seed), rel_err(g.beta.data(), &nb)),
    ]
}

pub fn prelu_case(seed: u64) -> Errors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.gen_range(1..=3);
    let mut x = random_off_zero(Shape::new(rng.gen_range(1..=2), c, 3, rng.gen_range(2..=4)).unwrap(), &mut rng);
    let mut p = PReluParams::<f64>::new(c).unwrap();
    p.slope = random(p.slope.shape(), &mut rng);
    let y = prelu_forward(&x, &p).unwrap();
    let r = random(y.shape(), &mut rng);
    let (gx, ga) = prelu_backward(&x, &p, &r).unwrap();

    let nx = numeric(&mut x, |x| dot(&prelu_forward(x, &p).unwrap(), &r));
    let mut slope = p.slope.clone();
    let na = numeric(&mut slope, |a| dot(&prelu_forward(&x, &PReluParams { slope: a.clone() }).unwrap(), &r));
    vec![
        (format!("prelu seed {} input", seed), rel_err(gx.data(), &nx)),
        (format!("prelu seed {} slope", seed), rel_err(ga.data(), &na)),
    ]
}

pub fn upsample_case(seed: u64) -> Errors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::new(rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4));
    let mut x = random(shape.unwrap(), &mut rng);
    let r = random(upsample_nearest2x(&x).shape(), &mut rng);
    let gx = upsample_nearest2x_backward(&r).unwrap();
    let nx = numeric(&mut x, |x| dot(&upsample_nearest2x(x), &r));
    vec![(format!("upsample seed {}", seed), rel_err(gx.data(), &nx))]
}

pub fn maxpool_case(seed: u64) -> Errors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::new(1, rng.gen_range(1..=2), 2 * rng.gen_range(1..=3), 2 * rng.gen_range(1..=3)).unwrap();
    // distinct values spaced well beyond H, so no window has a near tie
    let len = shape.numel();
    let mut perm: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let mut x = Tensor::<f64>::from_fn(shape, |i| perm[i] as f64 * 0.01);
    let (y, idx) = maxpool2x2_forward(&x).unwrap();
    let r = random(y.shape(), &mut rng);
    let gx = maxpool2x2_backward(&idx, &r).unwrap();
    let nx = numeric(&mut x, |x| dot(&maxpool2x2_forward(x).unwrap().0, &r));
    vec![(format!("maxpool seed {}", seed), rel_err(gx.data(), &nx))]
}

pub fn softmax_xent_case(seed: u64) -> Errors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, h, w) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
    let mut logits = Tensor::from_fn(Shape::new(n, 4, h, w).unwrap(), |_| rng.gen_range(-3.0..3.0));
    let targets: Vec<LabelMap> =
        (0..n).map(|_| LabelMap::new(h, w, (0..h * w).map(|_| rng.gen_range(0..4u8)).collect()).unwrap()).collect();
    let (_, g) = softmax_xent(&logits, &targets).unwrap();
    let nl = numeric(&mut logits, |l| softmax_xent(l, &targets).unwrap().0);
    vec![(format!("softmax_xent seed {}", seed), rel_err(g.data(), &nl))]
}

/// Worst error of a family of cases.
pub fn worst(errors: impl IntoIterator<Item = (String, f64)>) -> (String, f64) {
    errors.into_iter().fold((String::new(), 0.0), |acc, e| if e.1 > acc.1 { e } else { acc })
}
