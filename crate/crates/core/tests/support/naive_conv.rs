//! Direct sliding-window convolution loops.

#![allow(dead_code)]

use dilseg_core::layers::{ConvGeom, ConvParams};
use dilseg_core::{Shape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Reads outside the input are zeros that still enter the sum, so the
/// accumulation order is `(c, u, v)` with nothing skipped, bias last.
pub fn naive_forward(x: &Tensor<f64>, p: &ConvParams<f64>) -> Tensor<f64> {
    let g = p.geom;
    let s = x.shape();
    let ho = (s.h() + 2 * g.padding - g.effective_extent()) / g.stride + 1;
    let wo = (s.w() + 2 * g.padding - g.effective_extent()) / g.stride + 1;
    let mut y = Tensor::zeros(Shape::new(s.n(), g.out_channels, ho, wo).unwrap());
    for n in 0..s.n() {
        for o in 0..g.out_channels {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = 0.0f64;
                    for c in 0..g.in_channels {
                        for u in 0..g.kernel {
                            for v in 0..g.kernel {
                                let r = (i * g.stride + u * g.dilation) as isize - g.padding as isize;
                                let q = (j * g.stride + v * g.dilation) as isize - g.padding as isize;
                                let xv = if r >= 0 && q >= 0 && (r as usize) < s.h() && (q as usize) < s.w() {
                                    x.get(n, c, r as usize, q as usize)
                                } else {
                                    0.0
                                };
                                acc += p.weight.get(o, c, u, v) * xv;
                            }
                        }
                    }
                    y.set(n, o, i, j, acc + p.bias.data()[o]);
                }
            }
        }
    }
    y
}

/// Scatters every output gradient back along the taps that produced it.
pub fn naive_backward(x: &Tensor<f64>, p: &ConvParams<f64>, gy: &Tensor<f64>) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>) {
    let g = p.geom;
    let s = x.shape();
    let ys = gy.shape();
    let mut gx = Tensor::zeros(s);
    let mut gw = Tensor::zeros(p.weight.shape());
    let mut gb = Tensor::zeros(p.bias.shape());
    for n in 0..s.n() {
        for o in 0..g.out_channels {
            for i in 0..ys.h() {
                for j in 0..ys.w() {
                    let d = gy.get(n, o, i, j);
                    gb.data_mut()[o] += d;
                    for c in 0..g.in_channels {
                        for u in 0..g.kernel {
                            for v in 0..g.kernel {
                                let r = (i * g.stride + u * g.dilation) as isize - g.padding as isize;
                                let q = (j * g.stride + v * g.dilation) as isize - g.padding as isize;
                                if r < 0 || q < 0 || r as usize >= s.h() || q as usize >= s.w() {
                                    continue;
                                }
                                let (r, q) = (r as usize, q as usize);
                                let w = gw.get(o, c, u, v);
                                gw.set(o, c, u, v, w + d * x.get(n, c, r, q));
                                let xg = gx.get(n, c, r, q);
                                gx.set(n, c, r, q, xg + d * p.weight.get(o, c, u, v));
                            }
                        }
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

pub fn random_params(geom: ConvGeom, rng: &mut ChaCha8Rng) -> ConvParams<f64> {
    let w = Tensor::from_fn(geom.weight_shape(), |_| rng.gen_range(-1.0..1.0));
    let b = Tensor::from_fn(geom.bias_shape(), |_| rng.gen_range(-1.0..1.0));
    ConvParams::new(geom, w, b).unwrap()
}

pub fn bits(t: &Tensor<f64>) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

pub fn close(a: &Tensor<f64>, b: &Tensor<f64>) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()))
}

pub fn grid() -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for k in [1, 2, 3] {
        for d in [1, 2, 4, 8] {
            for s in [1, 2] {
                for p in [0, 1, 2, 4] {
                    out.push((k, d, s, p));
                }
            }
        }
    }
    out
}
