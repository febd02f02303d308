//! Convolution stacks with all-ones weights, zero bias and no activation.
//! With nonnegative weights nothing cancels, so nonzero responses are
//! exactly the reachable positions.

#![allow(dead_code)]

use dilseg_core::arch::ConvLayer;
use dilseg_core::layers::ConvGeom;
use dilseg_core::{Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn ones_stack(geoms: &[ConvGeom]) -> Vec<ConvLayer<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    geoms
        .iter()
        .map(|&g| {
            let mut l = ConvLayer::new(g, &mut rng);
            l.params.weight.data_mut().fill(1.0);
            l.params.bias.data_mut().fill(0.0);
            l
        })
        .collect()
}

pub fn forward(stack: &mut [ConvLayer<f64>], x: Tensor<f64>) -> Tensor<f64> {
    stack.iter_mut().fold(x, |h, l| l.forward(h).unwrap())
}

/// Input positions that reach output unit `(i, j)`: the backward pass of a
/// one-hot output gradient.
pub fn support_of_unit(stack: &mut [ConvLayer<f64>], side: usize, i: usize, j: usize) -> Tensor<f64> {
    let y = forward(stack, Tensor::zeros(Shape::new(1, 1, side, side).unwrap()));
    let mut g = Tensor::zeros(y.shape());
    g.set(0, 0, i, j, 1.0);
    stack.iter_mut().rev().fold(g, |g, l| l.backward(g).unwrap())
}

/// Side of the bounding box of nonzero entries, and their count.
pub fn extent_and_count(t: &Tensor<f64>) -> (usize, usize) {
    let s = t.shape();
    let (mut lo, mut hi, mut count) = (usize::MAX, 0, 0);
    for r in 0..s.h() {
        for c in 0..s.w() {
            if t.get(0, 0, r, c) != 0.0 {
                lo = lo.min(r);
                hi = hi.max(r);
                count += 1;
            }
        }
    }
    assert!(count > 0, "empty support");
    (hi - lo + 1, count)
}

pub fn same_stride1(dilations: &[usize]) -> Vec<ConvGeom> {
    dilations.iter().map(|&d| ConvGeom::same(1, 1, 3, d).unwrap()).collect()
}

/// Impulse in the middle of a zero image; the response marks every output
/// unit whose field contains it.
pub fn impulse_response(dilations: &[usize]) -> (usize, usize) {
    let side = 41;
    let mut x = Tensor::zeros(Shape::new(1, 1, side, side).unwrap());
    x.set(0, 0, side / 2, side / 2, 1.0);
    let y = forward(&mut ones_stack(&same_stride1(dilations)), x);
    extent_and_count(&y)
}
