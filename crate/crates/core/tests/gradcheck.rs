//! Central finite differences against every hand-written backward pass,
//! layer by layer and through whole networks.

mod support;

use dilseg_core::arch::{Model, ModelKind, NetSpec, ParamRole};
use dilseg_core::layers::{softmax_xent, Mode};
use dilseg_core::metrics::LabelMap;
use dilseg_core::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::gradcases::*;

const MODEL_H: f64 = 1e-5;
const CONFIGS: u64 = 24;

fn check(errors: Errors) {
    for (what, e) in errors {
        assert!(e <= TOL, "{}: relative error {:e}", what, e);
    }
}

#[test]
fn dilated_conv_gradients() {
    for d in [1, 2, 4, 8] {
        for seed in 0..CONFIGS {
            check(conv_case(seed * 31 + d as u64, d, 1));
        }
    }
}

#[test]
fn strided_conv_gradients() {
    for seed in 0..CONFIGS {
        let d = [1, 2][seed as usize % 2];
        check(conv_case(1000 + seed, d, 2));
    }
}

#[test]
fn batchnorm_train_gradients() {
    (0..CONFIGS).for_each(|s| check(batchnorm_case(2000 + s)));
}

#[test]
fn prelu_gradients() {
    (0..CONFIGS).for_each(|s| check(prelu_case(3000 + s)));
}

#[test]
fn upsample_gradients() {
    (0..CONFIGS).for_each(|s| check(upsample_case(4000 + s)));
}

#[test]
fn maxpool_gradients() {
    (0..CONFIGS).for_each(|s| check(maxpool_case(5000 + s)));
}

#[test]
fn softmax_xent_gradients() {
    (0..CONFIGS).for_each(|s| check(softmax_xent_case(6000 + s)));
}

fn model_loss(model: &mut Model<f64>, x: &Tensor<f64>, targets: &[LabelMap]) -> f64 {
    let logits = model.forward(x, Mode::Train).unwrap();
    softmax_xent(&logits, targets).unwrap().0
}

/// The whole network end to end: a sample of parameters from every layer
/// kind, plus the input. Thousands of PReLU inputs sit close to zero here
/// and any step eventually pushes one across the kink, so slopes are set
/// to 1 (the per-layer checks cover the kink itself) and the step is
/// smaller to keep max-pool switches out of reach.
#[test]
fn tiny_model_gradients() {
    for kind in [ModelKind::UnetProgressive, ModelKind::UnetOriginal] {
        let spec = NetSpec::new(kind).with_base_width(2);
        let mut model = Model::<f64>::new(&spec, 7).unwrap();
        for p in model.params_mut() {
            if p.name.ends_with("prelu.slope") {
                p.tensor.data_mut().fill(1.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = random(Shape::new(2, 1, 32, 32).unwrap(), &mut rng);
        let targets: Vec<LabelMap> =
            (0..2).map(|_| LabelMap::new(32, 32, (0..1024).map(|_| rng.gen_range(0..4u8)).collect()).unwrap()).collect();

        model.zero_grad();
        let logits = model.forward(&x, Mode::Train).unwrap();
        let (_, g) = softmax_xent(&logits, &targets).unwrap();
        let gx = model.backward(&g).unwrap();

        // (param index, element index, analytic gradient)
        let mut picks = Vec::new();
        for (pi, p) in model.params_mut().into_iter().enumerate() {
            if p.role != ParamRole::Trainable {
                continue;
            }
            let grad = p.tensor.grad().expect("gradient after backward").to_vec();
            for _ in 0..3 {
                let ei = rng.gen_range(0..grad.len());
                picks.push((pi, ei, grad[ei]));
            }
        }
        let mut analytic = Vec::new();
        let mut num = Vec::new();
        for &(pi, ei, a) in &picks {
            let nudge = |model: &mut Model<f64>, delta: f64| {
                let mut params = model.params_mut();
                params[pi].tensor.data_mut()[ei] += delta;
            };
            nudge(&mut model, MODEL_H);
            let up = model_loss(&mut model, &x, &targets);
            nudge(&mut model, -2.0 * MODEL_H);
            let down = model_loss(&mut model, &x, &targets);
            nudge(&mut model, MODEL_H);
            analytic.push(a);
            num.push((up - down) / (2.0 * MODEL_H));
        }
        check(vec![(format!("{} parameters", kind.name()), rel_err(&analytic, &num))]);

        let picked: Vec<usize> = (0..40).map(|_| rng.gen_range(0..x.len())).collect();
        let mut nx = Vec::new();
        for &i in &picked {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + MODEL_H;
            let up = model_loss(&mut model, &x, &targets);
            x.data_mut()[i] = orig - MODEL_H;
            let down = model_loss(&mut model, &x, &targets);
            x.data_mut()[i] = orig;
            nx.push((up - down) / (2.0 * MODEL_H));
        }
        let ax: Vec<f64> = picked.iter().map(|&i| gx.data()[i]).collect();
        check(vec![(format!("{} input", kind.name()), rel_err(&ax, &nx))]);
    }
}
