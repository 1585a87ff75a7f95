//! Finite-difference verification of every backward pass.
//!
//! Each component is wrapped as a scalar loss of its inputs and parameters
//! (a probe-weighted output sum, or the model's own loss), and every
//! analytic gradient entry is compared against a central difference with
//! step `h = 1e-5`. Relative error uses a denominator floor of 1e-4 so
//! structurally tiny gradients are compared absolutely, below the noise
//! floor of f64 central differences.
//!
//! All inputs are seeded. ReLU kinks and maximum-fusion ties are measure
//! zero on random data; the dedicated relu and maximum checks additionally
//! keep their operands away from the non-differentiable set so the
//! difference quotient is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::fusion::{fuse, fuse_backward, ArchVariant, FusionDirection, FusionOp};
use crate::layers::{
    relu_backward, relu_forward, softmax_cross_entropy, Affine, BatchNorm1d, Conv1d, Mode,
};
use crate::model::{ModelConfig, StfnModel};
use crate::res_inc::ResIncBlock;
use crate::tensor::Tensor;

pub const TOLERANCE: f64 = 1e-4;
pub const STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub component: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Relative error with a denominator floor of 1e-4: entries whose
/// gradients are below the floor are effectively compared absolutely.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Central-difference sweep over every entry of `tensors`, comparing with
/// the aligned `analytic` gradients. `loss` is re-evaluated with the
/// perturbed state.
fn fd_max_rel(
    tensors: &mut [Tensor],
    analytic: &[Tensor],
    loss: &mut dyn FnMut(&[Tensor]) -> f64,
) -> f64 {
    assert_eq!(tensors.len(), analytic.len());
    let mut max_rel: f64 = 0.0;
    for s in 0..tensors.len() {
        for i in 0..tensors[s].len() {
            let orig = tensors[s].data()[i];
            tensors[s].data_mut()[i] = orig + STEP;
            let fp = loss(tensors);
            tensors[s].data_mut()[i] = orig - STEP;
            let fm = loss(tensors);
            tensors[s].data_mut()[i] = orig;
            let num = (fp - fm) / (2.0 * STEP);
            max_rel = max_rel.max(rel_error(num, analytic[s].data()[i]));
        }
    }
    max_rel
}

/// Pushes values away from a kink at zero so central differences stay on
/// one side of it.
fn away_from_zero(t: Tensor, margin: f64) -> Tensor {
    t.map(|v| {
        if v.abs() < margin {
            if v >= 0.0 {
                v + margin
            } else {
                v - margin
            }
        } else {
            v
        }
    })
}

fn check_conv1d(seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 2..=5usize {
        let conv = Conv1d::new(k, 3, 2, seed + k as u64).unwrap();
        let x = Tensor::random_normal(&[2, 4, 3], 0.0, 0.7, seed + 10 + k as u64);
        let probe = Tensor::random_normal(&[2, 4, 2], 0.0, 1.0, seed + 20 + k as u64);
        let (_, ctx) = conv.forward(&x).unwrap();
        let grads = conv.backward(&ctx, &probe).unwrap();
        let mut state = vec![x, conv.weights.clone(), conv.bias.clone()];
        let analytic = [grads.x, grads.weights, grads.bias];
        let worst_k = fd_max_rel(&mut state, &analytic, &mut |ts| {
            let c = Conv1d::from_parts(ts[1].clone(), ts[2].clone()).unwrap();
            c.forward(&ts[0]).unwrap().0.dot(&probe).unwrap()
        });
        worst = worst.max(worst_k);
    }
    worst
}

fn check_batchnorm(seed: u64) -> f64 {
    let mut bn = BatchNorm1d::new(3).unwrap();
    bn.gamma = Tensor::random_normal(&[3], 1.0, 0.3, seed);
    bn.beta = Tensor::random_normal(&[3], 0.0, 0.3, seed + 1);
    let x = Tensor::random_normal(&[2, 4, 3], 0.0, 1.0, seed + 2);
    let probe = Tensor::random_normal(&[2, 4, 3], 0.0, 1.0, seed + 3);
    let (_, ctx) = bn.forward(&x, Mode::Train).unwrap();
    let grads = bn.backward(&ctx.unwrap(), &probe).unwrap();
    let mut state = vec![x, bn.gamma.clone(), bn.beta.clone()];
    let analytic = [grads.x, grads.gamma, grads.beta];
    let template = bn.clone();
    fd_max_rel(&mut state, &analytic, &mut |ts| {
        let mut b = template.clone();
        b.gamma = ts[1].clone();
        b.beta = ts[2].clone();
        b.forward(&ts[0], Mode::Train).unwrap().0.dot(&probe).unwrap()
    })
}

fn check_relu(seed: u64, sabotage: bool) -> f64 {
    let x = away_from_zero(Tensor::random_normal(&[12], 0.0, 1.0, seed), 0.01);
    let probe = Tensor::random_normal(&[12], 0.0, 1.0, seed + 1);
    let (_, ctx) = relu_forward(&x);
    let mut grad = relu_backward(&ctx, &probe).unwrap();
    if sabotage {
        // Test hook: flip the analytic gradient's sign so the check must
        // report a failure.
        grad = grad.scale(-1.0);
    }
    let mut state = vec![x];
    fd_max_rel(&mut state, &[grad], &mut |ts| {
        relu_forward(&ts[0]).0.dot(&probe).unwrap()
    })
}

fn check_affine(seed: u64) -> f64 {
    let layer = Affine::new(3, 2, seed).unwrap();
    let x = Tensor::random_normal(&[2, 3], 0.0, 1.0, seed + 1);
    let probe = Tensor::random_normal(&[2, 2], 0.0, 1.0, seed + 2);
    let (_, ctx) = layer.forward(&x).unwrap();
    let grads = layer.backward(&ctx, &probe).unwrap();
    let mut state = vec![x, layer.weights.clone(), layer.bias.clone()];
    let analytic = [grads.x, grads.weights, grads.bias];
    fd_max_rel(&mut state, &analytic, &mut |ts| {
        let l = Affine {
            weights: ts[1].clone(),
            bias: ts[2].clone(),
        };
        l.forward(&ts[0]).unwrap().0.dot(&probe).unwrap()
    })
}

fn check_softmax_ce(seed: u64) -> f64 {
    let logits = Tensor::random_normal(&[3, 4], 0.0, 1.5, seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed + 1);
    let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..4)).collect();
    let out = softmax_cross_entropy(&logits, &labels).unwrap();
    let mut state = vec![logits];
    fd_max_rel(&mut state, &[out.grad_logits], &mut |ts| {
        softmax_cross_entropy(&ts[0], &labels).unwrap().loss
    })
}

fn check_fusion(op: FusionOp, seed: u64) -> f64 {
    let mut pa = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, seed);
    let pm = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, seed + 1);
    if op == FusionOp::Maximum {
        // Keep the element-wise gap wider than the finite-difference step.
        let gapped: Vec<f64> = pa
            .data()
            .iter()
            .zip(pm.data())
            .map(|(&a, &b)| if (a - b).abs() < 0.01 { b + 0.05 } else { a })
            .collect();
        pa = Tensor::new(pa.shape(), gapped).unwrap();
    }
    let probe = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, seed + 2);
    let (_, ctx) = fuse(op, &pa, &pm).unwrap();
    let (ga, gm) = fuse_backward(op, &ctx, &probe).unwrap();
    let mut state = vec![pa, pm];
    fd_max_rel(&mut state, &[ga, gm], &mut |ts| {
        fuse(op, &ts[0], &ts[1]).unwrap().0.dot(&probe).unwrap()
    })
}

fn check_res_inc(seed: u64) -> f64 {
    let block = ResIncBlock::new(4, seed).unwrap();
    let x = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, seed + 1);
    let probe = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, seed + 2);
    let mut work = block.clone();
    let (_, ctx) = work.forward(&x, Mode::Train).unwrap();
    let grads = work.backward(&ctx.unwrap(), &probe).unwrap();

    let mut param_refs = Vec::new();
    block.visit_params(&mut param_refs);
    let mut state: Vec<Tensor> = std::iter::once(x.clone())
        .chain(param_refs.iter().map(|t| (*t).clone()))
        .collect();
    let analytic: Vec<Tensor> = std::iter::once(grads.x).chain(grads.params).collect();
    let template = block.clone();
    fd_max_rel(&mut state, &analytic, &mut |ts| {
        let mut b = template.clone();
        let mut slots = Vec::new();
        b.visit_params_mut(&mut slots);
        for (slot, t) in slots.iter_mut().zip(&ts[1..]) {
            **slot = t.clone();
        }
        b.forward(&ts[0], Mode::Train).unwrap().0.dot(&probe).unwrap()
    })
}

fn check_model(variant: ArchVariant, direction: FusionDirection, seed: u64) -> f64 {
    let config = ModelConfig {
        feature_dim: 4,
        num_classes: 2,
        num_segments: 3,
        variant,
        fusion_op: FusionOp::Average,
        direction,
        blocks_per_stage: 1,
    };
    let model = StfnModel::new(config, seed).unwrap();
    let fa = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, seed + 1);
    let fm = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, seed + 2);
    let labels = [0usize, 1];

    let mut work = model.clone();
    let (_, ctx) = work.forward_train(&fa, &fm).unwrap();
    let grads = work.backward(&ctx, &labels).unwrap();

    let mut state: Vec<Tensor> = model.params().into_iter().cloned().collect();
    fd_max_rel(&mut state, &grads.params, &mut |ts| {
        let mut m = model.clone();
        for (slot, t) in m.params_mut().into_iter().zip(ts) {
            *slot = t.clone();
        }
        m.loss(&fa, &fm, &labels, Mode::Train).unwrap().0
    })
}

/// Runs every component check once. `sabotage` flips one analytic gradient
/// (the relu row) to demonstrate that failures are detected and reported.
pub fn run_all(seed: u64, sabotage: bool) -> Vec<CheckOutcome> {
    let outcome = |component: &str, max_rel_error: f64| CheckOutcome {
        component: component.to_string(),
        max_rel_error,
        tolerance: TOLERANCE,
    };
    let mut out = vec![
        outcome("conv1d", check_conv1d(seed)),
        outcome("batchnorm", check_batchnorm(seed + 100)),
        outcome("relu", check_relu(seed + 200, sabotage)),
        outcome("affine", check_affine(seed + 300)),
        outcome("softmax_ce", check_softmax_ce(seed + 400)),
    ];
    for (i, op) in FusionOp::ALL.into_iter().enumerate() {
        out.push(outcome(
            &format!("fusion_{}", op.name()),
            check_fusion(op, seed + 500 + 10 * i as u64),
        ));
    }
    out.push(outcome("res_inc_block", check_res_inc(seed + 600)));
    for (i, variant) in ArchVariant::ALL.into_iter().enumerate() {
        for (j, direction) in FusionDirection::ALL.into_iter().enumerate() {
            out.push(outcome(
                &format!("model_{}_{}", variant.name(), direction.name()),
                check_model(variant, direction, seed + 700 + 100 * i as u64 + 10 * j as u64),
            ));
        }
    }
    out
}
