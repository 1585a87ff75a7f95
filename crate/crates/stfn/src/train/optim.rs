//! Parameter update rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `v ← μ·v + g; p ← p − lr·v`
    SgdMomentum { momentum: f64 },
    /// `s ← ρ·s + (1−ρ)·g²; p ← p − lr·g/(√s + ε)`
    RmsProp { decay: f64, epsilon: f64 },
}

impl OptimizerKind {
    /// Momentum 0.9.
    pub fn sgd_momentum() -> Self {
        OptimizerKind::SgdMomentum { momentum: 0.9 }
    }

    /// Decay 0.9, epsilon 1e-8.
    pub fn rms_prop() -> Self {
        OptimizerKind::RmsProp {
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: one auxiliary buffer per parameter (velocity for SGD
/// momentum, squared-gradient average for RMSProp), zero-initialized on the
/// first step.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    buffers: Vec<Tensor>,
}

impl Optimizer {
    /// A zero learning rate is allowed and makes every step a no-op.
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if lr < 0.0 {
            return Err(Error::Config(format!("learning rate must be non-negative, got {lr}")));
        }
        Ok(Self {
            kind,
            lr,
            buffers: Vec::new(),
        })
    }

    /// Applies one update. `params` and `grads` must be aligned (same
    /// count, same shapes), and consistent across steps.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::BadShape {
                op: "optimizer step",
                expected: format!("{} gradients", params.len()),
                got: vec![grads.len()],
            });
        }
        if self.buffers.is_empty() {
            self.buffers = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        if self.buffers.len() != params.len() {
            return Err(Error::BadShape {
                op: "optimizer step",
                expected: format!("{} parameters as on previous steps", self.buffers.len()),
                got: vec![params.len()],
            });
        }
        for ((p, g), buf) in params.iter_mut().zip(grads).zip(&mut self.buffers) {
            if p.shape() != g.shape() || p.shape() != buf.shape() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            let lr = self.lr;
            match self.kind {
                OptimizerKind::SgdMomentum { momentum } => {
                    for ((pv, &gv), bv) in
                        p.data_mut().iter_mut().zip(g.data()).zip(buf.data_mut())
                    {
                        *bv = momentum * *bv + gv;
                        *pv -= lr * *bv;
                    }
                }
                OptimizerKind::RmsProp { decay, epsilon } => {
                    for ((pv, &gv), bv) in
                        p.data_mut().iter_mut().zip(g.data()).zip(buf.data_mut())
                    {
                        *bv = decay * *bv + (1.0 - decay) * gv * gv;
                        *pv -= lr * gv / (bv.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
