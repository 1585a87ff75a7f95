//! Row-wise softmax and the fused softmax + cross-entropy loss.
//!
//! All exponentials are stabilized by subtracting the row maximum first.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of a `(batch, classes)` tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 2 {
        return Err(Error::BadShape {
            op: "softmax",
            expected: "(batch, classes)".into(),
            got: logits.shape().to_vec(),
        });
    }
    let (bsz, c) = (logits.shape()[0], logits.shape()[1]);
    let ld = logits.data();
    let mut out = vec![0.0; bsz * c];
    for b in 0..bsz {
        let row = &ld[b * c..(b + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let orow = &mut out[b * c..(b + 1) * c];
        let mut sum = 0.0;
        for (o, &l) in orow.iter_mut().zip(row) {
            *o = (l - m).exp();
            sum += *o;
        }
        for o in orow {
            *o /= sum;
        }
    }
    Tensor::new(&[bsz, c], out)
}

/// Jacobian-vector product of softmax: given the forward probabilities and
/// an upstream gradient with respect to them, returns the gradient with
/// respect to the logits.
pub fn softmax_backward(probs: &Tensor, grad_probs: &Tensor) -> Result<Tensor> {
    if probs.shape() != grad_probs.shape() {
        return Err(Error::ShapeMismatch {
            op: "softmax backward",
            left: probs.shape().to_vec(),
            right: grad_probs.shape().to_vec(),
        });
    }
    let (bsz, c) = (probs.shape()[0], probs.shape()[1]);
    let p = probs.data();
    let g = grad_probs.data();
    let mut out = vec![0.0; bsz * c];
    for b in 0..bsz {
        let prow = &p[b * c..(b + 1) * c];
        let grow = &g[b * c..(b + 1) * c];
        let dot: f64 = prow.iter().zip(grow).map(|(&pv, &gv)| pv * gv).sum();
        for i in 0..c {
            out[b * c + i] = prow[i] * (grow[i] - dot);
        }
    }
    Tensor::new(&[bsz, c], out)
}

pub struct SoftmaxCe {
    /// Mean negative log-likelihood over the batch.
    pub loss: f64,
    pub probs: Tensor,
    /// `(probs − onehot) / batch` — the gradient of the loss w.r.t. logits.
    pub grad_logits: Tensor,
}

pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<SoftmaxCe> {
    let probs = softmax(logits)?;
    let (bsz, c) = (probs.shape()[0], probs.shape()[1]);
    if labels.len() != bsz {
        return Err(Error::BadShape {
            op: "softmax_cross_entropy labels",
            expected: format!("{bsz} labels"),
            got: vec![labels.len()],
        });
    }
    for &l in labels {
        if l >= c {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes: c,
            });
        }
    }
    let p = probs.data();
    let mut loss = 0.0;
    let mut grad = probs.data().to_vec();
    let inv_b = 1.0 / bsz as f64;
    for (b, &label) in labels.iter().enumerate() {
        loss -= p[b * c + label].ln();
        grad[b * c + label] -= 1.0;
    }
    for g in &mut grad {
        *g *= inv_b;
    }
    Ok(SoftmaxCe {
        loss: loss * inv_b,
        probs,
        grad_logits: Tensor::new(&[bsz, c], grad)?,
    })
}
