//! ReLU activation. The subgradient at exactly zero is taken as zero.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub struct ReluCtx {
    x: Tensor,
}

pub fn relu_forward(x: &Tensor) -> (Tensor, ReluCtx) {
    (x.map(|v| v.max(0.0)), ReluCtx { x: x.clone() })
}

/// Gates `grad_out` by `x > 0`.
pub fn relu_backward(ctx: &ReluCtx, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != ctx.x.shape() {
        return Err(Error::ShapeMismatch {
            op: "relu backward",
            left: ctx.x.shape().to_vec(),
            right: grad_out.shape().to_vec(),
        });
    }
    let data = ctx
        .x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(ctx.x.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_clamps_negatives() {
        let x = Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let (y, _) = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn backward_gates_by_sign() {
        let x = Tensor::new(&[2], vec![-1.0, 2.0]).unwrap();
        let (_, ctx) = relu_forward(&x);
        let g = Tensor::new(&[2], vec![5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&ctx, &g).unwrap().data(), &[0.0, 5.0]);
    }

    #[test]
    fn backward_matches_finite_differences_away_from_zero() {
        // Inputs bounded away from the kink so central differences are exact.
        let x = Tensor::new(&[4], vec![-0.8, -0.3, 0.4, 0.9]).unwrap();
        let probe = Tensor::new(&[4], vec![1.5, -2.0, 0.7, 1.1]).unwrap();
        let (_, ctx) = relu_forward(&x);
        let ana = relu_backward(&ctx, &probe).unwrap();
        let h = 1e-5;
        for idx in 0..4 {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let lp = relu_forward(&xp).0.dot(&probe).unwrap();
            let lm = relu_forward(&xm).0.dot(&probe).unwrap();
            let num = (lp - lm) / (2.0 * h);
            let a = ana.data()[idx];
            let rel = (num - a).abs() / num.abs().max(a.abs()).max(1e-8);
            assert!(rel < 1e-6, "idx {idx}: rel {rel}");
        }
    }
}
