//! Affine (fully connected) layer mapping pooled features to class logits.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Affine {
    /// `(in_dim, out_dim)`.
    pub weights: Tensor,
    /// `(out_dim)`.
    pub bias: Tensor,
}

pub struct AffineCtx {
    x: Tensor,
}

pub struct AffineGrads {
    pub x: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Affine {
    pub fn new(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "affine dimensions must be positive, got in={in_dim}, out={out_dim}"
            )));
        }
        let std = (2.0 / in_dim as f64).sqrt();
        Ok(Self {
            weights: Tensor::random_normal(&[in_dim, out_dim], 0.0, std, seed),
            bias: Tensor::zeros(&[out_dim]),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    /// `x (batch, in_dim) → x·W + b`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, AffineCtx)> {
        if x.rank() != 2 || x.shape()[1] != self.in_dim() {
            return Err(Error::BadShape {
                op: "affine",
                expected: format!("(batch, {})", self.in_dim()),
                got: x.shape().to_vec(),
            });
        }
        let mut out = x.matmul(&self.weights)?;
        let (bsz, dout) = (out.shape()[0], out.shape()[1]);
        let bias = self.bias.data();
        let od = out.data_mut();
        for b in 0..bsz {
            for o in 0..dout {
                od[b * dout + o] += bias[o];
            }
        }
        Ok((out, AffineCtx { x: x.clone() }))
    }

    pub fn backward(&self, ctx: &AffineCtx, grad_out: &Tensor) -> Result<AffineGrads> {
        let bsz = ctx.x.shape()[0];
        let (din, dout) = (self.in_dim(), self.out_dim());
        if grad_out.shape() != [bsz, dout] {
            return Err(Error::ShapeMismatch {
                op: "affine backward",
                left: vec![bsz, dout],
                right: grad_out.shape().to_vec(),
            });
        }
        let xd = ctx.x.data();
        let g = grad_out.data();
        let w = self.weights.data();
        let mut gx = vec![0.0; bsz * din];
        let mut gw = vec![0.0; din * dout];
        let mut gb = vec![0.0; dout];
        for b in 0..bsz {
            let grow = &g[b * dout..(b + 1) * dout];
            for (o, gv) in grow.iter().enumerate() {
                gb[o] += gv;
            }
            for i in 0..din {
                let xv = xd[b * din + i];
                let wrow = &w[i * dout..(i + 1) * dout];
                let gwrow = &mut gw[i * dout..(i + 1) * dout];
                let mut acc = 0.0;
                for o in 0..dout {
                    acc += wrow[o] * grow[o];
                    gwrow[o] += xv * grow[o];
                }
                gx[b * din + i] = acc;
            }
        }
        Ok(AffineGrads {
            x: Tensor::new(&[bsz, din], gx)?,
            weights: Tensor::new(&[din, dout], gw)?,
            bias: Tensor::new(&[dout], gb)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let layer = Affine {
            weights: Tensor::identity(3),
            bias: Tensor::zeros(&[3]),
        };
        let x = Tensor::random_normal(&[2, 3], 0.0, 1.0, 61);
        let (y, _) = layer.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_weights_emit_bias_rows() {
        let layer = Affine {
            weights: Tensor::zeros(&[3, 2]),
            bias: Tensor::new(&[2], vec![0.5, -1.5]).unwrap(),
        };
        let x = Tensor::random_normal(&[4, 3], 0.0, 1.0, 62);
        let (y, _) = layer.forward(&x).unwrap();
        for b in 0..4 {
            assert_eq!(&y.data()[b * 2..(b + 1) * 2], &[0.5, -1.5]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let layer = Affine::new(3, 2, 63).unwrap();
        let x = Tensor::random_normal(&[2, 3], 0.0, 1.0, 64);
        let probe = Tensor::random_normal(&[2, 2], 0.0, 1.0, 65);
        let (_, ctx) = layer.forward(&x).unwrap();
        let grads = layer.backward(&ctx, &probe).unwrap();
        let loss = |l: &Affine, x: &Tensor| l.forward(x).unwrap().0.dot(&probe).unwrap();
        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        let mut check = |num: f64, ana: f64| {
            max_rel = max_rel.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-8));
        };
        for idx in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            check((loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * h), grads.x.data()[idx]);
        }
        for idx in 0..layer.weights.len() {
            let mut lp = layer.clone();
            lp.weights.data_mut()[idx] += h;
            let mut lm = layer.clone();
            lm.weights.data_mut()[idx] -= h;
            check((loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h), grads.weights.data()[idx]);
        }
        for idx in 0..layer.bias.len() {
            let mut lp = layer.clone();
            lp.bias.data_mut()[idx] += h;
            let mut lm = layer.clone();
            lm.bias.data_mut()[idx] -= h;
            check((loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h), grads.bias.data()[idx]);
        }
        assert!(max_rel < 1e-6, "max relative error {max_rel}");
    }
}
