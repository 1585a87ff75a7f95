//! Same-length temporal 1D convolution.
//!
//! The convolution slides over the time axis of a `(batch, time, channels)`
//! tensor and always preserves the temporal length: the input is zero-padded
//! on the left by `kernel_size - 1` steps (causal padding), for every kernel
//! size, so all kernel sizes see identically aligned time steps.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub kernel_size: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    /// `(kernel_size, in_dim, out_dim)`.
    pub weights: Tensor,
    /// `(out_dim)`.
    pub bias: Tensor,
}

/// Cached forward input for the backward pass.
pub struct Conv1dCtx {
    x: Tensor,
}

pub struct Conv1dGrads {
    pub x: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Conv1d {
    /// He-normal initialized weights (std `sqrt(2 / (k * in_dim))`), zero bias.
    pub fn new(kernel_size: usize, in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if kernel_size == 0 || in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "conv1d dimensions must be positive, got k={kernel_size}, in={in_dim}, out={out_dim}"
            )));
        }
        let fan_in = (kernel_size * in_dim) as f64;
        let std = (2.0 / fan_in).sqrt();
        Ok(Self {
            kernel_size,
            in_dim,
            out_dim,
            weights: Tensor::random_normal(&[kernel_size, in_dim, out_dim], 0.0, std, seed),
            bias: Tensor::zeros(&[out_dim]),
        })
    }

    pub fn from_parts(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.rank() != 3 {
            return Err(Error::BadShape {
                op: "Conv1d::from_parts",
                expected: "(kernel, in_dim, out_dim) weights".into(),
                got: weights.shape().to_vec(),
            });
        }
        let (k, din, dout) = (weights.shape()[0], weights.shape()[1], weights.shape()[2]);
        if bias.shape() != [dout] {
            return Err(Error::ShapeMismatch {
                op: "Conv1d::from_parts bias",
                left: vec![dout],
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            kernel_size: k,
            in_dim: din,
            out_dim: dout,
            weights,
            bias,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.rank() != 3 || x.shape()[2] != self.in_dim {
            return Err(Error::BadShape {
                op: "conv1d",
                expected: format!("(batch, time, {})", self.in_dim),
                got: x.shape().to_vec(),
            });
        }
        Ok((x.shape()[0], x.shape()[1]))
    }

    /// `out[b,t,o] = bias[o] + Σ_{j,i} w[j,i,o] · x[b, t+j-(k-1), i]`, with
    /// out-of-range time indices reading as zero.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv1dCtx)> {
        let (bsz, n) = self.check_input(x)?;
        let (k, din, dout) = (self.kernel_size, self.in_dim, self.out_dim);
        let w = self.weights.data();
        let bias = self.bias.data();
        let xd = x.data();
        let mut out = vec![0.0; bsz * n * dout];
        for b in 0..bsz {
            for t in 0..n {
                let orow = &mut out[(b * n + t) * dout..(b * n + t + 1) * dout];
                orow.copy_from_slice(bias);
                for j in 0..k {
                    if t + j < k - 1 {
                        continue; // reading the zero padding
                    }
                    let ts = t + j - (k - 1);
                    let xrow = &xd[(b * n + ts) * din..(b * n + ts + 1) * din];
                    for (i, &xv) in xrow.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &w[(j * din + i) * dout..(j * din + i + 1) * dout];
                        for (o, wv) in wrow.iter().enumerate() {
                            orow[o] += xv * wv;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(&[bsz, n, dout], out)?;
        Ok((out, Conv1dCtx { x: x.clone() }))
    }

    pub fn backward(&self, ctx: &Conv1dCtx, grad_out: &Tensor) -> Result<Conv1dGrads> {
        let (bsz, n) = self.check_input(&ctx.x)?;
        if grad_out.shape() != [bsz, n, self.out_dim] {
            return Err(Error::ShapeMismatch {
                op: "conv1d backward",
                left: vec![bsz, n, self.out_dim],
                right: grad_out.shape().to_vec(),
            });
        }
        let (k, din, dout) = (self.kernel_size, self.in_dim, self.out_dim);
        let w = self.weights.data();
        let xd = ctx.x.data();
        let g = grad_out.data();
        let mut gx = vec![0.0; bsz * n * din];
        let mut gw = vec![0.0; k * din * dout];
        let mut gb = vec![0.0; dout];
        for b in 0..bsz {
            for t in 0..n {
                let grow = &g[(b * n + t) * dout..(b * n + t + 1) * dout];
                for (o, gv) in grow.iter().enumerate() {
                    gb[o] += gv;
                }
                for j in 0..k {
                    if t + j < k - 1 {
                        continue;
                    }
                    let ts = t + j - (k - 1);
                    let xrow = &xd[(b * n + ts) * din..(b * n + ts + 1) * din];
                    let gxrow = &mut gx[(b * n + ts) * din..(b * n + ts + 1) * din];
                    for i in 0..din {
                        let wrow = &w[(j * din + i) * dout..(j * din + i + 1) * dout];
                        let gwrow = &mut gw[(j * din + i) * dout..(j * din + i + 1) * dout];
                        let xv = xrow[i];
                        let mut acc = 0.0;
                        for o in 0..dout {
                            let gv = grow[o];
                            acc += wrow[o] * gv;
                            gwrow[o] += xv * gv;
                        }
                        gxrow[i] += acc;
                    }
                }
            }
        }
        Ok(Conv1dGrads {
            x: Tensor::new(&[bsz, n, din], gx)?,
            weights: Tensor::new(&[k, din, dout], gw)?,
            bias: Tensor::new(&[dout], gb)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel1_identity_weights_pass_input_through() {
        let mut w = Tensor::zeros(&[1, 3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let conv = Conv1d::from_parts(w, Tensor::zeros(&[3])).unwrap();
        let x = Tensor::random_normal(&[2, 4, 3], 0.0, 1.0, 11);
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_convolution_kernel2() {
        // w = [1, 1], left zero pad: out[t] = x[t-1] + x[t].
        let w = Tensor::new(&[2, 1, 1], vec![1.0, 1.0]).unwrap();
        let conv = Conv1d::from_parts(w, Tensor::zeros(&[1])).unwrap();
        let x = Tensor::new(&[1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0, 5.0]);
    }

    #[test]
    fn temporal_length_preserved_for_kernels_1_through_7() {
        let x = Tensor::random_normal(&[1, 5, 2], 0.0, 1.0, 3);
        for k in 1..=7 {
            let conv = Conv1d::new(k, 2, 4, 40 + k as u64).unwrap();
            let (y, _) = conv.forward(&x).unwrap();
            assert_eq!(y.shape(), &[1, 5, 4], "kernel {k}");
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let conv = Conv1d::new(3, 2, 2, 5).unwrap();
        let x = Tensor::random_normal(&[2, 4, 2], 0.0, 1.0, 6);
        let (_, ctx) = conv.forward(&x).unwrap();
        let grads = conv.backward(&ctx, &Tensor::zeros(&[2, 4, 2])).unwrap();
        assert_eq!(grads.x.norm(), 0.0);
        assert_eq!(grads.weights.norm(), 0.0);
        assert_eq!(grads.bias.norm(), 0.0);
    }

    #[test]
    fn kernel1_identity_backward_passes_grad_through() {
        let mut w = Tensor::zeros(&[1, 2, 2]);
        w.data_mut()[0] = 1.0;
        w.data_mut()[3] = 1.0;
        let conv = Conv1d::from_parts(w, Tensor::zeros(&[2])).unwrap();
        let x = Tensor::random_normal(&[1, 3, 2], 0.0, 1.0, 9);
        let (_, ctx) = conv.forward(&x).unwrap();
        let g = Tensor::random_normal(&[1, 3, 2], 0.0, 1.0, 10);
        let grads = conv.backward(&ctx, &g).unwrap();
        assert_eq!(grads.x, g);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let conv = Conv1d::new(3, 2, 3, 17).unwrap();
        let x = Tensor::random_normal(&[2, 4, 2], 0.0, 0.5, 18);
        let probe = Tensor::random_normal(&[2, 4, 3], 0.0, 1.0, 19);
        let (_, ctx) = conv.forward(&x).unwrap();
        let grads = conv.backward(&ctx, &probe).unwrap();

        // Loss = <forward(x), probe>; perturb each input and weight entry.
        let loss = |c: &Conv1d, x: &Tensor| c.forward(x).unwrap().0.dot(&probe).unwrap();
        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        for idx in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let num = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * h);
            let ana = grads.x.data()[idx];
            max_rel = max_rel.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-8));
        }
        for idx in 0..conv.weights.len() {
            let mut cp = conv.clone();
            cp.weights.data_mut()[idx] += h;
            let mut cm = conv.clone();
            cm.weights.data_mut()[idx] -= h;
            let num = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * h);
            let ana = grads.weights.data()[idx];
            max_rel = max_rel.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-8));
        }
        for idx in 0..conv.bias.len() {
            let mut cp = conv.clone();
            cp.bias.data_mut()[idx] += h;
            let mut cm = conv.clone();
            cm.bias.data_mut()[idx] -= h;
            let num = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * h);
            let ana = grads.bias.data()[idx];
            max_rel = max_rel.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-8));
        }
        assert!(max_rel < 1e-6, "max relative error {max_rel}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let conv = Conv1d::new(2, 3, 2, 1).unwrap();
        let x = Tensor::zeros(&[1, 4, 5]);
        assert!(conv.forward(&x).is_err());
    }
}
