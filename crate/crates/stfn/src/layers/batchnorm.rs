//! Batch normalization over sequences.
//!
//! Statistics are computed per channel over the combined batch and time
//! axes of a `(batch, time, channels)` tensor, the standard convention for
//! 1D sequences. Train mode normalizes with the current batch statistics
//! (biased variance) and folds them into the running estimates with an
//! exponential moving average; eval mode is a pure function of the running
//! statistics.

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct BatchNorm1d {
    pub dim: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    /// Fraction of the new batch statistic folded into the running value:
    /// `running ← (1 − momentum)·running + momentum·batch`.
    pub momentum: f64,
    pub epsilon: f64,
}

pub struct BatchNormCtx {
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

pub struct BatchNormGrads {
    pub x: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl BatchNorm1d {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("batch norm dim must be positive".into()));
        }
        Ok(Self {
            dim,
            gamma: Tensor::full(&[dim], 1.0),
            beta: Tensor::zeros(&[dim]),
            running_mean: Tensor::zeros(&[dim]),
            running_var: Tensor::full(&[dim], 1.0),
            momentum: 0.1,
            epsilon: 1e-5,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.rank() != 3 || x.shape()[2] != self.dim {
            return Err(Error::BadShape {
                op: "batchnorm",
                expected: format!("(batch, time, {})", self.dim),
                got: x.shape().to_vec(),
            });
        }
        Ok((x.shape()[0], x.shape()[1]))
    }

    /// In train mode the context needed by [`BatchNorm1d::backward`] is
    /// returned; eval mode returns `None` and leaves all state untouched.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<BatchNormCtx>)> {
        let (bsz, n) = self.check_input(x)?;
        let rows = bsz * n;
        let dim = self.dim;
        let xd = x.data();
        match mode {
            Mode::Train => {
                if rows < 2 {
                    return Err(Error::BatchTooSmall { rows });
                }
                let inv_rows = 1.0 / rows as f64;
                let mut mean = vec![0.0; dim];
                for r in 0..rows {
                    for c in 0..dim {
                        mean[c] += xd[r * dim + c];
                    }
                }
                for m in &mut mean {
                    *m *= inv_rows;
                }
                let mut var = vec![0.0; dim];
                for r in 0..rows {
                    for c in 0..dim {
                        let d = xd[r * dim + c] - mean[c];
                        var[c] += d * d;
                    }
                }
                for v in &mut var {
                    *v *= inv_rows;
                }
                let inv_std: Vec<f64> =
                    var.iter().map(|&v| 1.0 / (v + self.epsilon).sqrt()).collect();
                let mut x_hat = vec![0.0; rows * dim];
                let mut out = vec![0.0; rows * dim];
                let g = self.gamma.data();
                let bta = self.beta.data();
                for r in 0..rows {
                    for c in 0..dim {
                        let h = (xd[r * dim + c] - mean[c]) * inv_std[c];
                        x_hat[r * dim + c] = h;
                        out[r * dim + c] = g[c] * h + bta[c];
                    }
                }
                let rm = self.running_mean.data_mut();
                let rv = self.running_var.data_mut();
                for c in 0..dim {
                    rm[c] = (1.0 - self.momentum) * rm[c] + self.momentum * mean[c];
                    rv[c] = (1.0 - self.momentum) * rv[c] + self.momentum * var[c];
                }
                Ok((
                    Tensor::new(x.shape(), out)?,
                    Some(BatchNormCtx {
                        x_hat: Tensor::new(x.shape(), x_hat)?,
                        inv_std,
                    }),
                ))
            }
            Mode::Eval => {
                let rm = self.running_mean.data();
                let rv = self.running_var.data();
                let g = self.gamma.data();
                let bta = self.beta.data();
                let mut out = vec![0.0; rows * dim];
                for c in 0..dim {
                    let inv = 1.0 / (rv[c] + self.epsilon).sqrt();
                    for r in 0..rows {
                        out[r * dim + c] = g[c] * (xd[r * dim + c] - rm[c]) * inv + bta[c];
                    }
                }
                Ok((Tensor::new(x.shape(), out)?, None))
            }
        }
    }

    /// Full train-mode gradient including the mean and variance paths.
    pub fn backward(&self, ctx: &BatchNormCtx, grad_out: &Tensor) -> Result<BatchNormGrads> {
        if grad_out.shape() != ctx.x_hat.shape() {
            return Err(Error::ShapeMismatch {
                op: "batchnorm backward",
                left: ctx.x_hat.shape().to_vec(),
                right: grad_out.shape().to_vec(),
            });
        }
        let dim = self.dim;
        let rows = grad_out.len() / dim;
        let g = grad_out.data();
        let xh = ctx.x_hat.data();
        let gamma = self.gamma.data();

        let mut grad_gamma = vec![0.0; dim];
        let mut grad_beta = vec![0.0; dim];
        // Per-channel sums of grad_x_hat and grad_x_hat · x_hat.
        let mut sum_gh = vec![0.0; dim];
        let mut sum_gh_xh = vec![0.0; dim];
        for r in 0..rows {
            for c in 0..dim {
                let gv = g[r * dim + c];
                let hv = xh[r * dim + c];
                grad_beta[c] += gv;
                grad_gamma[c] += gv * hv;
                let gh = gv * gamma[c];
                sum_gh[c] += gh;
                sum_gh_xh[c] += gh * hv;
            }
        }
        let mut gx = vec![0.0; rows * dim];
        let m = rows as f64;
        for r in 0..rows {
            for c in 0..dim {
                let gh = g[r * dim + c] * gamma[c];
                let hv = xh[r * dim + c];
                gx[r * dim + c] =
                    ctx.inv_std[c] / m * (m * gh - sum_gh[c] - hv * sum_gh_xh[c]);
            }
        }
        Ok(BatchNormGrads {
            x: Tensor::new(ctx.x_hat.shape(), gx)?,
            gamma: Tensor::new(&[dim], grad_gamma)?,
            beta: Tensor::new(&[dim], grad_beta)?,
        })
    }
}
