//! Residual inception block over temporal sequences.
//!
//! Four parallel conv_b branches (1D convolution → batch norm → ReLU) with
//! kernel sizes 2, 3, 4, 5 each map a `(batch, time, d)` sequence to width
//! `d/4`. Their concatenation is added to a kernel-2 skip convolution
//! (convolution → batch norm, no ReLU), and the sum is passed through a
//! final ReLU. Output shape always equals input shape, so blocks stack
//! freely.
//!
//! Branch order in the concatenation is fixed ascending by kernel size so
//! checkpoints are portable. Classic 1x1 reduction convolutions are
//! deliberately absent.

use crate::error::{Error, Result};
use crate::layers::{
    relu_backward, relu_forward, BatchNorm1d, BatchNormCtx, Conv1d, Conv1dCtx, Mode, ReluCtx,
};
use crate::tensor::Tensor;

pub const DEFAULT_KERNELS: [usize; 4] = [2, 3, 4, 5];
const SKIP_KERNEL: usize = 2;

/// conv_b unit: convolution plus batch norm. The block applies the ReLU
/// (branches) or omits it (skip path).
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub conv: Conv1d,
    pub bn: BatchNorm1d,
}

#[derive(Clone, Debug)]
pub struct ResIncBlock {
    pub dim: usize,
    /// Branches in ascending kernel order, each `dim → dim / branches.len()`.
    pub branches: Vec<ConvBlock>,
    /// Kernel-2 skip path, `dim → dim`, no ReLU.
    pub skip: ConvBlock,
}

pub struct ResIncCtx {
    branch: Vec<(Conv1dCtx, BatchNormCtx, ReluCtx)>,
    skip_conv: Conv1dCtx,
    skip_bn: BatchNormCtx,
    out_relu: ReluCtx,
    branch_width: usize,
}

pub struct ResIncGrads {
    pub x: Tensor,
    /// Parameter gradients in the block's canonical order (see
    /// [`ResIncBlock::visit_params`]).
    pub params: Vec<Tensor>,
}

impl ResIncBlock {
    /// Block with the default kernel set {2, 3, 4, 5}; `dim` must be
    /// divisible by 4.
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        Self::with_kernels(dim, &DEFAULT_KERNELS, seed)
    }

    /// Experimental constructor with a custom kernel set; `dim` must be
    /// divisible by the number of kernels.
    pub fn with_kernels(dim: usize, kernels: &[usize], seed: u64) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Config("res-inc block needs at least one branch".into()));
        }
        if dim == 0 || !dim.is_multiple_of(kernels.len()) {
            return Err(Error::Config(format!(
                "res-inc dim {dim} not divisible by branch count {}",
                kernels.len()
            )));
        }
        let width = dim / kernels.len();
        let mut branches = Vec::with_capacity(kernels.len());
        for (i, &k) in kernels.iter().enumerate() {
            branches.push(ConvBlock {
                conv: Conv1d::new(k, dim, width, seed.wrapping_add(i as u64))?,
                bn: BatchNorm1d::new(width)?,
            });
        }
        let skip = ConvBlock {
            conv: Conv1d::new(SKIP_KERNEL, dim, dim, seed.wrapping_add(kernels.len() as u64))?,
            bn: BatchNorm1d::new(dim)?,
        };
        Ok(Self { dim, branches, skip })
    }

    pub fn branch_width(&self) -> usize {
        self.dim / self.branches.len()
    }

    /// `out = ReLU(concat(branch_k(x)...) + skip(x))`; output shape equals
    /// input shape.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<ResIncCtx>)> {
        let width = self.branch_width();
        let mut branch_outs = Vec::with_capacity(self.branches.len());
        let mut branch_ctxs = Vec::with_capacity(self.branches.len());
        for br in &mut self.branches {
            let (c, c_ctx) = br.conv.forward(x)?;
            let (b, b_ctx) = br.bn.forward(&c, mode)?;
            let (r, r_ctx) = relu_forward(&b);
            branch_outs.push(r);
            if let Some(b_ctx) = b_ctx {
                branch_ctxs.push((c_ctx, b_ctx, r_ctx));
            }
        }
        let refs: Vec<&Tensor> = branch_outs.iter().collect();
        let cat = Tensor::concat(&refs, 2)?;
        let (s, s_conv_ctx) = self.skip.conv.forward(x)?;
        let (s, s_bn_ctx) = self.skip.bn.forward(&s, mode)?;
        let pre = cat.add(&s)?;
        let (out, out_relu) = relu_forward(&pre);
        let ctx = match mode {
            Mode::Train => Some(ResIncCtx {
                branch: branch_ctxs,
                skip_conv: s_conv_ctx,
                skip_bn: s_bn_ctx.expect("train mode yields a bn context"),
                out_relu,
                branch_width: width,
            }),
            Mode::Eval => None,
        };
        Ok((out, ctx))
    }

    /// Input gradient sums the contributions of all four branches and the
    /// skip path.
    pub fn backward(&self, ctx: &ResIncCtx, grad_out: &Tensor) -> Result<ResIncGrads> {
        let g_pre = relu_backward(&ctx.out_relu, grad_out)?;

        // The skip path and the concatenation both feed the addition, so
        // each receives g_pre unchanged.
        let skip_bn_grads = self.skip.bn.backward(&ctx.skip_bn, &g_pre)?;
        let skip_conv_grads = self.skip.conv.backward(&ctx.skip_conv, &skip_bn_grads.x)?;
        let mut grad_x = skip_conv_grads.x;

        let width = ctx.branch_width;
        let mut params = Vec::with_capacity(4 * (self.branches.len() + 1));
        for (i, br) in self.branches.iter().enumerate() {
            let (c_ctx, b_ctx, r_ctx) = &ctx.branch[i];
            let g_slice = g_pre.slice(2, i * width, width)?;
            let g_bn_out = relu_backward(r_ctx, &g_slice)?;
            let bn_grads = br.bn.backward(b_ctx, &g_bn_out)?;
            let conv_grads = br.conv.backward(c_ctx, &bn_grads.x)?;
            grad_x = grad_x.add(&conv_grads.x)?;
            params.push(conv_grads.weights);
            params.push(conv_grads.bias);
            params.push(bn_grads.gamma);
            params.push(bn_grads.beta);
        }
        params.push(skip_conv_grads.weights);
        params.push(skip_conv_grads.bias);
        params.push(skip_bn_grads.gamma);
        params.push(skip_bn_grads.beta);
        Ok(ResIncGrads { x: grad_x, params })
    }

    /// Canonical parameter order: for each branch (ascending kernel size)
    /// conv weights, conv bias, bn gamma, bn beta; then the same four for
    /// the skip path.
    pub fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        for br in &self.branches {
            out.push(&br.conv.weights);
            out.push(&br.conv.bias);
            out.push(&br.bn.gamma);
            out.push(&br.bn.beta);
        }
        out.push(&self.skip.conv.weights);
        out.push(&self.skip.conv.bias);
        out.push(&self.skip.bn.gamma);
        out.push(&self.skip.bn.beta);
    }

    pub fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for br in &mut self.branches {
            out.push(&mut br.conv.weights);
            out.push(&mut br.conv.bias);
            out.push(&mut br.bn.gamma);
            out.push(&mut br.bn.beta);
        }
        out.push(&mut self.skip.conv.weights);
        out.push(&mut self.skip.conv.bias);
        out.push(&mut self.skip.bn.gamma);
        out.push(&mut self.skip.bn.beta);
    }

    /// Checkpoint order: the parameters above plus each batch norm's
    /// running mean and variance directly after its beta.
    pub fn visit_state<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        for br in &self.branches {
            out.push(&br.conv.weights);
            out.push(&br.conv.bias);
            out.push(&br.bn.gamma);
            out.push(&br.bn.beta);
            out.push(&br.bn.running_mean);
            out.push(&br.bn.running_var);
        }
        out.push(&self.skip.conv.weights);
        out.push(&self.skip.conv.bias);
        out.push(&self.skip.bn.gamma);
        out.push(&self.skip.bn.beta);
        out.push(&self.skip.bn.running_mean);
        out.push(&self.skip.bn.running_var);
    }

    pub fn visit_state_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for br in &mut self.branches {
            out.push(&mut br.conv.weights);
            out.push(&mut br.conv.bias);
            out.push(&mut br.bn.gamma);
            out.push(&mut br.bn.beta);
            out.push(&mut br.bn.running_mean);
            out.push(&mut br.bn.running_var);
        }
        out.push(&mut self.skip.conv.weights);
        out.push(&mut self.skip.conv.bias);
        out.push(&mut self.skip.bn.gamma);
        out.push(&mut self.skip.bn.beta);
        out.push(&mut self.skip.bn.running_mean);
        out.push(&mut self.skip.bn.running_var);
    }
}

pub struct StackCtx {
    blocks: Vec<ResIncCtx>,
}

pub struct StackGrads {
    pub x: Tensor,
    pub params: Vec<Tensor>,
}

/// Sequential composition of blocks; an empty stack is the identity.
pub fn stack_forward(
    blocks: &mut [ResIncBlock],
    x: &Tensor,
    mode: Mode,
) -> Result<(Tensor, Option<StackCtx>)> {
    if let Some(first) = blocks.first() {
        let dim = first.dim;
        if let Some(bad) = blocks.iter().find(|b| b.dim != dim) {
            return Err(Error::Config(format!(
                "stacked blocks disagree on dim: {} vs {}",
                dim, bad.dim
            )));
        }
    }
    let mut cur = x.clone();
    let mut ctxs = Vec::with_capacity(blocks.len());
    for block in blocks.iter_mut() {
        let (next, ctx) = block.forward(&cur, mode)?;
        cur = next;
        if let Some(ctx) = ctx {
            ctxs.push(ctx);
        }
    }
    let ctx = match mode {
        Mode::Train => Some(StackCtx { blocks: ctxs }),
        Mode::Eval => None,
    };
    Ok((cur, ctx))
}

/// Parameter gradients are returned block by block in stack order.
pub fn stack_backward(
    blocks: &[ResIncBlock],
    ctx: &StackCtx,
    grad_out: &Tensor,
) -> Result<StackGrads> {
    let mut grad = grad_out.clone();
    let mut per_block = Vec::with_capacity(blocks.len());
    for (block, bctx) in blocks.iter().zip(&ctx.blocks).rev() {
        let grads = block.backward(bctx, &grad)?;
        grad = grads.x;
        per_block.push(grads.params);
    }
    per_block.reverse();
    Ok(StackGrads {
        x: grad,
        params: per_block.into_iter().flatten().collect(),
    })
}
