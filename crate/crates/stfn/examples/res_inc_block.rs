//! Residual inception blocks over a feature sequence: four temporal
//! convolution branches (kernels 2, 3, 4, 5) concatenated, plus a
//! kernel-2 skip path, final ReLU. Output shape equals input shape, so
//! blocks stack.
//!
//! ```bash
//! cargo run --example res_inc_block
//! ```

use stfn::layers::Mode;
use stfn::res_inc::{stack_forward, ResIncBlock, DEFAULT_KERNELS};
use stfn::Tensor;

fn main() -> stfn::Result<()> {
    let (batch, segments, dim) = (2, 5, 8);
    let mut block = ResIncBlock::new(dim, 42)?;
    println!("kernels {DEFAULT_KERNELS:?}, branch width {} of dim {dim}", block.branch_width());

    let x = Tensor::random_normal(&[batch, segments, dim], 0.0, 1.0, 7);
    let (y, _) = block.forward(&x, Mode::Train)?;
    println!("input  shape {:?}", x.shape());
    println!("output shape {:?} (preserved)", y.shape());
    println!(
        "outputs non-negative (final relu): {}",
        y.data().iter().all(|&v| v >= 0.0)
    );

    // The skip path keeps gradients flowing even through a fresh block.
    let mut work = block.clone();
    let (_, ctx) = work.forward(&x, Mode::Train)?;
    let grads = work.backward(&ctx.unwrap(), &Tensor::full(&[batch, segments, dim], 1.0))?;
    println!("||grad_x|| = {:.4} (> 0 via the skip highway)", grads.x.norm());

    // Stacking: two blocks compose and still preserve the shape.
    let mut stack = vec![ResIncBlock::new(dim, 1)?, ResIncBlock::new(dim, 2)?];
    let (stacked, _) = stack_forward(&mut stack, &x, Mode::Train)?;
    println!("two stacked blocks: shape {:?}", stacked.shape());

    // Misconfiguration is caught at construction time.
    println!("dim 6 rejected: {}", ResIncBlock::new(6, 0).unwrap_err());
    Ok(())
}
