//! The three fusion operators and the three wiring directions on toy
//! vectors.
//!
//! ```bash
//! cargo run --example fusion_playground
//! ```

use stfn::fusion::{fuse, fuse_backward, wire, FusionDirection, FusionOp};
use stfn::Tensor;

fn main() -> stfn::Result<()> {
    let pa = Tensor::new(&[4], vec![2.0, 0.5, -1.0, 3.0])?;
    let pm = Tensor::new(&[4], vec![4.0, 2.0, 1.0, -3.0])?;
    println!("appearance {:?}", pa.data());
    println!("motion     {:?}", pm.data());

    for op in FusionOp::ALL {
        let (fused, ctx) = fuse(op, &pa, &pm)?;
        let (ga, gm) = fuse_backward(op, &ctx, &Tensor::full(&[4], 1.0))?;
        println!("\n{}:", op.name());
        println!("  fused        {:?}", fused.data());
        println!("  grad wrt A   {:?}", ga.data());
        println!("  grad wrt M   {:?}", gm.data());
    }

    println!("\nwiring with the average operator:");
    for direction in FusionDirection::ALL {
        let wired = wire(direction, FusionOp::Average, &pa, &pm)?;
        println!(
            "  {:<14} stage-2 A gets {:?}, stage-2 M gets {:?}",
            direction.name(),
            wired.stream_a.data(),
            wired.stream_m.data()
        );
    }
    Ok(())
}
