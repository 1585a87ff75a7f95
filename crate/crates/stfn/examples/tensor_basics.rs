//! Tour of the dense f64 tensor type every other module builds on.
//!
//! ```bash
//! cargo run --example tensor_basics
//! ```

use stfn::Tensor;

fn main() -> stfn::Result<()> {
    // Constructors.
    let zeros = Tensor::zeros(&[2, 3]);
    let fives = Tensor::full(&[2, 3], 5.0);
    let noise = Tensor::random_normal(&[2, 3], 0.0, 1.0, 7);
    println!("zeros  {:?}: {:?}", zeros.shape(), zeros.data());
    println!("fives  {:?}: {:?}", fives.shape(), fives.data());
    println!("noise  {:?}: {:?}", noise.shape(), noise.data());

    // Seeded randomness is reproducible.
    let again = Tensor::random_normal(&[2, 3], 0.0, 1.0, 7);
    println!("same seed draws identical values: {}", noise == again);

    // Element-wise arithmetic requires matching shapes.
    let sum = fives.add(&noise)?;
    let prod = fives.mul(&noise)?;
    println!("fives + noise = {:?}", sum.data());
    println!("fives * noise = {:?}", prod.data());
    let mismatch = fives.add(&Tensor::zeros(&[3]));
    println!("shape mismatch is a structured error: {}", mismatch.unwrap_err());

    // Reductions, matmul, concatenation, slicing.
    let m = Tensor::new(&[2, 2], vec![1.0, 3.0, 5.0, 7.0])?;
    println!("reduce_mean axis 0 of {:?} = {:?}", m.data(), m.reduce_mean(0)?.data());
    let id = Tensor::identity(2);
    println!("identity @ m == m: {}", id.matmul(&m)? == m);
    let wide = Tensor::concat(&[&m, &m], 1)?;
    println!("concat along axis 1 gives shape {:?}", wide.shape());
    let back = wide.slice(1, 0, 2)?;
    println!("slicing the concat boundary recovers the original: {}", back == m);
    Ok(())
}
