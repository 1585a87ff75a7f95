//! Frame sampling: how a video becomes a fixed-length feature sequence.
//! Training draws one random frame per segment; evaluation builds five
//! evenly spaced sequences whose predictions are averaged.
//!
//! ```bash
//! cargo run --example segment_sampling
//! ```

use stfn::train::{segment_bounds, SegmentSampler};

fn main() -> stfn::Result<()> {
    let (frames, segments) = (23usize, 5usize);
    println!("video of {frames} frames divided into {segments} segments:");
    for s in 0..segments {
        let (lo, hi) = segment_bounds(s, frames, segments);
        println!("  segment {s}: frames {lo}..{hi}");
    }

    let mut sampler = SegmentSampler::new(segments, 11);
    println!("\nthree training draws (one random frame per segment):");
    for _ in 0..3 {
        println!("  {:?}", sampler.sample_train(frames)?);
    }

    println!("\nevaluation sequences (5 evenly spaced positions per segment):");
    for (j, list) in sampler.sample_eval(frames, 5)?.iter().enumerate() {
        println!("  sequence {j}: {list:?}");
    }

    println!(
        "\ntoo-short videos are rejected: {}",
        sampler.sample_train(3).unwrap_err()
    );
    Ok(())
}
