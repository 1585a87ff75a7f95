//! Spatio-temporal fusion head for two-modality feature sequences.
//!
//! This crate implements a classification head that takes per-segment
//! feature sequences from two modalities (appearance and motion), extracts
//! temporal dynamics with residual-inception blocks built on same-length
//! 1D convolutions, fuses the two streams with a configurable element-wise
//! operator and wiring, and trains the whole thing end to end with
//! hand-written reverse-mode differentiation. Everything is f64 and
//! deterministic for a fixed seed.
//!
//! The quickest tour is the `examples/` directory — one runnable example
//! per capability:
//!
//! ```bash
//! cargo run --example tensor_basics
//! cargo run --example gradient_check
//! cargo run --example res_inc_block
//! cargo run --example fusion_playground
//! cargo run --example segment_sampling
//! cargo run --example synthetic_dataset
//! cargo run --example train_synthetic
//! cargo run --example checkpoint_roundtrip
//! cargo run --example ablation_sweep
//! ```
//!
//! The same functionality is reachable from the `stfn` binary
//! (`gen`, `train`, `eval`, `gradcheck`, `sweep` subcommands).

pub mod cli;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod res_inc;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
