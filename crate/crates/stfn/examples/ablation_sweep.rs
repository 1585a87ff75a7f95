//! Small in-process ablation: architecture variants and fusion operators
//! on one shared synthetic dataset and seed, so the rows differ only in
//! the architecture axis under study. The `stfn sweep` subcommand runs
//! the same grid (plus directions and segment counts) from the shell.
//!
//! ```bash
//! cargo run --example ablation_sweep
//! ```

use stfn::data::{synthesize, Split, SyntheticTaskSpec};
use stfn::fusion::{ArchVariant, FusionOp};
use stfn::model::{ModelConfig, StfnModel};
use stfn::train::{evaluate, train, TrainConfig};

fn main() -> stfn::Result<()> {
    let spec = SyntheticTaskSpec {
        train_per_class: 25,
        val_per_class: 5,
        test_per_class: 15,
        ..SyntheticTaskSpec::default()
    };
    let dataset = synthesize(&spec)?;
    let mut tc = TrainConfig::new(80, 5);
    tc.schedule.initial_lr = 1e-3;

    println!("{:<20} {:<10} {:>9}", "variant", "fusion", "test_acc");
    for variant in ArchVariant::ALL {
        for op in FusionOp::ALL {
            let mut mc = ModelConfig::new(dataset.feature_dim, dataset.num_classes);
            mc.variant = variant;
            mc.fusion_op = op;
            let mut model = StfnModel::new(mc, tc.seed)?;
            train(&mut model, &dataset, &tc)?;
            let acc = evaluate(&mut model, &dataset, Split::Test, tc.eval_samples_per_segment)?;
            println!("{:<20} {:<10} {:>9.4}", variant.name(), op.name(), acc);
        }
    }
    Ok(())
}
