//! End-to-end training on the complementary synthetic task: the default
//! two-stage fused model learns a labeling that neither modality carries
//! alone.
//!
//! ```bash
//! cargo run --example train_synthetic
//! ```

use stfn::data::{synthesize, Split, SyntheticTaskSpec};
use stfn::model::{ModelConfig, StfnModel};
use stfn::train::{evaluate, train, TrainConfig};

fn main() -> stfn::Result<()> {
    let spec = SyntheticTaskSpec::default(); // complementary, C=4, d=16
    let dataset = synthesize(&spec)?;
    println!(
        "complementary task: {} train / {} test videos, chance accuracy {:.2}",
        dataset.indices_of(Split::Train).len(),
        dataset.indices_of(Split::Test).len(),
        1.0 / dataset.num_classes as f64
    );

    // Defaults: two-stage architecture, average fusion, bidirectional.
    let config = ModelConfig::new(dataset.feature_dim, dataset.num_classes);
    let mut model = StfnModel::new(config, 7)?;

    let mut tc = TrainConfig::new(120, 7);
    tc.schedule.initial_lr = 1e-3;
    let report = train(&mut model, &dataset, &tc)?;

    println!("\nepoch  train_loss  val_acc  lr");
    for r in report.epochs.iter().step_by(10) {
        println!(
            "{:>5}  {:>10.4}  {:>7.3}  {:.1e}",
            r.epoch, r.train_loss, r.val_accuracy, r.lr
        );
    }

    let test_acc = evaluate(&mut model, &dataset, Split::Test, tc.eval_samples_per_segment)?;
    println!("\ntest accuracy after {} epochs: {test_acc:.4}", tc.max_epochs);
    Ok(())
}
