//! Save a trained model to the binary checkpoint format, load it back,
//! and verify that eval-mode predictions are bit-identical.
//!
//! ```bash
//! cargo run --example checkpoint_roundtrip
//! ```

use stfn::data::{load_checkpoint, save_checkpoint, synthesize, Split, SyntheticTaskSpec};
use stfn::model::{ModelConfig, StfnModel};
use stfn::train::{predict_split, train, TrainConfig};

fn main() -> stfn::Result<()> {
    let spec = SyntheticTaskSpec {
        train_per_class: 8,
        val_per_class: 2,
        test_per_class: 4,
        ..SyntheticTaskSpec::default()
    };
    let dataset = synthesize(&spec)?;
    let mut model = StfnModel::new(ModelConfig::new(dataset.feature_dim, dataset.num_classes), 3)?;
    let mut tc = TrainConfig::new(20, 3);
    tc.schedule.initial_lr = 1e-3;
    train(&mut model, &dataset, &tc)?;

    let dir = std::env::temp_dir().join("stfn_checkpoint_roundtrip");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.stfn");
    save_checkpoint(&model, &path)?;
    println!("checkpoint written to {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let mut loaded = load_checkpoint(&path)?;
    println!("loaded config: {:?}", loaded.config);

    let before = predict_split(&mut model, &dataset, Split::Test, 5)?;
    let after = predict_split(&mut loaded, &dataset, Split::Test, 5)?;
    let identical = before
        .iter()
        .zip(&after)
        .all(|(a, b)| a.scores == b.scores && a.predicted == b.predicted);
    println!("eval predictions bit-identical after round trip: {identical}");
    Ok(())
}
