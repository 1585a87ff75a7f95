//! On-disk formats and dataset handling: per-video feature files, the
//! dataset manifest, model checkpoints, and the synthetic two-modality
//! task generator.

mod checkpoint;
mod feature_file;
mod manifest;
mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use feature_file::{
    read_feature_file, write_feature_file, FeatureFile, Modality, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use manifest::{
    load_dataset, read_manifest, write_manifest, Dataset, Manifest, ManifestRecord, Split,
    VideoRecord,
};
pub use synthetic::{generate_synthetic, synthesize, Coupling, SyntheticTaskSpec};
