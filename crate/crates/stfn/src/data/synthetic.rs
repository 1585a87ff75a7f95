//! Synthetic two-modality dataset generator.
//!
//! The generator builds classification tasks whose difficulty is known by
//! construction, used by the acceptance experiments:
//!
//! * `Complementary` — each video carries latent codes `u` (appearance)
//!   and `v` (motion) with label `(u + v) mod C`. Codes are assigned so
//!   every class sees every appearance code equally often, which makes the
//!   per-modality marginals identical across classes: no single-modality
//!   classifier can beat chance, while the pair determines the label
//!   exactly.
//! * `Redundant` — both modalities carry the label directly; a
//!   nearest-centroid classifier on either one solves the task.
//!
//! Codes are embedded as mutually orthonormal direction vectors added to
//! Gaussian noise. The informative direction appears only inside a fixed
//! window of segments (1-based `ceil(N/3) ..= ceil(2N/3)`), so temporal
//! position matters and a model that only pools globally is disadvantaged.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::feature_file::{write_feature_file, Modality};
use crate::data::manifest::{write_manifest, Dataset, Manifest, ManifestRecord, Split, VideoRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Complementary,
    Redundant,
}

impl std::str::FromStr for Coupling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complementary" => Ok(Coupling::Complementary),
            "redundant" => Ok(Coupling::Redundant),
            _ => Err(Error::Config(format!(
                "unknown coupling {s:?} (expected complementary|redundant)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Frames per video.
    pub frames: usize,
    /// Segment count the informative window is aligned to.
    pub num_segments: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub coupling: Coupling,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            feature_dim: 16,
            frames: 20,
            num_segments: 5,
            train_per_class: 50,
            val_per_class: 10,
            test_per_class: 25,
            noise_std: 0.1,
            seed: 1,
            coupling: Coupling::Complementary,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("synthetic task needs at least 2 classes".into()));
        }
        if self.feature_dim == 0 || !self.feature_dim.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "feature_dim {} must be a positive multiple of 4",
                self.feature_dim
            )));
        }
        if self.feature_dim < 2 * self.num_classes {
            return Err(Error::Config(format!(
                "feature_dim {} too small for {} orthonormal code directions",
                self.feature_dim,
                2 * self.num_classes
            )));
        }
        if self.num_segments == 0 || self.frames < self.num_segments {
            return Err(Error::VideoTooShort {
                frames: self.frames,
                segments: self.num_segments,
            });
        }
        if self.train_per_class == 0 {
            return Err(Error::Config("train_per_class must be at least 1".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }

    /// Frame range carrying the informative direction: the segments with
    /// 1-based indices `ceil(N/3) ..= ceil(2N/3)`.
    pub fn signal_window(&self) -> std::ops::Range<usize> {
        let n = self.num_segments;
        let t = self.frames;
        let first = n.div_ceil(3) - 1;
        let last = (2 * n).div_ceil(3) - 1;
        (first * t / n)..((last + 1) * t / n)
    }
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Orthonormal code directions via Gram-Schmidt over seeded Gaussians;
/// first `C` for appearance, last `C` for motion.
fn code_directions(count: usize, dim: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        for u in &dirs {
            let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= proj * ui;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-8, "degenerate direction draw");
        for vi in &mut v {
            *vi /= norm;
        }
        dirs.push(v);
    }
    dirs
}

fn make_sequence(
    spec: &SyntheticTaskSpec,
    direction: &[f64],
    rng: &mut ChaCha20Rng,
) -> Tensor {
    let (t, d) = (spec.frames, spec.feature_dim);
    let window = spec.signal_window();
    let mut data = vec![0.0; t * d];
    for f in 0..t {
        let in_window = window.contains(&f);
        for c in 0..d {
            let mut v = spec.noise_std * normal(rng);
            if in_window {
                v += direction[c];
            }
            data[f * d + c] = v;
        }
    }
    Tensor::new(&[t, d], data).expect("shape matches data")
}

/// Builds the dataset in memory. Deterministic for a fixed spec.
pub fn synthesize(spec: &SyntheticTaskSpec) -> Result<Dataset> {
    spec.validate()?;
    let c = spec.num_classes;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let dirs = code_directions(2 * c, spec.feature_dim, &mut rng);
    let (a_dirs, m_dirs) = dirs.split_at(c);

    let mut videos = Vec::new();
    for (split, per_class) in [
        (Split::Train, spec.train_per_class),
        (Split::Val, spec.val_per_class),
        (Split::Test, spec.test_per_class),
    ] {
        for label in 0..c {
            for i in 0..per_class {
                // Cycle the appearance code so every class sees every code
                // equally often; the motion code completes the label.
                let (ua, vm) = match spec.coupling {
                    Coupling::Complementary => {
                        let u = i % c;
                        (u, (label + c - u) % c)
                    }
                    Coupling::Redundant => (label, label),
                };
                let appearance = make_sequence(spec, &a_dirs[ua], &mut rng);
                let motion = make_sequence(spec, &m_dirs[vm], &mut rng);
                videos.push(VideoRecord {
                    id: format!("{split}_c{label}_{i:04}"),
                    label,
                    split,
                    appearance,
                    motion,
                });
            }
        }
    }
    Ok(Dataset {
        num_classes: c,
        feature_dim: spec.feature_dim,
        videos,
    })
}

/// Writes the dataset to `out_dir` (feature files under `features/`, plus
/// `manifest.txt`) and returns the manifest path.
pub fn generate_synthetic(spec: &SyntheticTaskSpec, out_dir: &Path) -> Result<PathBuf> {
    let dataset = synthesize(spec)?;
    let feature_dir = out_dir.join("features");
    fs::create_dir_all(&feature_dir)?;
    let mut records = Vec::with_capacity(dataset.videos.len());
    for v in &dataset.videos {
        let app_rel = PathBuf::from("features").join(format!("{}.app.stfn", v.id));
        let mot_rel = PathBuf::from("features").join(format!("{}.mot.stfn", v.id));
        write_feature_file(&out_dir.join(&app_rel), Modality::Appearance, v.label, &v.appearance)?;
        write_feature_file(&out_dir.join(&mot_rel), Modality::Motion, v.label, &v.motion)?;
        records.push(ManifestRecord {
            id: v.id.clone(),
            appearance_path: app_rel,
            motion_path: mot_rel,
            label: v.label,
            split: v.split,
            line: 0,
        });
    }
    let manifest_path = out_dir.join("manifest.txt");
    write_manifest(
        &manifest_path,
        &Manifest {
            num_classes: dataset.num_classes,
            feature_dim: dataset.feature_dim,
            records,
        },
    )?;
    Ok(manifest_path)
}
