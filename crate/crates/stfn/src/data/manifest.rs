//! Dataset manifest and in-memory dataset.
//!
//! The manifest is a plain-text file:
//!
//! ```text
//! stfn-manifest v1
//! num_classes 4
//! dim 16
//! # id appearance_path motion_path label split
//! vid_train_0_0 features/vid_train_0_0.app.stfn features/vid_train_0_0.mot.stfn 0 train
//! ```
//!
//! Records are whitespace-separated (ids and paths therefore cannot
//! contain spaces); `#` lines are comments; feature paths are relative to
//! the manifest's directory. Splits are `train`, `val`, `test`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::feature_file::{read_feature_file, Modality};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?} (expected train|val|test)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ManifestRecord {
    pub id: String,
    pub appearance_path: PathBuf,
    pub motion_path: PathBuf,
    pub label: usize,
    pub split: Split,
    /// Line number in the manifest, for error reporting.
    pub line: usize,
}

#[derive(Clone, Debug)]
pub struct Manifest {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub records: Vec<ManifestRecord>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = String::new();
    text.push_str("stfn-manifest v1\n");
    text.push_str(&format!("num_classes {}\n", manifest.num_classes));
    text.push_str(&format!("dim {}\n", manifest.feature_dim));
    text.push_str("# id appearance_path motion_path label split\n");
    for r in &manifest.records {
        text.push_str(&format!(
            "{} {} {} {} {}\n",
            r.id,
            r.appearance_path.display(),
            r.motion_path.display(),
            r.label,
            r.split
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    let invalid = |line: usize, detail: String| Error::ManifestInvalid {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| invalid(1, "empty manifest".into()))?;
    if header.trim() != "stfn-manifest v1" {
        return Err(invalid(1, format!("bad header {header:?}")));
    }
    let mut num_classes = None;
    let mut feature_dim = None;
    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["num_classes", v] => {
                num_classes =
                    Some(v.parse::<usize>().map_err(|e| invalid(line_no, e.to_string()))?);
            }
            ["dim", v] => {
                feature_dim =
                    Some(v.parse::<usize>().map_err(|e| invalid(line_no, e.to_string()))?);
            }
            [id, app, mot, label, split] => {
                let label =
                    label.parse::<usize>().map_err(|e| invalid(line_no, e.to_string()))?;
                let split = split.parse::<Split>().map_err(|e| invalid(line_no, e.to_string()))?;
                records.push(ManifestRecord {
                    id: id.to_string(),
                    appearance_path: PathBuf::from(app),
                    motion_path: PathBuf::from(mot),
                    label,
                    split,
                    line: line_no,
                });
            }
            _ => return Err(invalid(line_no, format!("unrecognized line {line:?}"))),
        }
    }
    let num_classes = num_classes.ok_or_else(|| invalid(1, "missing num_classes header".into()))?;
    let feature_dim = feature_dim.ok_or_else(|| invalid(1, "missing dim header".into()))?;
    for r in &records {
        if r.label >= num_classes {
            return Err(invalid(
                r.line,
                format!("label {} out of range for {num_classes} classes", r.label),
            ));
        }
    }
    Ok(Manifest {
        num_classes,
        feature_dim,
        records,
    })
}

/// One video's features, both modalities in memory.
#[derive(Clone, Debug)]
pub struct VideoRecord {
    pub id: String,
    pub label: usize,
    pub split: Split,
    /// `(frames, dim)`.
    pub appearance: Tensor,
    /// `(frames, dim)`.
    pub motion: Tensor,
}

impl VideoRecord {
    pub fn frames(&self) -> usize {
        self.appearance.shape()[0]
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub videos: Vec<VideoRecord>,
}

impl Dataset {
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.videos
            .iter()
            .enumerate()
            .filter(|(_, v)| v.split == split)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Reads a manifest and every feature file it references, validating
/// cross-modality agreement.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let invalid = |line: usize, detail: String| Error::ManifestInvalid {
        path: manifest_path.to_path_buf(),
        line,
        detail,
    };
    let mut videos = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let app = read_feature_file(&base.join(&r.appearance_path))?;
        let mot = read_feature_file(&base.join(&r.motion_path))?;
        if app.modality != Modality::Appearance {
            return Err(invalid(r.line, format!("{}: appearance file has motion tag", r.id)));
        }
        if mot.modality != Modality::Motion {
            return Err(invalid(r.line, format!("{}: motion file has appearance tag", r.id)));
        }
        if app.features.shape() != mot.features.shape() {
            return Err(invalid(
                r.line,
                format!(
                    "{}: modalities disagree on shape ({:?} vs {:?})",
                    r.id,
                    app.features.shape(),
                    mot.features.shape()
                ),
            ));
        }
        if app.label != r.label || mot.label != r.label {
            return Err(invalid(
                r.line,
                format!(
                    "{}: label disagreement (manifest {}, appearance {}, motion {})",
                    r.id, r.label, app.label, mot.label
                ),
            ));
        }
        if app.features.shape()[1] != manifest.feature_dim {
            return Err(invalid(
                r.line,
                format!(
                    "{}: feature dim {} does not match manifest dim {}",
                    r.id,
                    app.features.shape()[1],
                    manifest.feature_dim
                ),
            ));
        }
        videos.push(VideoRecord {
            id: r.id.clone(),
            label: r.label,
            split: r.split,
            appearance: app.features,
            motion: mot.features,
        });
    }
    Ok(Dataset {
        num_classes: manifest.num_classes,
        feature_dim: manifest.feature_dim,
        videos,
    })
}
