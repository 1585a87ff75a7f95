//! Binary per-video feature file.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset size  field
//! 0      4     magic "STFN"
//! 4      2     format version (u16, currently 1)
//! 6      1     modality tag (0 appearance, 1 motion)
//! 7      4     frame count T (u32)
//! 11     4     feature dim d (u32)
//! 15     4     class label (u32)
//! 19     4·T·d payload: T·d f32 values, frame-major (row-major)
//! ```
//!
//! Features are stored as 32-bit floats (matching realistic backbone
//! dumps) and widened to 64-bit on read.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"STFN";
pub const FEATURE_VERSION: u16 = 1;

const HEADER_LEN: usize = 19;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Appearance = 0,
    Motion = 1,
}

impl Modality {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8, path: &Path) -> Result<Self> {
        match tag {
            0 => Ok(Modality::Appearance),
            1 => Ok(Modality::Motion),
            other => Err(Error::Corrupt {
                path: path.to_path_buf(),
                detail: format!("unknown modality tag {other}"),
            }),
        }
    }
}

/// Decoded contents of one feature file.
pub struct FeatureFile {
    pub modality: Modality,
    pub label: usize,
    /// `(frames, dim)` feature matrix.
    pub features: Tensor,
}

pub fn write_feature_file(
    path: &Path,
    modality: Modality,
    label: usize,
    features: &Tensor,
) -> Result<()> {
    if features.rank() != 2 {
        return Err(Error::BadShape {
            op: "write_feature_file",
            expected: "(frames, dim)".into(),
            got: features.shape().to_vec(),
        });
    }
    let (frames, dim) = (features.shape()[0], features.shape()[1]);
    if let Some(index) = features.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: path.to_path_buf(),
            index,
        });
    }
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * frames * dim);
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    bytes.push(modality.tag());
    bytes.extend_from_slice(&(frames as u32).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(label as u32).to_le_bytes());
    for &v in features.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<FeatureFile> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("{} bytes is shorter than the {HEADER_LEN}-byte header", bytes.len()),
        });
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "STFN",
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
            supported: FEATURE_VERSION,
        });
    }
    let modality = Modality::from_tag(bytes[6], path)?;
    let frames = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let label = u32::from_le_bytes(bytes[15..19].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 4 * frames * dim;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!(
                "header declares {frames}x{dim} floats ({expected} bytes), file has {}",
                bytes.len()
            ),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            detail: format!("{} trailing bytes after the declared payload", bytes.len() - expected),
        });
    }
    let mut data = Vec::with_capacity(frames * dim);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                index: i,
            });
        }
        data.push(v as f64);
    }
    Ok(FeatureFile {
        modality,
        label,
        features: Tensor::new(&[frames, dim], data)?,
    })
}
