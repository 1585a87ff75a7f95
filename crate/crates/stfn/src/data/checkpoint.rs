//! Binary model checkpoint.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "STFNCKPT" (8 bytes)
//! version u16 (currently 1)
//! feature_dim u32, num_classes u32, num_segments u32, blocks_per_stage u32
//! variant u8, fusion_op u8, direction u8
//! tensor_count u32
//! per tensor: rank u8, extents u32 × rank, values f64 × product(extents)
//! ```
//!
//! Tensors appear in the model's state order ([`StfnModel::state_tensors`]):
//! parameters and batch-norm running statistics in a fixed traversal, so a
//! round trip reproduces eval-mode outputs bit-exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{ArchVariant, FusionDirection, FusionOp};
use crate::model::{ModelConfig, StfnModel};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STFNCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

fn variant_code(v: ArchVariant) -> u8 {
    match v {
        ArchVariant::TwoStageFused => 0,
        ArchVariant::SingleStageFused => 1,
        ArchVariant::ConcatFirst => 2,
    }
}

fn variant_from(code: u8, path: &Path) -> Result<ArchVariant> {
    match code {
        0 => Ok(ArchVariant::TwoStageFused),
        1 => Ok(ArchVariant::SingleStageFused),
        2 => Ok(ArchVariant::ConcatFirst),
        other => Err(Error::Corrupt {
            path: path.to_path_buf(),
            detail: format!("unknown variant code {other}"),
        }),
    }
}

fn op_code(op: FusionOp) -> u8 {
    match op {
        FusionOp::Average => 0,
        FusionOp::Multiply => 1,
        FusionOp::Maximum => 2,
    }
}

fn op_from(code: u8, path: &Path) -> Result<FusionOp> {
    match code {
        0 => Ok(FusionOp::Average),
        1 => Ok(FusionOp::Multiply),
        2 => Ok(FusionOp::Maximum),
        other => Err(Error::Corrupt {
            path: path.to_path_buf(),
            detail: format!("unknown fusion op code {other}"),
        }),
    }
}

fn direction_code(d: FusionDirection) -> u8 {
    match d {
        FusionDirection::AppearanceToMotion => 0,
        FusionDirection::MotionToAppearance => 1,
        FusionDirection::Bidirectional => 2,
    }
}

fn direction_from(code: u8, path: &Path) -> Result<FusionDirection> {
    match code {
        0 => Ok(FusionDirection::AppearanceToMotion),
        1 => Ok(FusionDirection::MotionToAppearance),
        2 => Ok(FusionDirection::Bidirectional),
        other => Err(Error::Corrupt {
            path: path.to_path_buf(),
            detail: format!("unknown direction code {other}"),
        }),
    }
}

pub fn save_checkpoint(model: &StfnModel, path: &Path) -> Result<()> {
    let cfg = &model.config;
    let tensors = model.state_tensors();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(cfg.feature_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(cfg.num_classes as u32).to_le_bytes());
    bytes.extend_from_slice(&(cfg.num_segments as u32).to_le_bytes());
    bytes.extend_from_slice(&(cfg.blocks_per_stage as u32).to_le_bytes());
    bytes.push(variant_code(cfg.variant));
    bytes.push(op_code(cfg.fusion_op));
    bytes.push(direction_code(cfg.direction));
    bytes.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        bytes.push(t.rank() as u8);
        for &e in t.shape() {
            bytes.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                detail: format!(
                    "needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<StfnModel> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "STFNCKPT",
        });
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let feature_dim = r.u32()? as usize;
    let num_classes = r.u32()? as usize;
    let num_segments = r.u32()? as usize;
    let blocks_per_stage = r.u32()? as usize;
    let variant = variant_from(r.u8()?, path)?;
    let fusion_op = op_from(r.u8()?, path)?;
    let direction = direction_from(r.u8()?, path)?;
    let config = ModelConfig {
        feature_dim,
        num_classes,
        num_segments,
        variant,
        fusion_op,
        direction,
        blocks_per_stage,
    };
    let mut model = StfnModel::new(config, 0).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        detail: format!("invalid stored config: {e}"),
    })?;
    let count = r.u32()? as usize;
    {
        let mut slots = model.state_tensors_mut();
        if count != slots.len() {
            return Err(Error::Corrupt {
                path: path.to_path_buf(),
                detail: format!("expected {} tensors for this config, file has {count}", slots.len()),
            });
        }
        for slot in slots.iter_mut() {
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            if shape != slot.shape() {
                return Err(Error::Corrupt {
                    path: path.to_path_buf(),
                    detail: format!("tensor shape {shape:?} does not match expected {:?}", slot.shape()),
                });
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(r.f64()?);
            }
            **slot = Tensor::new(&shape, data)?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            detail: format!("{} trailing bytes after the last tensor", bytes.len() - r.pos),
        });
    }
    Ok(model)
}
