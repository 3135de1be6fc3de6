//! Binary checkpoint format.
//!
//! Layout: 5-byte magic, version byte, tensor count (u32), then one record
//! per tensor (name length, UTF-8 name, rank, extents, f32 payload), then a
//! JSON metadata blob running to end of file. All integers and floats are
//! little-endian. Optimiser moments ride along as tensors named
//! `adam.m.<param>` and `adam.v.<param>`.

use std::io::Write as _;
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{build_model, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::rng::{RngState, SeedStream};
use crate::tensor::{AdamHyper, AdamState};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"QTAE1";
pub const CHECKPOINT_VERSION: u8 = 1;

const ADAM_M_PREFIX: &str = "adam.m.";
const ADAM_V_PREFIX: &str = "adam.v.";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub lattice: LatticeSpec,
    pub image: [usize; 3],
    /// Learning rate the stored run trained at.
    pub lr: f64,
    /// Completed epochs.
    pub epoch: usize,
    pub adam_step: u64,
    /// Epoch-stream state after the last completed epoch, so a resumed run
    /// shuffles exactly as the uninterrupted one would.
    pub rng: RngState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// Snapshot a model and its optimiser.
    pub fn capture(model: &TrainedModel, adam: &AdamState<f32>, meta: CheckpointMeta) -> Self {
        let params = model.backbone().named_parameters();
        let mut tensors: Vec<NamedTensor> = params
            .iter()
            .map(|(name, t)| NamedTensor {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        let (m, v) = adam.moments();
        if !m.is_empty() {
            assert_eq!(m.len(), params.len(), "optimiser tracks a different parameter set");
            for (i, (name, t)) in params.iter().enumerate() {
                tensors.push(NamedTensor {
                    name: format!("{ADAM_M_PREFIX}{name}"),
                    shape: t.shape().to_vec(),
                    data: m[i].clone(),
                });
                tensors.push(NamedTensor {
                    name: format!("{ADAM_V_PREFIX}{name}"),
                    shape: t.shape().to_vec(),
                    data: v[i].clone(),
                });
            }
        }
        Checkpoint { tensors, meta }
    }

    /// Rebuild the model, optimiser, and epoch stream this checkpoint froze.
    pub fn instantiate(&self) -> Result<(TrainedModel, AdamState<f32>, SeedStream)> {
        let expected = self.meta.config.lattice()?;
        if expected != self.meta.lattice {
            return Err(Error::contract(
                "checkpoint metadata: lattice does not match its train config",
            ));
        }
        let mut model = build_model(&self.meta.config, self.meta.image)?;

        let mut by_name: std::collections::HashMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        if by_name.len() != self.tensors.len() {
            return Err(Error::contract("checkpoint holds duplicate tensor names"));
        }

        let names: Vec<(String, Vec<usize>)> = model
            .backbone()
            .named_parameters()
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect();
        for (name, shape) in &names {
            let record = by_name.remove(name.as_str()).ok_or_else(|| {
                Error::contract(format!("checkpoint is missing parameter {name}"))
            })?;
            if &record.shape != shape {
                return Err(Error::contract(format!(
                    "checkpoint parameter {name} has shape {:?}, model expects {shape:?}",
                    record.shape
                )));
            }
            model.backbone_mut().set_parameter(name, &record.data)?;
        }

        let mut adam = AdamState::new(AdamHyper::with_lr(self.meta.lr));
        let has_moments = self
            .tensors
            .iter()
            .any(|t| t.name.starts_with(ADAM_M_PREFIX) || t.name.starts_with(ADAM_V_PREFIX));
        if has_moments {
            let mut ms = Vec::with_capacity(names.len());
            let mut vs = Vec::with_capacity(names.len());
            for (name, shape) in &names {
                for (prefix, bucket) in
                    [(ADAM_M_PREFIX, &mut ms), (ADAM_V_PREFIX, &mut vs)]
                {
                    let key = format!("{prefix}{name}");
                    let record = by_name.remove(key.as_str()).ok_or_else(|| {
                        Error::contract(format!("checkpoint is missing moment {key}"))
                    })?;
                    if &record.shape != shape {
                        return Err(Error::contract(format!(
                            "checkpoint moment {key} has shape {:?}, expected {shape:?}",
                            record.shape
                        )));
                    }
                    bucket.push(record.data.clone());
                }
            }
            adam.restore_moments(ms, vs)?;
        } else if self.meta.adam_step > 0 {
            return Err(Error::contract(
                "checkpoint records optimiser steps but holds no moments",
            ));
        }
        adam.set_step_count(self.meta.adam_step);
        if let Some(stray) = by_name.keys().next() {
            return Err(Error::contract(format!("checkpoint holds unknown tensor {stray}")));
        }

        let rng = SeedStream::restore(&self.meta.rng)?;
        Ok((model, adam, rng))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.write_u8(CHECKPOINT_VERSION)?;
        out.write_u32::<LittleEndian>(u32::try_from(self.tensors.len()).map_err(|_| {
            Error::contract("checkpoint holds more than u32::MAX tensors")
        })?)?;
        for t in &self.tensors {
            let count: usize = t.shape.iter().product();
            if count != t.data.len() {
                return Err(Error::contract(format!(
                    "tensor {} has {} values but shape {:?}",
                    t.name,
                    t.data.len(),
                    t.shape
                )));
            }
            out.write_u32::<LittleEndian>(u32::try_from(t.name.len()).map_err(|_| {
                Error::contract("tensor name longer than u32::MAX")
            })?)?;
            out.extend_from_slice(t.name.as_bytes());
            out.write_u32::<LittleEndian>(u32::try_from(t.shape.len()).map_err(|_| {
                Error::contract("tensor rank larger than u32::MAX")
            })?)?;
            for &e in &t.shape {
                out.write_u32::<LittleEndian>(u32::try_from(e).map_err(|_| {
                    Error::contract("tensor extent larger than u32::MAX")
                })?)?;
            }
            for &x in &t.data {
                out.write_f32::<LittleEndian>(x)?;
            }
        }
        serde_json::to_writer(&mut out, &self.meta)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic = r.take(CHECKPOINT_MAGIC.len(), "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "bad magic, not a checkpoint file"));
        }
        let version_at = r.pos as u64;
        let version = r.take(1, "version byte")?[0];
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                version_at,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let count = r.read_u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.read_u32("tensor name length")? as usize;
            let name_at = r.pos as u64;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| Error::format(name_at, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.read_u32("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.read_u32("tensor extent")? as usize);
            }
            let count_at = r.pos as u64;
            let value_count: usize = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e))
                .ok_or_else(|| Error::format(count_at, "tensor extents overflow"))?;
            let raw = r.take(value_count * 4, "tensor payload")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos == bytes.len() {
            return Err(Error::format(r.pos as u64, "missing metadata blob"));
        }
        let meta: CheckpointMeta = serde_json::from_slice(&bytes[r.pos..])?;
        Ok(Checkpoint { tensors, meta })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    Checkpoint::from_bytes(&bytes)
}
