//! Dataset persistence: a manifest JSON describing the factor space and
//! per-pair records, next to a raw 8-bit image blob.
//!
//! Blob layout: pairs in manifest order, each as source then target, images
//! row-major channel-first, one byte per value (value = byte / 255).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FactorSpace, SamplePair};
use crate::error::{Error, Result};
use crate::lattice::LatticeOffset;
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "images.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub offset: Vec<i64>,
    pub source_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Generator name, e.g. "glyph-affine" or "scene".
    pub kind: String,
    pub master_seed: u64,
    pub image_shape: Vec<usize>,
    pub space: FactorSpace,
    pub pairs: Vec<PairRecord>,
}

fn quantise_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write manifest + blob into `dir` (created if missing).
pub fn save_pairs(
    dir: &Path,
    kind: &str,
    space: &FactorSpace,
    master_seed: u64,
    pairs: &[SamplePair],
) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::contract("save_pairs: empty dataset"));
    }
    let image_shape = pairs[0].source.shape().to_vec();
    let image_len: usize = image_shape.iter().product();
    let mut blob = Vec::with_capacity(pairs.len() * 2 * image_len);
    let mut records = Vec::with_capacity(pairs.len());
    for pair in pairs {
        if pair.source.shape() != image_shape || pair.target.shape() != image_shape {
            return Err(Error::contract("save_pairs: inconsistent image shapes"));
        }
        blob.extend(pair.source.data().iter().map(|&v| quantise_byte(v)));
        blob.extend(pair.target.data().iter().map(|&v| quantise_byte(v)));
        records.push(PairRecord {
            offset: pair.offset.components.clone(),
            source_indices: pair.source_indices.clone(),
        });
    }
    let manifest = DatasetManifest {
        kind: kind.to_string(),
        master_seed,
        image_shape,
        space: space.clone(),
        pairs: records,
    };
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    fs::write(dir.join(BLOB_FILE), blob)?;
    Ok(())
}

/// Load a dataset saved by [`save_pairs`].
pub fn load_pairs(dir: &Path) -> Result<(DatasetManifest, Vec<SamplePair>)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    manifest.space.validate()?;
    let image_len: usize = manifest.image_shape.iter().product();
    if image_len == 0 {
        return Err(Error::contract("load_pairs: manifest has empty image shape"));
    }
    let blob = fs::read(dir.join(BLOB_FILE))?;
    let expect = manifest.pairs.len() * 2 * image_len;
    if blob.len() != expect {
        return Err(Error::format(
            blob.len().min(expect) as u64,
            format!("blob holds {} bytes, manifest implies {expect}", blob.len()),
        ));
    }
    let arity = manifest.space.arity();
    let mut pairs = Vec::with_capacity(manifest.pairs.len());
    for (i, rec) in manifest.pairs.iter().enumerate() {
        if rec.offset.len() != arity || rec.source_indices.len() != arity {
            return Err(Error::contract(format!("load_pairs: record {i} arity mismatch")));
        }
        let base = i * 2 * image_len;
        let decode = |bytes: &[u8]| -> Vec<f32> { bytes.iter().map(|&b| b as f32 / 255.0).collect() };
        pairs.push(SamplePair {
            source: Tensor::from_vec(&manifest.image_shape, decode(&blob[base..base + image_len]))?,
            target: Tensor::from_vec(
                &manifest.image_shape,
                decode(&blob[base + image_len..base + 2 * image_len]),
            )?,
            offset: LatticeOffset::new(rec.offset.clone()),
            source_indices: rec.source_indices.clone(),
        });
    }
    Ok((manifest, pairs))
}
