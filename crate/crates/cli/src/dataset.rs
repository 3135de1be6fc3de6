//! Dataset config schema shared by gen-data and the smoke tests.

use qtae_core::data::{
    affine_factor_space, rotation_factor_space, scene3_factor_space, scene6_factor_space,
    scene_reduced_factor_space, synth_affine_pair, synth_scene_pair, FactorSpace, SamplePair,
};
use qtae_core::error::{Error, Result};
use qtae_core::rng::SeedStream;
use serde::{Deserialize, Serialize};

pub type SynthFn = fn(&FactorSpace, &mut SeedStream) -> Result<SamplePair>;

/// One flat schema for every generator; keys that do not apply to the
/// chosen `dataset` are rejected by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// "glyph-rotation", "glyph-affine", "scene3", "scene6" or
    /// "scene-reduced".
    pub dataset: String,
    pub count: usize,
    pub seed: u64,
    /// glyph-rotation and glyph-affine only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_bins: Option<usize>,
    /// glyph-affine only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation_bins: Option<usize>,
    /// scene-reduced only: extents for the six canonical factors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extents: Option<[usize; 6]>,
}

fn reject(option: &Option<impl Sized>, key: &str, dataset: &str) -> Result<()> {
    if option.is_some() {
        return Err(Error::contract(format!("'{key}' does not apply to dataset '{dataset}'")));
    }
    Ok(())
}

fn require<T: Copy>(option: &Option<T>, key: &str, dataset: &str) -> Result<T> {
    option
        .ok_or_else(|| Error::contract(format!("dataset '{dataset}' needs '{key}'")))
}

impl DatasetConfig {
    /// Factor space, pair synthesiser, and the manifest kind string.
    pub fn build(&self) -> Result<(FactorSpace, SynthFn, &'static str)> {
        match self.dataset.as_str() {
            "glyph-rotation" => {
                reject(&self.translation_bins, "translation_bins", &self.dataset)?;
                reject(&self.extents, "extents", &self.dataset)?;
                let bins = require(&self.rotation_bins, "rotation_bins", &self.dataset)?;
                Ok((rotation_factor_space(bins)?, synth_affine_pair, "glyph-rotation"))
            }
            "glyph-affine" => {
                reject(&self.extents, "extents", &self.dataset)?;
                let t = require(&self.translation_bins, "translation_bins", &self.dataset)?;
                let r = require(&self.rotation_bins, "rotation_bins", &self.dataset)?;
                Ok((affine_factor_space(t, r)?, synth_affine_pair, "glyph-affine"))
            }
            "scene3" => {
                self.no_extra_keys()?;
                Ok((scene3_factor_space(), synth_scene_pair, "scene3"))
            }
            "scene6" => {
                self.no_extra_keys()?;
                Ok((scene6_factor_space(), synth_scene_pair, "scene6"))
            }
            "scene-reduced" => {
                reject(&self.rotation_bins, "rotation_bins", &self.dataset)?;
                reject(&self.translation_bins, "translation_bins", &self.dataset)?;
                let extents = require(&self.extents, "extents", &self.dataset)?;
                Ok((scene_reduced_factor_space(extents)?, synth_scene_pair, "scene-reduced"))
            }
            other => Err(Error::contract(format!(
                "unknown dataset '{other}' (expected glyph-rotation, glyph-affine, scene3, scene6 or scene-reduced)"
            ))),
        }
    }

    fn no_extra_keys(&self) -> Result<()> {
        reject(&self.rotation_bins, "rotation_bins", &self.dataset)?;
        reject(&self.translation_bins, "translation_bins", &self.dataset)?;
        reject(&self.extents, "extents", &self.dataset)
    }
}
