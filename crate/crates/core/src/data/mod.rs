//! Paired-transformation sample generation.
//!
//! A factor space describes the discrete transformation parameters and
//! their continuous meanings. Generators sample a source state and a valid
//! relative offset, render both states with a deterministic renderer, and
//! return the pair together with the offset.

mod glyph;
mod idx;
mod scene;
mod store;

pub use glyph::{
    affine_factor_space, apply_affine, render_glyph, rotation_factor_space, sample_glyph,
    synth_affine_pair, Glyph, AFFINE_IMAGE_EXTENT,
};
pub use idx::load_idx;
pub use scene::{
    description_from_indices, render_scene, scene3_factor_space, scene6_factor_space,
    scene_factor, scene_reduced_factor_space, synth_scene_pair, SceneDescription,
    SCENE_IMAGE_EXTENT, SCENE_SHAPE_COUNT,
};
pub use store::{load_pairs, save_pairs, DatasetManifest, PairRecord, BLOB_FILE, MANIFEST_FILE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{FactorSpec, LatticeOffset};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

/// One transformation parameter: a discrete extent plus the continuous
/// range it quantises. Periodic factors treat the range as half-open and
/// wrap; aperiodic ones clamp at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDef {
    pub name: String,
    pub extent: usize,
    #[serde(default)]
    pub periodic: bool,
    /// Continuous range [lo, hi] (aperiodic) or [lo, hi) (periodic).
    pub range: (f64, f64),
}

impl FactorDef {
    pub fn aperiodic(name: &str, extent: usize, lo: f64, hi: f64) -> Self {
        FactorDef { name: name.to_string(), extent, periodic: false, range: (lo, hi) }
    }

    pub fn periodic(name: &str, extent: usize, lo: f64, hi: f64) -> Self {
        FactorDef { name: name.to_string(), extent, periodic: true, range: (lo, hi) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent < 2 {
            return Err(Error::contract(format!(
                "factor '{}': extent {} is below the minimum of 2",
                self.name, self.extent
            )));
        }
        if !(self.range.0 < self.range.1) || !self.range.0.is_finite() || !self.range.1.is_finite() {
            return Err(Error::contract(format!(
                "factor '{}': range ({}, {}) is not an increasing finite interval",
                self.name, self.range.0, self.range.1
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.range.1 - self.range.0
    }

    /// Width of one quantisation bin.
    pub fn bin_width(&self) -> f64 {
        if self.periodic {
            self.span() / self.extent as f64
        } else {
            self.span() / (self.extent - 1) as f64
        }
    }

    /// Map a continuous value to its lattice index. Periodic values wrap
    /// first; aperiodic values may exceed the range by at most half a bin.
    pub fn quantise(&self, value: f64) -> Result<usize> {
        let (lo, hi) = self.range;
        let d = self.extent as f64;
        if self.periodic {
            let wrapped = (value - lo).rem_euclid(self.span());
            let idx = (wrapped * d / self.span()).round() as i64;
            Ok(idx.rem_euclid(self.extent as i64) as usize)
        } else {
            let slack = self.bin_width() / 2.0;
            if value < lo - slack || value > hi + slack {
                return Err(Error::contract(format!(
                    "factor '{}': value {value} outside [{lo}, {hi}]",
                    self.name
                )));
            }
            let idx = ((value - lo) / self.span() * (d - 1.0)).round();
            Ok((idx.max(0.0) as usize).min(self.extent - 1))
        }
    }

    /// Continuous value at the centre of a lattice index.
    pub fn dequantise(&self, index: usize) -> Result<f64> {
        if index >= self.extent {
            return Err(Error::contract(format!(
                "factor '{}': index {index} out of range 0..{}",
                self.name, self.extent
            )));
        }
        Ok(self.range.0 + index as f64 * self.bin_width())
    }
}

/// Ordered list of transformation factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpace {
    pub factors: Vec<FactorDef>,
}

impl FactorSpace {
    pub fn new(factors: Vec<FactorDef>) -> Result<Self> {
        let space = FactorSpace { factors };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.factors {
            f.validate()?;
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.factors.len()
    }

    pub fn factor(&self, name: &str) -> Option<(usize, &FactorDef)> {
        self.factors.iter().enumerate().find(|(_, f)| f.name == name)
    }

    /// Lattice factor list with the same extents and flags, stride 1.
    pub fn lattice_factors(&self) -> Vec<FactorSpec> {
        self.factors
            .iter()
            .map(|f| FactorSpec {
                name: f.name.clone(),
                extent: f.extent,
                periodic: f.periodic,
                stride: 1,
            })
            .collect()
    }

    /// Uniform absolute state.
    pub fn sample_indices(&self, rng: &mut SeedStream) -> Vec<usize> {
        self.factors.iter().map(|f| rng.index(f.extent)).collect()
    }

    /// Uniform relative offset keeping the aperiodic target in range.
    /// Periodic components are uniform over the d classes, reported as the
    /// signed representative closest to zero.
    pub fn sample_offset(&self, source: &[usize], rng: &mut SeedStream) -> Result<LatticeOffset> {
        if source.len() != self.arity() {
            return Err(Error::contract("sample_offset: index arity mismatch"));
        }
        let mut components = Vec::with_capacity(self.arity());
        for (f, &idx) in self.factors.iter().zip(source) {
            let d = f.extent as i64;
            if f.periodic {
                let r = rng.int_inclusive(0, d - 1);
                components.push(if r > d / 2 { r - d } else { r });
            } else {
                components.push(rng.int_inclusive(-(idx as i64), d - 1 - idx as i64));
            }
        }
        Ok(LatticeOffset::new(components))
    }

    /// Absolute target state for a source state and relative offset.
    /// Periodic components wrap; aperiodic ones must stay in range.
    pub fn compose_indices(&self, source: &[usize], u: &LatticeOffset) -> Result<Vec<usize>> {
        if source.len() != self.arity() || u.components.len() != self.arity() {
            return Err(Error::contract("compose_indices: arity mismatch"));
        }
        let mut out = Vec::with_capacity(self.arity());
        for ((f, &idx), &ui) in self.factors.iter().zip(source).zip(&u.components) {
            let d = f.extent as i64;
            let raw = idx as i64 + ui;
            if f.periodic {
                out.push(raw.rem_euclid(d) as usize);
            } else if raw < 0 || raw >= d {
                return Err(Error::contract(format!(
                    "compose_indices: factor '{}' target {raw} out of range 0..{}",
                    f.name, f.extent
                )));
            } else {
                out.push(raw as usize);
            }
        }
        Ok(out)
    }
}

/// One training example: two renders of the same underlying content related
/// by the lattice offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub source: Tensor<f32>,
    pub target: Tensor<f32>,
    pub offset: LatticeOffset,
    pub source_indices: Vec<usize>,
}

impl SamplePair {
    pub fn validate(&self) -> Result<()> {
        if self.source.shape() != self.target.shape() {
            return Err(Error::contract("sample pair: source and target shapes differ"));
        }
        for v in self.source.data().iter().chain(self.target.data()) {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::contract(format!("sample pair: pixel {v} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Generate `count` pairs with one derived RNG stream per item, so the set
/// is reproducible and order-independent of any execution strategy.
pub fn generate_pairs<F>(
    space: &FactorSpace,
    count: usize,
    master_seed: u64,
    mut gen: F,
) -> Result<Vec<SamplePair>>
where
    F: FnMut(&FactorSpace, &mut SeedStream) -> Result<SamplePair>,
{
    (0..count)
        .map(|i| {
            let mut rng = SeedStream::derive(master_seed, i as u64);
            gen(space, &mut rng)
        })
        .collect()
}

/// Remove a factor combination from training data.
///
/// The train split drops every pair whose source or target state matches
/// all excluded components; the test split keeps only pairs whose target
/// matches. Pairs in neither category (source hits, target misses) are
/// discarded entirely.
pub fn split_holdout(
    pairs: Vec<SamplePair>,
    space: &FactorSpace,
    excluded: &[(String, usize)],
) -> Result<(Vec<SamplePair>, Vec<SamplePair>)> {
    if excluded.is_empty() {
        return Err(Error::contract("split_holdout: empty exclusion"));
    }
    let mut positions = Vec::with_capacity(excluded.len());
    for (name, idx) in excluded {
        let (pos, f) = space
            .factor(name)
            .ok_or_else(|| Error::contract(format!("split_holdout: unknown factor '{name}'")))?;
        if *idx >= f.extent {
            return Err(Error::contract(format!(
                "split_holdout: index {idx} out of range for factor '{name}'"
            )));
        }
        positions.push((pos, *idx));
    }
    let hits = |indices: &[usize]| positions.iter().all(|&(pos, idx)| indices[pos] == idx);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for pair in pairs {
        let target_indices = space.compose_indices(&pair.source_indices, &pair.offset)?;
        let source_hit = hits(&pair.source_indices);
        let target_hit = hits(&target_indices);
        if target_hit {
            test.push(pair);
        } else if !source_hit {
            train.push(pair);
        }
    }
    if test.is_empty() {
        return Err(Error::contract("split_holdout: no test sample reaches the excluded combination"));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_factor(extent: usize) -> FactorDef {
        FactorDef::aperiodic("x", extent, 0.0, 1.0)
    }

    #[test]
    fn periodic_quantisation_wraps() {
        let f = FactorDef::periodic("rot", 4, 0.0, std::f64::consts::TAU);
        assert_eq!(f.quantise(std::f64::consts::PI).unwrap(), 2);
        assert_eq!(f.quantise(std::f64::consts::TAU - 0.01).unwrap(), 0);
        assert_eq!(f.quantise(-0.01).unwrap(), 0);
        assert_eq!(f.quantise(std::f64::consts::TAU * 7.0 + 0.01).unwrap(), 0);
    }

    #[test]
    fn aperiodic_quantisation_rounds_and_guards_range() {
        let f = unit_factor(5);
        assert_eq!(f.quantise(0.5).unwrap(), 2);
        assert_eq!(f.quantise(0.0).unwrap(), 0);
        assert_eq!(f.quantise(1.0).unwrap(), 4);
        assert_eq!(f.quantise(1.05).unwrap(), 4);
        assert!(f.quantise(1.5).is_err());
        assert!(f.quantise(-0.8).is_err());
    }

    #[test]
    fn quantisation_round_trip_stays_within_half_a_bin() {
        let f = unit_factor(7);
        for i in 0..100 {
            let v = i as f64 / 99.0;
            let idx = f.quantise(v).unwrap();
            let back = f.dequantise(idx).unwrap();
            assert!((back - v).abs() <= f.bin_width() / 2.0 + 1e-12, "v={v} back={back}");
        }
        let p = FactorDef::periodic("r", 9, 0.0, 1.0);
        for i in 0..100 {
            let v = i as f64 / 100.0;
            let idx = p.quantise(v).unwrap();
            let back = p.dequantise(idx).unwrap();
            let wrap_dist = (back - v).abs().min(1.0 - (back - v).abs());
            assert!(wrap_dist <= p.bin_width() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn periodic_quantisation_is_shift_consistent() {
        let f = FactorDef::periodic("r", 8, 0.0, 2.0);
        for i in 0..f.extent {
            let centre = f.dequantise(i).unwrap();
            let next = f.quantise(centre + f.bin_width()).unwrap();
            assert_eq!(next, (i + 1) % f.extent);
        }
    }

    #[test]
    fn translation_bin_width_matches_range_arithmetic() {
        let f = FactorDef::aperiodic("dx", 7, -21.0, 21.0);
        assert!((f.bin_width() - 42.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn factor_extent_one_is_rejected() {
        assert!(FactorDef::aperiodic("x", 1, 0.0, 1.0).validate().is_err());
        assert!(FactorDef::aperiodic("x", 3, 1.0, 0.0).validate().is_err());
    }

    #[test]
    fn offsets_always_keep_targets_in_range() {
        let space = FactorSpace::new(vec![
            FactorDef::aperiodic("a", 5, 0.0, 1.0),
            FactorDef::periodic("b", 6, 0.0, 1.0),
        ])
        .unwrap();
        let mut rng = SeedStream::new(40);
        for _ in 0..200 {
            let src = space.sample_indices(&mut rng);
            let u = space.sample_offset(&src, &mut rng).unwrap();
            let tgt = space.compose_indices(&src, &u).unwrap();
            assert!(tgt[0] < 5 && tgt[1] < 6);
            // Periodic representative is the closest-to-zero one.
            assert!(u.components[1] >= -2 && u.components[1] <= 3);
        }
    }

    #[test]
    fn holdout_split_filters_both_sides() {
        let space = FactorSpace::new(vec![
            FactorDef::aperiodic("colour", 10, 0.0, 9.0),
            FactorDef::aperiodic("shape", 4, 0.0, 3.0),
        ])
        .unwrap();
        // Enumerate all states as degenerate pairs with zero offsets plus a
        // band of offset pairs that land on the excluded combination.
        let img = Tensor::zeros(&[1, 1, 1]);
        let mut pairs = Vec::new();
        for c in 0..10 {
            for s in 0..4 {
                pairs.push(SamplePair {
                    source: img.clone(),
                    target: img.clone(),
                    offset: LatticeOffset::zero(2),
                    source_indices: vec![c, s],
                });
            }
        }
        // One pair whose target (not source) is the excluded state.
        pairs.push(SamplePair {
            source: img.clone(),
            target: img.clone(),
            offset: LatticeOffset::new(vec![1, 0]),
            source_indices: vec![2, 1],
        });
        // One pair whose source is excluded but target is not.
        pairs.push(SamplePair {
            source: img.clone(),
            target: img.clone(),
            offset: LatticeOffset::new(vec![1, 1]),
            source_indices: vec![3, 1],
        });
        let excluded = vec![("colour".to_string(), 3), ("shape".to_string(), 1)];
        let (train, test) = split_holdout(pairs, &space, &excluded).unwrap();
        // Exactly 1/40 of the enumerated states is excluded; the zero-offset
        // pair sitting on it lands in test along with the offset pair.
        assert_eq!(test.len(), 2);
        assert_eq!(train.len(), 39);
        for pair in &train {
            let tgt = space.compose_indices(&pair.source_indices, &pair.offset).unwrap();
            assert!(!(pair.source_indices == vec![3, 1] || tgt == vec![3, 1]));
        }
        for pair in &test {
            let tgt = space.compose_indices(&pair.source_indices, &pair.offset).unwrap();
            assert_eq!(tgt, vec![3, 1]);
        }
        assert!(split_holdout(Vec::new(), &space, &excluded).is_err());
    }
}
