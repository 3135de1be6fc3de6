//! Relative pose between two images, recovered by sliding one embedding
//! over the other and scoring each candidate shift with cosine similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{EmbeddingTensor, LatticeOffset, LatticeSpec};
use crate::scalar::Scalar;

/// Hard cap on enumerated offsets; anything larger is a config mistake.
const MAX_SEARCH_WIDTH: usize = 10_000_000;

/// Inclusive per-factor offset bounds defining the searched box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRange {
    bounds: Vec<(i64, i64)>,
}

impl SearchRange {
    pub fn new(bounds: Vec<(i64, i64)>) -> Result<Self> {
        for (lo, hi) in &bounds {
            if lo > hi {
                return Err(Error::contract(format!("empty search interval [{lo}, {hi}]")));
            }
        }
        let range = Self { bounds };
        range.width()?;
        Ok(range)
    }

    /// The widest sensible range for a spec: every distinct roll for a
    /// periodic factor (signed representatives), every overlapping shift
    /// for an aperiodic one.
    pub fn full(spec: &LatticeSpec) -> Result<Self> {
        let bounds = spec
            .factors
            .iter()
            .map(|f| {
                let d = f.extent as i64;
                if f.periodic {
                    (-((d - 1) / 2), d / 2)
                } else {
                    (-(d - 1), d - 1)
                }
            })
            .collect();
        Self::new(bounds)
    }

    pub fn bounds(&self) -> &[(i64, i64)] {
        &self.bounds
    }

    /// Number of offsets in the box.
    pub fn width(&self) -> Result<usize> {
        let mut total = 1usize;
        for (lo, hi) in &self.bounds {
            let w = (hi - lo + 1) as usize;
            total = total
                .checked_mul(w)
                .filter(|t| *t <= MAX_SEARCH_WIDTH)
                .ok_or_else(|| Error::contract("search range enumerates too many offsets"))?;
        }
        Ok(total)
    }

    pub fn contains(&self, u: &LatticeOffset) -> bool {
        u.components.len() == self.bounds.len()
            && u.components
                .iter()
                .zip(&self.bounds)
                .all(|(c, (lo, hi))| lo <= c && c <= hi)
    }

    /// All offsets in the box, lexicographic by component.
    fn enumerate(&self) -> Vec<LatticeOffset> {
        let mut out = Vec::new();
        let mut cur: Vec<i64> = self.bounds.iter().map(|(lo, _)| *lo).collect();
        loop {
            out.push(LatticeOffset::new(cur.clone()));
            let mut axis = self.bounds.len();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                if cur[axis] < self.bounds[axis].1 {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = self.bounds[axis].0;
            }
        }
    }
}

/// How the cosine denominator treats cells an aperiodic shift zero-fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalisation {
    /// Norms over the whole tensor, zeros included.
    Full,
    /// Reference norm restricted to cells the shifted embedding still
    /// covers, so large shifts are not penalised for lost overlap.
    Overlap,
}

/// Result of an exhaustive shift search.
#[derive(Debug, Clone)]
pub struct PoseEstimate {
    pub best_offset: LatticeOffset,
    pub best_score: f64,
    /// (offset, cosine) for the full box, in enumeration order.
    pub scores: Vec<(LatticeOffset, f64)>,
    factor_names: Vec<String>,
}

impl PoseEstimate {
    /// Score map as CSV: one factor column per component plus the cosine.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for name in &self.factor_names {
            out.push_str(name);
            out.push(',');
        }
        out.push_str("cosine\n");
        for (offset, score) in &self.scores {
            for c in &offset.components {
                out.push_str(&c.to_string());
                out.push(',');
            }
            out.push_str(&format!("{score:.6}\n"));
        }
        out
    }
}

/// Rank candidate offsets: higher cosine wins, ties go to the smaller L1
/// magnitude, then to the lexicographically smaller component vector.
fn better(candidate: &(LatticeOffset, f64), best: &(LatticeOffset, f64)) -> bool {
    if candidate.1 != best.1 {
        return candidate.1 > best.1;
    }
    let (cm, bm) = (candidate.0.l1_magnitude(), best.0.l1_magnitude());
    if cm != bm {
        return cm < bm;
    }
    candidate.0.components < best.0.components
}

/// Mean absolute per-component bin error between two offsets. Periodic
/// factors measure along the shorter way around the circle; aperiodic
/// factors use the plain difference.
pub fn offset_abs_error(
    spec: &LatticeSpec,
    truth: &LatticeOffset,
    predicted: &LatticeOffset,
) -> Result<f64> {
    if truth.components.len() != spec.factor_count()
        || predicted.components.len() != spec.factor_count()
    {
        return Err(Error::contract(format!(
            "offset error: arity {}/{} vs {} lattice factors",
            truth.components.len(),
            predicted.components.len(),
            spec.factor_count()
        )));
    }
    let mut total = 0.0;
    for ((a, b), f) in truth.components.iter().zip(&predicted.components).zip(&spec.factors) {
        let err = if f.periodic {
            let d = f.extent as i64;
            let fw = (a - b).rem_euclid(d);
            fw.min(d - fw)
        } else {
            (a - b).abs()
        };
        total += err as f64;
    }
    Ok(total / spec.factor_count() as f64)
}

/// Exhaustive pose search with full-tensor normalisation (the default).
pub fn estimate_offset<S: Scalar>(
    y1: &EmbeddingTensor<S>,
    y2: &EmbeddingTensor<S>,
    range: &SearchRange,
) -> Result<PoseEstimate> {
    estimate_offset_with(y1, y2, range, Normalisation::Full)
}

/// Exhaustive pose search: scores every offset `v` in `range` by the cosine
/// similarity between `shift(y1, v)` and `y2` and returns the argmax.
pub fn estimate_offset_with<S: Scalar>(
    y1: &EmbeddingTensor<S>,
    y2: &EmbeddingTensor<S>,
    range: &SearchRange,
    normalisation: Normalisation,
) -> Result<PoseEstimate> {
    let spec = y1.spec();
    if y2.spec() != spec {
        return Err(Error::contract("pose search needs embeddings on the same lattice"));
    }
    if range.bounds.len() != spec.factor_count() {
        return Err(Error::contract(format!(
            "search range covers {} factors, lattice has {}",
            range.bounds.len(),
            spec.factor_count()
        )));
    }
    let norm2 = y2.tensor().norm_l2();
    if y1.tensor().norm_l2() == 0.0 || norm2 == 0.0 {
        return Err(Error::contract("pose search on a zero-norm embedding"));
    }

    // mask source for overlap mode: ones shifted like y1 mark covered cells
    let ones = match normalisation {
        Normalisation::Overlap => Some(EmbeddingTensor::from_flat(
            spec.clone(),
            vec![S::one(); spec.element_count()],
        )?),
        Normalisation::Full => None,
    };

    let mut scores = Vec::with_capacity(range.width()?);
    let mut best: Option<(LatticeOffset, f64)> = None;
    for offset in range.enumerate() {
        let shifted = y1.shifted(&offset)?;
        let score = match &ones {
            None => cosine(shifted.tensor().data(), y2.tensor().data(), None),
            Some(ones) => {
                let mask = ones.shifted(&offset)?;
                cosine(shifted.tensor().data(), y2.tensor().data(), Some(mask.tensor().data()))
            }
        };
        let entry = (offset, score);
        if best.as_ref().is_none_or(|b| better(&entry, b)) {
            best = Some(entry.clone());
        }
        scores.push(entry);
    }
    let (best_offset, best_score) = best.expect("search range is never empty");
    Ok(PoseEstimate {
        best_offset,
        best_score,
        scores,
        factor_names: spec.factors.iter().map(|f| f.name.clone()).collect(),
    })
}

/// Cosine similarity in f64; a zero-norm side scores 0 (no evidence either
/// way, keeps degenerate all-out-of-range shifts from dominating).
fn cosine<S: Scalar>(a: &[S], b: &[S], mask: Option<&[S]>) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for i in 0..a.len() {
        let (x, y) = (a[i].to_f64_lossy(), b[i].to_f64_lossy());
        let m = mask.map_or(1.0, |m| m[i].to_f64_lossy());
        dot += x * y * m;
        na += x * x * m;
        nb += y * y * m;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}
