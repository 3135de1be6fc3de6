//! Finite-difference verification of reverse-mode gradients.
//!
//! The check is the dot-product test: for random probe directions v (input
//! space) and w (output space), a central difference estimates <w, J v> and
//! the VJP under test supplies <J^T w, v>. The two must agree for every
//! probe. All arithmetic is f64 regardless of the training scalar type.

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// A differentiable map R^n -> R^m together with its claimed VJP.
pub trait VectorFn {
    fn input_len(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Pull the cotangent back to input space: returns J^T w.
    fn vjp(&self, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>>;
}

/// Closure-backed [`VectorFn`] for ad-hoc checks.
pub struct ClosureFn<E, V> {
    pub input_len: usize,
    pub eval: E,
    pub vjp: V,
}

impl<E, V> VectorFn for ClosureFn<E, V>
where
    E: Fn(&[f64]) -> Result<Vec<f64>>,
    V: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    fn input_len(&self) -> usize {
        self.input_len
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.eval)(x)
    }
    fn vjp(&self, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        (self.vjp)(x, cotangent)
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub probes: usize,
    /// Largest |<w, Jv> - <J^T w, v>| over the probes.
    pub max_abs_diff: f64,
    /// The same difference scaled by max(1, |lhs|, |rhs|) per probe.
    pub max_rel_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Run `probes` random dot-product tests at the base point `x` with central
/// difference step `step`. A probe passes when the scaled difference stays
/// within `tolerance`.
pub fn finite_diff_check(
    f: &dyn VectorFn,
    x: &[f64],
    probes: usize,
    step: f64,
    tolerance: f64,
    rng: &mut SeedStream,
) -> Result<GradCheckReport> {
    if x.len() != f.input_len() {
        return Err(Error::contract(format!(
            "finite_diff_check: base point has {} entries, function expects {}",
            x.len(),
            f.input_len()
        )));
    }
    if probes == 0 || step <= 0.0 || tolerance <= 0.0 {
        return Err(Error::contract("finite_diff_check: probes, step and tolerance must be positive"));
    }
    let out_len = f.eval(x)?.len();
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut passed = true;
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    for _ in 0..probes {
        let v: Vec<f64> = (0..x.len()).map(|_| rng.normal()).collect();
        let w: Vec<f64> = (0..out_len).map(|_| rng.normal()).collect();
        for i in 0..x.len() {
            plus[i] = x[i] + step * v[i];
            minus[i] = x[i] - step * v[i];
        }
        let f_plus = f.eval(&plus)?;
        let f_minus = f.eval(&minus)?;
        let mut lhs = 0.0;
        for i in 0..out_len {
            lhs += w[i] * (f_plus[i] - f_minus[i]) / (2.0 * step);
        }
        let pullback = f.vjp(x, &w)?;
        if pullback.len() != x.len() {
            return Err(Error::contract(format!(
                "finite_diff_check: vjp returned {} entries, expected {}",
                pullback.len(),
                x.len()
            )));
        }
        let mut rhs = 0.0;
        for i in 0..x.len() {
            rhs += pullback[i] * v[i];
        }
        if !lhs.is_finite() || !rhs.is_finite() {
            return Err(Error::numeric("finite_diff_check: non-finite probe value"));
        }
        let abs = (lhs - rhs).abs();
        let rel = abs / lhs.abs().max(rhs.abs()).max(1.0);
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
        if rel > tolerance {
            passed = false;
        }
    }
    Ok(GradCheckReport { probes, max_abs_diff: max_abs, max_rel_diff: max_rel, tolerance, passed })
}
