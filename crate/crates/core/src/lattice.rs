//! Discrete lattice shifts of embedding tensors.
//!
//! An embedding is a tensor with one axis per transformation factor plus a
//! trailing channel axis. Transformations act on it by integer shifts:
//! periodic factors roll, aperiodic factors shift with zero fill. The shift
//! convention everywhere is output[v] = input[v + u], so content moves
//! toward lower indices for positive u.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn default_stride() -> usize {
    1
}

/// One transformation factor of the lattice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub name: String,
    /// Number of lattice positions d_i along this axis.
    pub extent: usize,
    /// Periodic factors roll; aperiodic ones shift with zero fill.
    #[serde(default)]
    pub periodic: bool,
    /// One offset unit moves the lattice by this many positions.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl FactorSpec {
    pub fn aperiodic(name: &str, extent: usize) -> Self {
        FactorSpec { name: name.to_string(), extent, periodic: false, stride: 1 }
    }

    pub fn periodic(name: &str, extent: usize) -> Self {
        FactorSpec { name: name.to_string(), extent, periodic: true, stride: 1 }
    }
}

/// How the per-factor axes combine into one embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeMode {
    /// Full tensor d_1 x ... x d_t x m.
    Product,
    /// Per-factor blocks stacked vertically: (d_1 + ... + d_t) x m.
    Additive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub factors: Vec<FactorSpec>,
    pub channels: usize,
    pub mode: LatticeMode,
}

impl LatticeSpec {
    pub fn new(factors: Vec<FactorSpec>, channels: usize, mode: LatticeMode) -> Result<Self> {
        let spec = LatticeSpec { factors, channels, mode };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::contract("lattice: channels must be at least 1"));
        }
        for f in &self.factors {
            if f.extent == 0 {
                return Err(Error::contract(format!("lattice: factor '{}' has extent 0", f.name)));
            }
            if f.stride == 0 {
                return Err(Error::contract(format!("lattice: factor '{}' has stride 0", f.name)));
            }
        }
        Ok(())
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    /// Total embedding element count in this spec's mode. With no factors
    /// both modes degenerate to a plain m-vector.
    pub fn element_count(&self) -> usize {
        match self.mode {
            LatticeMode::Product => self.product_element_count(),
            LatticeMode::Additive => self.additive_element_count(),
        }
    }

    pub fn product_element_count(&self) -> usize {
        self.factors.iter().map(|f| f.extent).product::<usize>() * self.channels
    }

    pub fn additive_element_count(&self) -> usize {
        if self.factors.is_empty() {
            return self.channels;
        }
        self.factors.iter().map(|f| f.extent).sum::<usize>() * self.channels
    }

    /// Tensor shape of one embedding in this spec's mode.
    pub fn embedding_shape(&self) -> Vec<usize> {
        if self.factors.is_empty() {
            return vec![self.channels];
        }
        match self.mode {
            LatticeMode::Product => {
                let mut shape: Vec<usize> = self.factors.iter().map(|f| f.extent).collect();
                shape.push(self.channels);
                shape
            }
            LatticeMode::Additive => {
                vec![self.factors.iter().map(|f| f.extent).sum(), self.channels]
            }
        }
    }

    fn ensure_arity(&self, u: &LatticeOffset, op: &str) -> Result<()> {
        if u.components.len() != self.factors.len() {
            return Err(Error::contract(format!(
                "{op}: offset has {} components, lattice has {} factors",
                u.components.len(),
                self.factors.len()
            )));
        }
        Ok(())
    }
}

/// Integer shift amounts, one per lattice factor. Periodic components are
/// reduced modulo the factor extent at application time; the stored values
/// stay as given.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeOffset {
    pub components: Vec<i64>,
}

impl LatticeOffset {
    pub fn new(components: Vec<i64>) -> Self {
        LatticeOffset { components }
    }

    pub fn zero(arity: usize) -> Self {
        LatticeOffset { components: vec![0; arity] }
    }

    pub fn negated(&self) -> Self {
        LatticeOffset { components: self.components.iter().map(|c| -c).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|&c| c == 0)
    }

    /// Sum of absolute components, the tie-break metric for pose search.
    pub fn l1_magnitude(&self) -> u64 {
        self.components.iter().map(|c| c.unsigned_abs()).sum()
    }
}

/// Componentwise sum, with periodic components reduced modulo their extent.
pub fn compose_offsets(u: &LatticeOffset, v: &LatticeOffset, spec: &LatticeSpec) -> Result<LatticeOffset> {
    spec.ensure_arity(u, "compose_offsets")?;
    spec.ensure_arity(v, "compose_offsets")?;
    let components = spec
        .factors
        .iter()
        .zip(u.components.iter().zip(&v.components))
        .map(|(f, (&a, &b))| {
            let s = a + b;
            if f.periodic {
                s.rem_euclid(f.extent as i64)
            } else {
                s
            }
        })
        .collect();
    Ok(LatticeOffset { components })
}

/// An embedding tensor tied to its lattice description.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTensor<S: Scalar> {
    spec: LatticeSpec,
    tensor: Tensor<S>,
}

impl<S: Scalar> EmbeddingTensor<S> {
    pub fn new(spec: LatticeSpec, tensor: Tensor<S>) -> Result<Self> {
        spec.validate()?;
        let expect = spec.embedding_shape();
        if tensor.shape() != expect {
            return Err(Error::contract(format!(
                "embedding: tensor shape {:?} does not match lattice shape {:?}",
                tensor.shape(),
                expect
            )));
        }
        Ok(EmbeddingTensor { spec, tensor })
    }

    /// Wrap a flat buffer, reshaping to the lattice shape.
    pub fn from_flat(spec: LatticeSpec, data: Vec<S>) -> Result<Self> {
        spec.validate()?;
        let shape = spec.embedding_shape();
        let tensor = Tensor::from_vec(&shape, data)?;
        Ok(EmbeddingTensor { spec, tensor })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn tensor(&self) -> &Tensor<S> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<S> {
        self.tensor
    }

    fn axis_split(&self, axis: usize) -> (usize, usize, usize) {
        let extents: Vec<usize> = self.spec.factors.iter().map(|f| f.extent).collect();
        let outer: usize = extents[..axis].iter().product();
        let inner: usize = extents[axis + 1..].iter().product::<usize>() * self.spec.channels;
        (outer, extents[axis], inner)
    }

    fn check_axis(&self, axis: usize, op: &str) -> Result<()> {
        if axis >= self.spec.factors.len() {
            return Err(Error::contract(format!(
                "{op}: axis {axis} out of range for {} factors",
                self.spec.factors.len()
            )));
        }
        Ok(())
    }

    /// Circular shift along one product-mode factor axis: output at v is
    /// input at (v + amount) mod d. Content preserving.
    pub fn roll_axis(&self, axis: usize, amount: i64) -> Result<Self> {
        self.check_axis(axis, "roll_axis")?;
        if !self.spec.factors[axis].periodic {
            return Err(Error::contract(format!(
                "roll_axis: factor '{}' is aperiodic",
                self.spec.factors[axis].name
            )));
        }
        self.require_mode(LatticeMode::Product, "roll_axis")?;
        let (outer, d, inner) = self.axis_split(axis);
        let data = shift_rows(self.tensor.data(), outer, d, inner, amount, true);
        Ok(EmbeddingTensor {
            spec: self.spec.clone(),
            tensor: Tensor::from_vec(self.tensor.shape(), data).expect("shape preserved"),
        })
    }

    /// Zero-padded shift along one product-mode factor axis: output at v is
    /// input at v + amount when in bounds, else zero.
    pub fn shift_zero_axis(&self, axis: usize, amount: i64) -> Result<Self> {
        self.check_axis(axis, "shift_zero_axis")?;
        if self.spec.factors[axis].periodic {
            return Err(Error::contract(format!(
                "shift_zero_axis: factor '{}' is periodic",
                self.spec.factors[axis].name
            )));
        }
        self.require_mode(LatticeMode::Product, "shift_zero_axis")?;
        let (outer, d, inner) = self.axis_split(axis);
        let data = shift_rows(self.tensor.data(), outer, d, inner, amount, false);
        Ok(EmbeddingTensor {
            spec: self.spec.clone(),
            tensor: Tensor::from_vec(self.tensor.shape(), data).expect("shape preserved"),
        })
    }

    fn require_mode(&self, mode: LatticeMode, op: &str) -> Result<()> {
        if self.spec.mode != mode {
            return Err(Error::contract(format!("{op}: lattice mode is {:?}", self.spec.mode)));
        }
        Ok(())
    }

    /// Composite product-mode shift: every factor axis shifted by its
    /// component times the factor stride, rolling or zero-filling per the
    /// periodic flag. The channel axis is untouched.
    pub fn apply_offset(&self, u: &LatticeOffset) -> Result<Self> {
        self.require_mode(LatticeMode::Product, "apply_offset")?;
        self.spec.ensure_arity(u, "apply_offset")?;
        let mut data = self.tensor.data().to_vec();
        for (axis, (factor, &ui)) in self.spec.factors.iter().zip(&u.components).enumerate() {
            let amount = ui * factor.stride as i64;
            let effective = if factor.periodic { amount.rem_euclid(factor.extent as i64) } else { amount };
            if effective == 0 {
                continue;
            }
            let (outer, d, inner) = self.axis_split(axis);
            data = shift_rows(&data, outer, d, inner, effective, factor.periodic);
        }
        Ok(EmbeddingTensor {
            spec: self.spec.clone(),
            tensor: Tensor::from_vec(self.tensor.shape(), data).expect("shape preserved"),
        })
    }

    /// Additive-mode shift: block i (rows d_1+..+d_{i-1} .. +d_i) shifted
    /// independently by its component, rolling or zero-filling per factor.
    pub fn apply_offset_additive(&self, u: &LatticeOffset) -> Result<Self> {
        self.require_mode(LatticeMode::Additive, "apply_offset_additive")?;
        self.spec.ensure_arity(u, "apply_offset_additive")?;
        let m = self.spec.channels;
        let mut data = self.tensor.data().to_vec();
        let mut base = 0usize;
        for (factor, &ui) in self.spec.factors.iter().zip(&u.components) {
            let d = factor.extent;
            let amount = ui * factor.stride as i64;
            let effective = if factor.periodic { amount.rem_euclid(d as i64) } else { amount };
            if effective != 0 {
                let block = shift_rows(&data[base * m..(base + d) * m], 1, d, m, effective, factor.periodic);
                data[base * m..(base + d) * m].copy_from_slice(&block);
            }
            base += d;
        }
        Ok(EmbeddingTensor {
            spec: self.spec.clone(),
            tensor: Tensor::from_vec(self.tensor.shape(), data).expect("shape preserved"),
        })
    }

    /// Mode dispatch: [`apply_offset`] for product lattices,
    /// [`apply_offset_additive`] for additive ones. With no factors this is
    /// the identity.
    pub fn shifted(&self, u: &LatticeOffset) -> Result<Self> {
        if self.spec.factors.is_empty() {
            self.spec.ensure_arity(u, "shifted")?;
            return Ok(self.clone());
        }
        match self.spec.mode {
            LatticeMode::Product => self.apply_offset(u),
            LatticeMode::Additive => self.apply_offset_additive(u),
        }
    }
}

/// Shift `outer` stacked groups of `d` rows of width `inner` by `amount`
/// with the output[v] = input[v + amount] convention. Periodic wraps,
/// aperiodic fills with zeros.
fn shift_rows<S: Scalar>(
    data: &[S],
    outer: usize,
    d: usize,
    inner: usize,
    amount: i64,
    periodic: bool,
) -> Vec<S> {
    let mut out = vec![S::zero(); data.len()];
    for o in 0..outer {
        let src_base = o * d * inner;
        for v in 0..d {
            let raw = v as i64 + amount;
            let src = if periodic {
                raw.rem_euclid(d as i64) as usize
            } else if raw >= 0 && (raw as usize) < d {
                raw as usize
            } else {
                continue;
            };
            let dst_off = src_base + v * inner;
            let src_off = src_base + src * inner;
            out[dst_off..dst_off + inner].copy_from_slice(&data[src_off..src_off + inner]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn line_spec(extent: usize, periodic: bool) -> LatticeSpec {
        let f = if periodic { FactorSpec::periodic("a", extent) } else { FactorSpec::aperiodic("a", extent) };
        LatticeSpec::new(vec![f], 1, LatticeMode::Product).unwrap()
    }

    fn embed(spec: &LatticeSpec, data: Vec<f64>) -> EmbeddingTensor<f64> {
        EmbeddingTensor::from_flat(spec.clone(), data).unwrap()
    }

    /// Index-by-index product-mode oracle: walks every output cell and reads
    /// the mapped input cell directly.
    fn apply_offset_oracle(y: &EmbeddingTensor<f64>, u: &LatticeOffset) -> Vec<f64> {
        let spec = y.spec();
        let extents: Vec<usize> = spec.factors.iter().map(|f| f.extent).collect();
        let m = spec.channels;
        let mut out = vec![0.0; y.tensor().len()];
        let cells: usize = extents.iter().product();
        for cell in 0..cells {
            // Decode multi-index of the output cell.
            let mut rest = cell;
            let mut idx = vec![0usize; extents.len()];
            for axis in (0..extents.len()).rev() {
                idx[axis] = rest % extents[axis];
                rest /= extents[axis];
            }
            // Map to the source cell.
            let mut src = Vec::with_capacity(extents.len());
            let mut in_bounds = true;
            for axis in 0..extents.len() {
                let f = &spec.factors[axis];
                let raw = idx[axis] as i64 + u.components[axis] * f.stride as i64;
                if f.periodic {
                    src.push(raw.rem_euclid(extents[axis] as i64) as usize);
                } else if raw >= 0 && (raw as usize) < extents[axis] {
                    src.push(raw as usize);
                } else {
                    in_bounds = false;
                    break;
                }
            }
            if !in_bounds {
                continue;
            }
            let mut src_cell = 0usize;
            for axis in 0..extents.len() {
                src_cell = src_cell * extents[axis] + src[axis];
            }
            out[cell * m..(cell + 1) * m].copy_from_slice(&y.tensor().data()[src_cell * m..(src_cell + 1) * m]);
        }
        out
    }

    #[test]
    fn roll_moves_content_toward_lower_indices() {
        let spec = line_spec(4, true);
        let y = embed(&spec, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(y.roll_axis(0, 1).unwrap().tensor().data(), &[2.0, 3.0, 4.0, 1.0]);
        assert_eq!(y.roll_axis(0, 4).unwrap().tensor().data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(y.roll_axis(0, -1).unwrap().tensor().data(), &[4.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_shift_discards_and_pads() {
        let spec = line_spec(4, false);
        let y = embed(&spec, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(y.shift_zero_axis(0, 1).unwrap().tensor().data(), &[2.0, 3.0, 4.0, 0.0]);
        assert_eq!(y.shift_zero_axis(0, -1).unwrap().tensor().data(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(y.shift_zero_axis(0, 4).unwrap().tensor().data(), &[0.0; 4]);
        assert_eq!(y.shift_zero_axis(0, -7).unwrap().tensor().data(), &[0.0; 4]);
    }

    #[test]
    fn roll_requires_periodic_and_valid_axis() {
        let spec = line_spec(4, false);
        let y = embed(&spec, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(y.roll_axis(0, 1).is_err());
        assert!(y.shift_zero_axis(1, 1).is_err());
    }

    #[test]
    fn two_by_two_offset_matches_worked_example() {
        let spec = LatticeSpec::new(
            vec![FactorSpec::aperiodic("r", 2), FactorSpec::aperiodic("c", 2)],
            1,
            LatticeMode::Product,
        )
        .unwrap();
        // y = [[a, b], [c, d]] with u = (1, 0) lifts the bottom row up.
        let y = embed(&spec, vec![1.0, 2.0, 3.0, 4.0]);
        let shifted = y.apply_offset(&LatticeOffset::new(vec![1, 0])).unwrap();
        assert_eq!(shifted.tensor().data(), &[3.0, 4.0, 0.0, 0.0]);
        let id = y.apply_offset(&LatticeOffset::zero(2)).unwrap();
        assert_eq!(id.tensor().data(), y.tensor().data());
    }

    #[test]
    fn mixed_lattice_matches_enumeration_oracle() {
        let spec = LatticeSpec::new(
            vec![FactorSpec::periodic("p", 3), FactorSpec::aperiodic("q", 4)],
            2,
            LatticeMode::Product,
        )
        .unwrap();
        let mut rng = SeedStream::new(20);
        let data: Vec<f64> = (0..spec.element_count()).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y = embed(&spec, data);
        let u = LatticeOffset::new(vec![2, -1]);
        let fast = y.apply_offset(&u).unwrap();
        assert_eq!(fast.tensor().data(), apply_offset_oracle(&y, &u).as_slice());
    }

    #[test]
    fn random_offsets_match_oracle_including_strides() {
        let spec = LatticeSpec::new(
            vec![
                FactorSpec { name: "a".into(), extent: 5, periodic: true, stride: 2 },
                FactorSpec::aperiodic("b", 3),
                FactorSpec { name: "c".into(), extent: 4, periodic: false, stride: 3 },
            ],
            3,
            LatticeMode::Product,
        )
        .unwrap();
        let mut rng = SeedStream::new(21);
        for _ in 0..25 {
            let data: Vec<f64> = (0..spec.element_count()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let y = embed(&spec, data);
            let u = LatticeOffset::new(vec![
                rng.int_inclusive(-6, 6),
                rng.int_inclusive(-3, 3),
                rng.int_inclusive(-2, 2),
            ]);
            let fast = y.apply_offset(&u).unwrap();
            assert_eq!(fast.tensor().data(), apply_offset_oracle(&y, &u).as_slice());
        }
    }

    #[test]
    fn stride_multiplies_the_applied_amount() {
        let spec = LatticeSpec::new(
            vec![FactorSpec { name: "a".into(), extent: 4, periodic: false, stride: 2 }],
            1,
            LatticeMode::Product,
        )
        .unwrap();
        let y = embed(&spec, vec![1.0, 2.0, 3.0, 4.0]);
        let shifted = y.apply_offset(&LatticeOffset::new(vec![1])).unwrap();
        assert_eq!(shifted.tensor().data(), &[3.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn additive_blocks_shift_independently() {
        let spec = LatticeSpec::new(
            vec![FactorSpec::aperiodic("a", 3), FactorSpec::aperiodic("b", 2)],
            2,
            LatticeMode::Additive,
        )
        .unwrap();
        assert_eq!(spec.embedding_shape(), vec![5, 2]);
        let data: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let y = embed(&spec, data.clone());
        // u = (1, 0): block one shifts up a row, block two untouched.
        let s = y.apply_offset_additive(&LatticeOffset::new(vec![1, 0])).unwrap();
        assert_eq!(s.tensor().data(), &[3.0, 4.0, 5.0, 6.0, 0.0, 0.0, 7.0, 8.0, 9.0, 10.0]);
        // u = (1, -1) against a per-block oracle built from shift_zero_axis:
        // each block is treated as its own single-factor lattice.
        let u = LatticeOffset::new(vec![1, -1]);
        let s = y.apply_offset_additive(&u).unwrap();
        let block = |extent: usize, rows: Vec<f64>| {
            let spec = LatticeSpec::new(vec![FactorSpec::aperiodic("x", extent)], 2, LatticeMode::Product).unwrap();
            EmbeddingTensor::from_flat(spec, rows).unwrap()
        };
        let sa = block(3, data[0..6].to_vec()).shift_zero_axis(0, 1).unwrap();
        let sb = block(2, data[6..10].to_vec()).shift_zero_axis(0, -1).unwrap();
        let mut expect = sa.tensor().data().to_vec();
        expect.extend_from_slice(sb.tensor().data());
        assert_eq!(s.tensor().data(), expect.as_slice());
        // Identity offset.
        let id = y.apply_offset_additive(&LatticeOffset::zero(2)).unwrap();
        assert_eq!(id.tensor().data(), data.as_slice());
    }

    #[test]
    fn compose_adds_and_reduces_periodic_components() {
        let spec = LatticeSpec::new(
            vec![FactorSpec::periodic("p", 4), FactorSpec::aperiodic("q", 9)],
            1,
            LatticeMode::Product,
        )
        .unwrap();
        let u = LatticeOffset::new(vec![3, 2]);
        let v = LatticeOffset::new(vec![2, 0]);
        let c = compose_offsets(&u, &v, &spec).unwrap();
        assert_eq!(c.components, vec![1, 2]);
        let z = compose_offsets(&u, &u.negated(), &spec).unwrap();
        assert!(z.is_zero());
        assert!(compose_offsets(&u, &LatticeOffset::zero(1), &spec).is_err());
    }

    #[test]
    fn periodic_composition_law_holds_exactly() {
        let spec = LatticeSpec::new(
            vec![FactorSpec::periodic("p", 5), FactorSpec::periodic("q", 3)],
            2,
            LatticeMode::Product,
        )
        .unwrap();
        let mut rng = SeedStream::new(22);
        for _ in 0..10 {
            let data: Vec<f64> = (0..spec.element_count()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let y = embed(&spec, data);
            let u = LatticeOffset::new(vec![rng.int_inclusive(-9, 9), rng.int_inclusive(-9, 9)]);
            let v = LatticeOffset::new(vec![rng.int_inclusive(-9, 9), rng.int_inclusive(-9, 9)]);
            let two_step = y.apply_offset(&u).unwrap().apply_offset(&v).unwrap();
            let one_step = y.apply_offset(&compose_offsets(&u, &v, &spec).unwrap()).unwrap();
            assert_eq!(two_step.tensor().data(), one_step.tensor().data());
        }
    }

    #[test]
    fn aperiodic_composition_is_one_sided() {
        let spec = line_spec(4, false);
        let y = embed(&spec, vec![1.0, 2.0, 3.0, 4.0]);
        // Same sign: composition law holds.
        let a = y.shift_zero_axis(0, 1).unwrap().shift_zero_axis(0, 2).unwrap();
        let b = y.shift_zero_axis(0, 3).unwrap();
        assert_eq!(a.tensor().data(), b.tensor().data());
        // Opposite signs: zero fill destroys content, so u + (-u) != id.
        // The survivors (3, 4) return to their original slots; 1 and 2 are
        // gone for good.
        let round_trip = y.shift_zero_axis(0, 2).unwrap().shift_zero_axis(0, -2).unwrap();
        assert_eq!(round_trip.tensor().data(), &[0.0, 0.0, 3.0, 4.0]);
        assert_ne!(round_trip.tensor().data(), y.tensor().data());
    }

    #[test]
    fn roll_round_trip_is_identity() {
        let spec = LatticeSpec::new(
            vec![FactorSpec::periodic("p", 6), FactorSpec::periodic("q", 4)],
            3,
            LatticeMode::Product,
        )
        .unwrap();
        let mut rng = SeedStream::new(23);
        let data: Vec<f64> = (0..spec.element_count()).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y = embed(&spec, data);
        for s in [-7i64, -1, 2, 11] {
            let back = y.roll_axis(0, s).unwrap().roll_axis(0, -s).unwrap();
            assert_eq!(back.tensor().data(), y.tensor().data());
        }
    }

    #[test]
    fn shift_never_grows_the_norm() {
        let mut rng = SeedStream::new(24);
        let mixed = LatticeSpec::new(
            vec![FactorSpec::periodic("p", 5), FactorSpec::aperiodic("q", 5)],
            2,
            LatticeMode::Product,
        )
        .unwrap();
        let all_periodic = LatticeSpec::new(
            vec![FactorSpec::periodic("p", 5), FactorSpec::periodic("q", 5)],
            2,
            LatticeMode::Product,
        )
        .unwrap();
        for _ in 0..10 {
            let data: Vec<f64> = (0..mixed.element_count()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let u = LatticeOffset::new(vec![rng.int_inclusive(-4, 4), rng.int_inclusive(-4, 4)]);
            let y = embed(&mixed, data.clone());
            let shifted = y.apply_offset(&u).unwrap();
            assert!(shifted.tensor().norm_l2() <= y.tensor().norm_l2() + 1e-12);
            let yp = embed(&all_periodic, data);
            let rolled = yp.apply_offset(&u).unwrap();
            assert!((rolled.tensor().norm_l2() - yp.tensor().norm_l2()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_aperiodic_factors_reduce_to_image_translation() {
        // A lattice of two aperiodic spatial factors acts on its cells
        // exactly like zero-padded 2-D image translation.
        let (h, w, m) = (5usize, 6usize, 3usize);
        let spec = LatticeSpec::new(
            vec![FactorSpec::aperiodic("row", h), FactorSpec::aperiodic("col", w)],
            m,
            LatticeMode::Product,
        )
        .unwrap();
        let mut rng = SeedStream::new(25);
        let data: Vec<f64> = (0..spec.element_count()).map(|_| rng.uniform(0.0, 1.0)).collect();
        let y = embed(&spec, data.clone());
        for (dy, dx) in [(1i64, 0i64), (0, 2), (-2, 1), (3, -4)] {
            let shifted = y.apply_offset(&LatticeOffset::new(vec![dy, dx])).unwrap();
            let mut oracle = vec![0.0; data.len()];
            for r in 0..h as i64 {
                for c in 0..w as i64 {
                    let (sr, sc) = (r + dy, c + dx);
                    if sr < 0 || sc < 0 || sr >= h as i64 || sc >= w as i64 {
                        continue;
                    }
                    let dst = ((r as usize * w) + c as usize) * m;
                    let src = ((sr as usize * w) + sc as usize) * m;
                    oracle[dst..dst + m].copy_from_slice(&data[src..src + m]);
                }
            }
            assert_eq!(shifted.tensor().data(), oracle.as_slice(), "offset ({dy},{dx})");
        }
    }

    #[test]
    fn channel_vectors_stay_grouped() {
        let spec = LatticeSpec::new(
            vec![FactorSpec::periodic("p", 4)],
            3,
            LatticeMode::Product,
        )
        .unwrap();
        let data: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let y = embed(&spec, data.clone());
        let id = y.apply_offset(&LatticeOffset::zero(1)).unwrap();
        for cell in 0..4 {
            assert_eq!(&id.tensor().data()[cell * 3..(cell + 1) * 3], &data[cell * 3..(cell + 1) * 3]);
        }
        // A roll moves whole m-vectors: cell v of the output is cell v+1 of
        // the input.
        let s = y.apply_offset(&LatticeOffset::new(vec![1])).unwrap();
        for cell in 0..4 {
            let src = (cell + 1) % 4;
            assert_eq!(&s.tensor().data()[cell * 3..(cell + 1) * 3], &data[src * 3..(src + 1) * 3]);
        }
    }

    #[test]
    fn element_counts_match_mode_arithmetic() {
        let factors = vec![
            FactorSpec::aperiodic("floor", 10),
            FactorSpec::aperiodic("wall", 10),
            FactorSpec::aperiodic("object", 10),
            FactorSpec::aperiodic("scale", 8),
            FactorSpec::aperiodic("shape", 4),
            FactorSpec::periodic("orientation", 15),
        ];
        let product = LatticeSpec::new(factors.clone(), 4, LatticeMode::Product).unwrap();
        assert_eq!(product.element_count(), 1_920_000);
        let additive = LatticeSpec::new(factors, 4, LatticeMode::Additive).unwrap();
        assert_eq!(additive.element_count(), 228);
        let empty_p = LatticeSpec::new(vec![], 7, LatticeMode::Product).unwrap();
        let empty_a = LatticeSpec::new(vec![], 7, LatticeMode::Additive).unwrap();
        assert_eq!(empty_p.element_count(), 7);
        assert_eq!(empty_a.element_count(), 7);
        assert_eq!(empty_p.embedding_shape(), vec![7]);
    }

    #[test]
    fn degenerate_lattice_shift_is_identity() {
        let spec = LatticeSpec::new(vec![], 4, LatticeMode::Product).unwrap();
        let y = embed(&spec, vec![1.0, 2.0, 3.0, 4.0]);
        let s = y.shifted(&LatticeOffset::zero(0)).unwrap();
        assert_eq!(s.tensor().data(), y.tensor().data());
        assert!(y.shifted(&LatticeOffset::new(vec![1])).is_err());
    }

    #[test]
    fn spec_json_round_trips_with_stride_default() {
        let json = r#"{
            "factors": [
                {"name": "rot", "extent": 8, "periodic": true},
                {"name": "dx", "extent": 21, "stride": 2}
            ],
            "channels": 16,
            "mode": "product"
        }"#;
        let spec: LatticeSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.factors[0].stride, 1);
        assert!(!spec.factors[1].periodic);
        assert_eq!(spec.factors[1].stride, 2);
        let back = serde_json::to_string(&spec).unwrap();
        let again: LatticeSpec = serde_json::from_str(&back).unwrap();
        assert_eq!(again, spec);
        assert!(serde_json::from_str::<LatticeSpec>("{\"factors\": [], \"channels\": 1, \"mode\": \"sum\"}").is_err());
    }
}
