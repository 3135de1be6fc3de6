//! Dense row-major tensors with explicit reverse-mode gradients.
//!
//! The engine is deliberately small: tensors are plain buffers, every
//! operation is a pure function returning a fresh tensor, and each
//! differentiable op comes with a hand-written vector-Jacobian product.
//! There is no graph or tape; models chain the VJPs in reverse order
//! themselves, which keeps execution single-threaded and deterministic
//! per graph.

mod adam;
mod conv;
mod gradcheck;
mod ops;

pub use adam::{AdamHyper, AdamState};
pub use conv::{conv2d, conv2d_vjp, conv_output_extent, deconv2d, deconv2d_vjp, deconv_output_extent, Padding};
pub use gradcheck::{finite_diff_check, ClosureFn, GradCheckReport, VectorFn};
pub use ops::{
    activation, activation_vjp, l1_loss, l1_loss_grad, linear, linear_vjp, Activation,
};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::scalar::Scalar;

/// Dense n-dimensional array, row-major, with an optional gradient buffer
/// of identical length (used by parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
    grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = element_count(shape);
        Tensor { shape: shape.to_vec(), data: vec![S::zero(); n], grad: None }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let n = element_count(shape);
        Tensor { shape: shape.to_vec(), data: vec![value; n], grad: None }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if element_count(shape) != data.len() {
            return Err(Error::contract(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data, grad: None })
    }

    /// Uniform random tensor in `[lo, hi)`; draws are made in f64 so the
    /// stream agrees across element types.
    pub fn random_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut SeedStream) -> Self {
        let n = element_count(shape);
        let data = (0..n).map(|_| S::from_f64_lossy(rng.uniform(lo, hi))).collect();
        Tensor { shape: shape.to_vec(), data, grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Reinterpret as a new shape with the same element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        if element_count(shape) != self.data.len() {
            return Err(Error::contract(format!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Elementwise cast to another scalar type (via f64).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64_lossy(v.to_f64_lossy())).collect(),
            grad: None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::numeric(format!("{what} contains non-finite values")))
        }
    }

    // ---- gradient buffer -------------------------------------------------

    pub fn alloc_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![S::zero(); self.data.len()]);
        }
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [S]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = S::zero());
        }
    }

    pub fn set_grad(&mut self, grad: &[S]) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::contract("gradient length does not match tensor length"));
        }
        self.grad = Some(grad.to_vec());
        Ok(())
    }

    pub fn add_to_grad(&mut self, delta: &[S]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::contract("gradient length does not match tensor length"));
        }
        self.alloc_grad();
        let g = self.grad.as_mut().unwrap();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += *di;
        }
        Ok(())
    }

    // ---- small numeric helpers ------------------------------------------

    pub fn dot(&self, other: &Tensor<S>) -> Result<S> {
        if self.shape != other.shape {
            return Err(Error::contract(format!(
                "dot: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let mut acc = S::zero();
        for (a, b) in self.data.iter().zip(&other.data) {
            acc += *a * *b;
        }
        Ok(acc)
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| { let x = v.to_f64_lossy(); x * x }).sum::<f64>().sqrt()
    }

    pub fn scale_in_place(&mut self, factor: S) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn add_scaled(&mut self, other: &Tensor<S>, factor: S) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::contract("add_scaled: shape mismatch"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b * factor;
        }
        Ok(())
    }
}

pub(crate) fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Shape check helper shared by binary ops.
pub(crate) fn same_shape<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::contract(format!(
            "{op}: shape {:?} does not match {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn grad_tracks_length_invariant() {
        let mut t = Tensor::<f32>::zeros(&[4]);
        assert!(t.grad().is_none());
        t.alloc_grad();
        assert_eq!(t.grad().unwrap().len(), t.len());
        t.add_to_grad(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        t.add_to_grad(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0, 5.0]);
        assert!(t.add_to_grad(&[1.0]).is_err());
    }

    #[test]
    fn ensure_finite_flags_nan() {
        let t = Tensor::<f64>::from_vec(&[2], vec![1.0, f64::NAN]).unwrap();
        assert!(t.ensure_finite("t").is_err());
    }

    #[test]
    fn random_uniform_stream_agrees_across_types() {
        let mut r1 = SeedStream::new(11);
        let mut r2 = SeedStream::new(11);
        let a = Tensor::<f32>::random_uniform(&[8], -1.0, 1.0, &mut r1);
        let b = Tensor::<f64>::random_uniform(&[8], -1.0, 1.0, &mut r2);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, *y as f32);
        }
    }
}
