//! Adam optimiser state, one moment pair per parameter tensor.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moments plus the shared step counter. The counter
/// advances once per `step` call, covering every parameter in the update.
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    hyper: AdamHyper,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    /// Moments are allocated lazily to the parameter list seen on the first
    /// step; later calls must pass the same list in the same order.
    pub fn new(hyper: AdamHyper) -> Self {
        AdamState { hyper, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn hyper(&self) -> AdamHyper {
        self.hyper
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.hyper.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Restore the step counter when resuming from a checkpoint. Moments are
    /// restored separately via [`moments_mut`].
    pub fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    /// Flat views of (m, v) per parameter, for serialisation.
    pub fn moments(&self) -> (&[Vec<S>], &[Vec<S>]) {
        (&self.m, &self.v)
    }

    pub fn restore_moments(&mut self, m: Vec<Vec<S>>, v: Vec<Vec<S>>) -> Result<()> {
        if m.len() != v.len() {
            return Err(Error::contract("adam: m/v tensor counts differ"));
        }
        for (a, b) in m.iter().zip(&v) {
            if a.len() != b.len() {
                return Err(Error::contract("adam: m/v lengths differ"));
            }
        }
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// Apply one update to every parameter from its attached gradient.
    ///
    /// If any gradient is missing or non-finite the whole step is refused
    /// and no parameter or moment is touched.
    pub fn step(&mut self, params: &mut [&mut Tensor<S>]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            let g = p
                .grad()
                .ok_or_else(|| Error::contract(format!("adam: parameter {i} has no gradient")))?;
            if !g.iter().all(|x| x.is_finite()) {
                return Err(Error::numeric(format!("adam: non-finite gradient in parameter {i}")));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![S::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::contract(format!(
                "adam: state tracks {} parameters, step got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let b1 = S::from_f64_lossy(self.hyper.beta1);
        let b2 = S::from_f64_lossy(self.hyper.beta2);
        let one = S::one();
        let lr = S::from_f64_lossy(self.hyper.lr);
        let eps = S::from_f64_lossy(self.hyper.epsilon);
        let bc1 = one - S::from_f64_lossy(self.hyper.beta1.powi(self.step as i32));
        let bc2 = one - S::from_f64_lossy(self.hyper.beta2.powi(self.step as i32));
        for (i, p) in params.iter_mut().enumerate() {
            if self.m[i].len() != p.len() {
                return Err(Error::contract(format!(
                    "adam: parameter {i} changed size ({} vs {})",
                    self.m[i].len(),
                    p.len()
                )));
            }
            let grad = p.grad().unwrap().to_vec();
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for (((w, g), mi), vi) in p.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (one - b1) * *g;
                *vi = b2 * *vi + (one - b2) * *g * *g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
