//! Quantised transforming auto-encoder: a convolutional auto-encoder whose
//! embedding is a discrete lattice, trained so that shifting the lattice
//! moves the decoded image by the corresponding transformation.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (f32 or f64);
//! training runs in f32 while gradient verification runs the same code in
//! f64. Concrete aliases for the common instantiations live at the crate
//! root.

pub mod data;
pub mod error;
pub mod lattice;
pub mod metrics;
pub mod model;
pub mod pose;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::{RngState, SeedStream};
pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
