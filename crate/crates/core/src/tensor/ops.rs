//! Elementwise activations, the L1 objective, and the channel-wise linear
//! projection used when the embedding width disagrees with the backbone.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{same_shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Apply an activation elementwise.
pub fn activation<S: Scalar>(x: &Tensor<S>, kind: Activation) -> Result<Tensor<S>> {
    x.ensure_finite("activation input")?;
    let mut out = x.clone();
    match kind {
        Activation::Relu => {
            for v in out.data_mut() {
                if *v < S::zero() {
                    *v = S::zero();
                }
            }
        }
        Activation::Sigmoid => {
            for v in out.data_mut() {
                *v = S::one() / (S::one() + (-*v).exp());
            }
        }
    }
    Ok(out)
}

/// Reverse-mode gradient of [`activation`]. ReLU uses the input, sigmoid
/// reuses the saved output; pass whichever the variant needs as `saved`.
pub fn activation_vjp<S: Scalar>(
    saved: &Tensor<S>,
    kind: Activation,
    cotangent: &Tensor<S>,
) -> Result<Tensor<S>> {
    if saved.shape() != cotangent.shape() {
        return Err(Error::contract(format!(
            "activation_vjp: saved shape {:?} vs cotangent {:?}",
            saved.shape(),
            cotangent.shape()
        )));
    }
    let mut out = cotangent.clone();
    match kind {
        // saved = pre-activation input
        Activation::Relu => {
            for (g, x) in out.data_mut().iter_mut().zip(saved.data()) {
                if *x <= S::zero() {
                    *g = S::zero();
                }
            }
        }
        // saved = sigmoid output y; dy/dx = y (1 - y)
        Activation::Sigmoid => {
            for (g, y) in out.data_mut().iter_mut().zip(saved.data()) {
                *g *= *y * (S::one() - *y);
            }
        }
    }
    Ok(out)
}

/// Mean absolute error over all elements.
pub fn l1_loss<S: Scalar>(prediction: &Tensor<S>, target: &Tensor<S>) -> Result<S> {
    same_shape(prediction, target, "l1_loss")?;
    if prediction.len() == 0 {
        return Err(Error::contract("l1_loss: empty tensors"));
    }
    prediction.ensure_finite("l1_loss prediction")?;
    target.ensure_finite("l1_loss target")?;
    let mut acc = S::zero();
    for (p, t) in prediction.data().iter().zip(target.data()) {
        acc += (*p - *t).abs();
    }
    Ok(acc / S::from_usize(prediction.len()).unwrap())
}

/// Gradient of [`l1_loss`] w.r.t. the prediction: sign(p - t) / n, with the
/// subgradient 0 at exact ties.
pub fn l1_loss_grad<S: Scalar>(prediction: &Tensor<S>, target: &Tensor<S>) -> Result<Tensor<S>> {
    same_shape(prediction, target, "l1_loss_grad")?;
    let inv_n = S::one() / S::from_usize(prediction.len()).unwrap();
    let mut out = Tensor::zeros(prediction.shape());
    for ((g, p), t) in out.data_mut().iter_mut().zip(prediction.data()).zip(target.data()) {
        *g = if *p > *t {
            inv_n
        } else if *p < *t {
            -inv_n
        } else {
            S::zero()
        };
    }
    Ok(out)
}

/// Dense map y = W x + b applied per sample: input [n, in_dim] (or any shape
/// whose trailing product is in_dim with leading batch), weight
/// [out_dim, in_dim], bias [out_dim].
pub fn linear<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    input.ensure_finite("linear input")?;
    weight.ensure_finite("linear weight")?;
    bias.ensure_finite("linear bias")?;
    let (batch, in_dim) = flat_batch(input)?;
    let wshape = weight.shape();
    if wshape.len() != 2 || wshape[1] != in_dim {
        return Err(Error::contract(format!(
            "linear: weight shape {wshape:?} does not accept {in_dim}-wide input"
        )));
    }
    let out_dim = wshape[0];
    if bias.shape() != [out_dim] {
        return Err(Error::contract(format!(
            "linear: bias shape {:?}, expected [{out_dim}]",
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(&[batch, out_dim]);
    for n in 0..batch {
        let dst = &mut out.data_mut()[n * out_dim..(n + 1) * out_dim];
        dst.copy_from_slice(bias.data());
        // y = W x + b via GEMM with n-dimension 1
        S::gemm(
            false,
            false,
            out_dim,
            in_dim,
            1,
            S::one(),
            weight.data(),
            &input.data()[n * in_dim..(n + 1) * in_dim],
            S::one(),
            dst,
        );
    }
    Ok(out)
}

/// Reverse-mode gradients of [`linear`]: (d_input flattened to [n, in_dim],
/// d_weight, d_bias).
pub fn linear_vjp<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    cotangent: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (batch, in_dim) = flat_batch(input)?;
    let out_dim = weight.shape()[0];
    if cotangent.shape() != [batch, out_dim] {
        return Err(Error::contract(format!(
            "linear_vjp: cotangent shape {:?}, expected [{batch}, {out_dim}]",
            cotangent.shape()
        )));
    }
    let mut d_input = Tensor::zeros(&[batch, in_dim]);
    let mut d_weight = Tensor::zeros(weight.shape());
    let mut d_bias = Tensor::zeros(&[out_dim]);
    for n in 0..batch {
        let cot = &cotangent.data()[n * out_dim..(n + 1) * out_dim];
        // dx = W^T dy
        S::gemm(
            true,
            false,
            in_dim,
            out_dim,
            1,
            S::one(),
            weight.data(),
            cot,
            S::zero(),
            &mut d_input.data_mut()[n * in_dim..(n + 1) * in_dim],
        );
        // dW += dy x^T
        S::gemm(
            false,
            true,
            out_dim,
            1,
            in_dim,
            S::one(),
            cot,
            &input.data()[n * in_dim..(n + 1) * in_dim],
            S::one(),
            d_weight.data_mut(),
        );
        for (db, dy) in d_bias.data_mut().iter_mut().zip(cot) {
            *db += *dy;
        }
    }
    Ok((d_input, d_weight, d_bias))
}

fn flat_batch<S: Scalar>(input: &Tensor<S>) -> Result<(usize, usize)> {
    let shape = input.shape();
    if shape.is_empty() {
        return Err(Error::contract("linear: scalar input"));
    }
    Ok((shape[0], shape[1..].iter().product()))
}
