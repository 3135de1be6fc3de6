//! 2-D convolution and its adjoint (transposed convolution).
//!
//! Layout conventions: inputs are NCHW, kernels are [out_ch, in_ch, K, K]
//! for `conv2d`. `deconv2d` is defined as the exact adjoint of `conv2d`
//! with the same kernel, stride and padding, so its kernel layout reads as
//! [in_ch, out_ch, K, K] from the caller's point of view.
//!
//! Both directions lower to an im2col gather (or col2im scatter) plus one
//! GEMM per sample.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Boundary handling of the spatial padding, with the per-side amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero(usize),
    Circular(usize),
}

impl Padding {
    pub fn amount(&self) -> usize {
        match self {
            Padding::Zero(p) | Padding::Circular(p) => *p,
        }
    }
}

/// Output spatial extent of `conv2d` along one axis.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::contract("conv2d: stride must be positive"));
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::contract(format!(
            "conv2d: kernel {kernel} exceeds padded extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output spatial extent of `deconv2d` along one axis (inverse of the
/// convolution arithmetic).
pub fn deconv_output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::contract("deconv2d: stride must be positive"));
    }
    let grown = (input - 1) * stride + kernel;
    if grown < 2 * pad + 1 {
        return Err(Error::contract(format!(
            "deconv2d: padding {pad} swallows the whole {grown}-wide output"
        )));
    }
    Ok(grown - 2 * pad)
}

struct ConvGeom {
    batch: usize,
    in_ch: usize,
    in_h: usize,
    in_w: usize,
    out_ch: usize,
    k: usize,
    out_h: usize,
    out_w: usize,
}

fn conv_geometry<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: Padding,
) -> Result<ConvGeom> {
    let ishape = input.shape();
    let kshape = kernel.shape();
    if ishape.len() != 4 {
        return Err(Error::contract(format!("conv2d: input must be NCHW, got {ishape:?}")));
    }
    if kshape.len() != 4 || kshape[2] != kshape[3] {
        return Err(Error::contract(format!(
            "conv2d: kernel must be [out_ch, in_ch, k, k], got {kshape:?}"
        )));
    }
    if ishape[1] != kshape[1] {
        return Err(Error::contract(format!(
            "conv2d: input has {} channels but kernel expects {}",
            ishape[1], kshape[1]
        )));
    }
    let pad = padding.amount();
    let out_h = conv_output_extent(ishape[2], kshape[2], stride, pad)?;
    let out_w = conv_output_extent(ishape[3], kshape[3], stride, pad)?;
    Ok(ConvGeom {
        batch: ishape[0],
        in_ch: ishape[1],
        in_h: ishape[2],
        in_w: ishape[3],
        out_ch: kshape[0],
        k: kshape[2],
        out_h,
        out_w,
    })
}

/// Source row/col for an output position and kernel tap; None means the tap
/// falls into zero padding.
#[inline]
fn tap_index(pos: usize, tap: usize, stride: usize, pad: usize, extent: usize, circular: bool) -> Option<usize> {
    let raw = (pos * stride + tap) as isize - pad as isize;
    if circular {
        Some(raw.rem_euclid(extent as isize) as usize)
    } else if raw >= 0 && (raw as usize) < extent {
        Some(raw as usize)
    } else {
        None
    }
}

/// Gather the patch matrix: col[(c*k*k + kh*k + kw), (oh*out_w + ow)].
fn im2col<S: Scalar>(image: &[S], g: &ConvGeom, stride: usize, padding: Padding, col: &mut [S]) {
    let circular = matches!(padding, Padding::Circular(_));
    let pad = padding.amount();
    let plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let mut row = 0;
    for c in 0..g.in_ch {
        for kh in 0..g.k {
            for kw in 0..g.k {
                let dst = &mut col[row * out_plane..(row + 1) * out_plane];
                let src = &image[c * plane..(c + 1) * plane];
                let mut idx = 0;
                for oh in 0..g.out_h {
                    match tap_index(oh, kh, stride, pad, g.in_h, circular) {
                        Some(ih) => {
                            let base = ih * g.in_w;
                            for ow in 0..g.out_w {
                                dst[idx] = match tap_index(ow, kw, stride, pad, g.in_w, circular) {
                                    Some(iw) => src[base + iw],
                                    None => S::zero(),
                                };
                                idx += 1;
                            }
                        }
                        None => {
                            for _ in 0..g.out_w {
                                dst[idx] = S::zero();
                                idx += 1;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add the patch matrix back into an image: the exact transpose of
/// `im2col` as a linear map.
fn col2im<S: Scalar>(col: &[S], g: &ConvGeom, stride: usize, padding: Padding, image: &mut [S]) {
    let circular = matches!(padding, Padding::Circular(_));
    let pad = padding.amount();
    let plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let mut row = 0;
    for c in 0..g.in_ch {
        for kh in 0..g.k {
            for kw in 0..g.k {
                let src = &col[row * out_plane..(row + 1) * out_plane];
                let dst = &mut image[c * plane..(c + 1) * plane];
                let mut idx = 0;
                for oh in 0..g.out_h {
                    match tap_index(oh, kh, stride, pad, g.in_h, circular) {
                        Some(ih) => {
                            let base = ih * g.in_w;
                            for ow in 0..g.out_w {
                                if let Some(iw) = tap_index(ow, kw, stride, pad, g.in_w, circular) {
                                    dst[base + iw] += src[idx];
                                }
                                idx += 1;
                            }
                        }
                        None => idx += g.out_w,
                    }
                }
                row += 1;
            }
        }
    }
}

/// 2-D cross-correlation of an NCHW input with an [out_ch, in_ch, k, k]
/// kernel. Differentiable w.r.t. both arguments via [`conv2d_vjp`].
pub fn conv2d<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<S>> {
    input.ensure_finite("conv2d input")?;
    kernel.ensure_finite("conv2d kernel")?;
    let g = conv_geometry(input, kernel, stride, padding)?;
    let patch_rows = g.in_ch * g.k * g.k;
    let out_plane = g.out_h * g.out_w;
    let mut col = vec![S::zero(); patch_rows * out_plane];
    let mut out = Tensor::zeros(&[g.batch, g.out_ch, g.out_h, g.out_w]);
    let in_stride = g.in_ch * g.in_h * g.in_w;
    let out_stride = g.out_ch * out_plane;
    for n in 0..g.batch {
        im2col(&input.data()[n * in_stride..(n + 1) * in_stride], &g, stride, padding, &mut col);
        S::gemm(
            false,
            false,
            g.out_ch,
            patch_rows,
            out_plane,
            S::one(),
            kernel.data(),
            &col,
            S::zero(),
            &mut out.data_mut()[n * out_stride..(n + 1) * out_stride],
        );
    }
    Ok(out)
}

/// Transposed convolution: the adjoint of [`conv2d`] with the same kernel,
/// stride and padding, i.e. `<conv2d(a, k), b> == <a, deconv2d(b, k)>`.
///
/// The input must have `out_ch` channels (the conv view's output side); the
/// result has `in_ch` channels and spatial extents grown by the inverse of
/// the convolution arithmetic.
pub fn deconv2d<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<S>> {
    let ishape = input.shape();
    if ishape.len() != 4 {
        return Err(Error::contract(format!("deconv2d: input must be NCHW, got {ishape:?}")));
    }
    let kshape = kernel.shape();
    if kshape.len() != 4 || kshape[2] != kshape[3] {
        return Err(Error::contract(format!(
            "deconv2d: kernel must be [conv_out_ch, conv_in_ch, k, k], got {kshape:?}"
        )));
    }
    let pad = padding.amount();
    let h = deconv_output_extent(ishape[2], kshape[2], stride, pad)?;
    let w = deconv_output_extent(ishape[3], kshape[3], stride, pad)?;
    conv_input_adjoint(input, kernel, stride, padding, h, w)
}

/// Adjoint of conv2d towards an explicitly sized input plane. `deconv2d`
/// uses the default (exactly inverted) geometry; `conv2d_vjp` passes the
/// original input extents so strided tails receive their zero gradient.
fn conv_input_adjoint<S: Scalar>(
    cotangent: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: Padding,
    target_h: usize,
    target_w: usize,
) -> Result<Tensor<S>> {
    cotangent.ensure_finite("deconv2d input")?;
    kernel.ensure_finite("deconv2d kernel")?;
    let cshape = cotangent.shape();
    let kshape = kernel.shape();
    if cshape[1] != kshape[0] {
        return Err(Error::contract(format!(
            "deconv2d: input has {} channels but kernel produces {}",
            cshape[1], kshape[0]
        )));
    }
    let g = ConvGeom {
        batch: cshape[0],
        in_ch: kshape[1],
        in_h: target_h,
        in_w: target_w,
        out_ch: kshape[0],
        k: kshape[2],
        out_h: cshape[2],
        out_w: cshape[3],
    };
    // Geometry must be consistent: conv over the target extents yields the
    // cotangent extents.
    let pad = padding.amount();
    if conv_output_extent(target_h, g.k, stride, pad)? != g.out_h
        || conv_output_extent(target_w, g.k, stride, pad)? != g.out_w
    {
        return Err(Error::contract("deconv2d: extents inconsistent with convolution arithmetic"));
    }
    let patch_rows = g.in_ch * g.k * g.k;
    let out_plane = g.out_h * g.out_w;
    let mut col = vec![S::zero(); patch_rows * out_plane];
    let mut out = Tensor::zeros(&[g.batch, g.in_ch, g.in_h, g.in_w]);
    let co_stride = g.out_ch * out_plane;
    let img_stride = g.in_ch * g.in_h * g.in_w;
    for n in 0..g.batch {
        // col = kernel^T (patch_rows x out_ch) @ cotangent (out_ch x out_plane)
        S::gemm(
            true,
            false,
            patch_rows,
            g.out_ch,
            out_plane,
            S::one(),
            kernel.data(),
            &cotangent.data()[n * co_stride..(n + 1) * co_stride],
            S::zero(),
            &mut col,
        );
        col2im(&col, &g, stride, padding, &mut out.data_mut()[n * img_stride..(n + 1) * img_stride]);
    }
    Ok(out)
}

/// Kernel cotangent shared by both conv directions:
/// `dk[o,i,kh,kw] = sum_n <cotangent[n,o], patches(input)[n, i,kh,kw]>`.
fn conv_kernel_grad<S: Scalar>(
    input: &Tensor<S>,
    cotangent: &Tensor<S>,
    kshape: &[usize],
    stride: usize,
    padding: Padding,
) -> Result<Tensor<S>> {
    let g = ConvGeom {
        batch: input.shape()[0],
        in_ch: input.shape()[1],
        in_h: input.shape()[2],
        in_w: input.shape()[3],
        out_ch: cotangent.shape()[1],
        k: kshape[2],
        out_h: cotangent.shape()[2],
        out_w: cotangent.shape()[3],
    };
    let patch_rows = g.in_ch * g.k * g.k;
    let out_plane = g.out_h * g.out_w;
    let mut col = vec![S::zero(); patch_rows * out_plane];
    let mut dkernel = Tensor::zeros(kshape);
    let in_stride = g.in_ch * g.in_h * g.in_w;
    let co_stride = g.out_ch * out_plane;
    for n in 0..g.batch {
        im2col(&input.data()[n * in_stride..(n + 1) * in_stride], &g, stride, padding, &mut col);
        // dk += cotangent (out_ch x out_plane) @ col^T (out_plane x patch_rows)
        S::gemm(
            false,
            true,
            g.out_ch,
            out_plane,
            patch_rows,
            S::one(),
            &cotangent.data()[n * co_stride..(n + 1) * co_stride],
            &col,
            S::one(),
            dkernel.data_mut(),
        );
    }
    Ok(dkernel)
}

/// Reverse-mode gradients of `conv2d`: returns (d_input, d_kernel) for a
/// given output cotangent.
pub fn conv2d_vjp<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: Padding,
    cotangent: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let g = conv_geometry(input, kernel, stride, padding)?;
    let expect = [g.batch, g.out_ch, g.out_h, g.out_w];
    if cotangent.shape() != expect {
        return Err(Error::contract(format!(
            "conv2d_vjp: cotangent shape {:?}, expected {:?}",
            cotangent.shape(),
            expect
        )));
    }
    let d_input = conv_input_adjoint(cotangent, kernel, stride, padding, g.in_h, g.in_w)?;
    let d_kernel = conv_kernel_grad(input, cotangent, kernel.shape(), stride, padding)?;
    Ok((d_input, d_kernel))
}

/// Reverse-mode gradients of `deconv2d`: returns (d_input, d_kernel).
pub fn deconv2d_vjp<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    stride: usize,
    padding: Padding,
    cotangent: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    // deconv2d(x) = A^T x for the conv operator A, so d_input = A cotangent
    // and the kernel cotangent is conv's with the roles of input/cotangent
    // swapped.
    let d_input = conv2d(cotangent, kernel, stride, padding)?;
    if d_input.shape() != input.shape() {
        return Err(Error::contract(format!(
            "deconv2d_vjp: cotangent shape {:?} inconsistent with input {:?}",
            cotangent.shape(),
            input.shape()
        )));
    }
    let d_kernel = conv_kernel_grad(cotangent, input, kernel.shape(), stride, padding)?;
    Ok((d_input, d_kernel))
}
