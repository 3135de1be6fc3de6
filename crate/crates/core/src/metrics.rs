//! Image-quality metrics: PSNR and single-scale SSIM.
//!
//! Both accept [H, W] or [C, H, W] tensors and do all arithmetic in f64
//! regardless of the storage scalar. SSIM averages channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_DYNAMIC_RANGE: f64 = 1.0;
pub const PSNR_CAP_DB: f64 = 120.0;

/// Aggregated evaluation result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub samples: usize,
}

impl MetricReport {
    /// Plain mean over per-sample (psnr, ssim) pairs.
    pub fn from_scores(scores: &[(f64, f64)]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::contract("metric report: no samples"));
        }
        let n = scores.len() as f64;
        Ok(MetricReport {
            psnr: scores.iter().map(|s| s.0).sum::<f64>() / n,
            ssim: scores.iter().map(|s| s.1).sum::<f64>() / n,
            samples: scores.len(),
        })
    }
}

fn image_dims<S: Scalar>(img: &Tensor<S>, op: &str) -> Result<(usize, usize, usize)> {
    match img.shape() {
        [h, w] => Ok((1, *h, *w)),
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::contract(format!("{op}: expected [H,W] or [C,H,W], got {other:?}"))),
    }
}

/// Peak signal-to-noise ratio in dB, capped so identical images report a
/// finite value.
pub fn psnr<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::contract(format!(
            "psnr: shape {:?} does not match {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.len() == 0 {
        return Err(Error::contract("psnr: empty images"));
    }
    a.ensure_finite("psnr lhs")?;
    b.ensure_finite("psnr rhs")?;
    let mut mse = 0.0f64;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x.to_f64_lossy() - y.to_f64_lossy();
        mse += d * d;
    }
    mse /= a.len() as f64;
    if mse < 1e-12 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalised 1-D Gaussian tap weights for the SSIM window.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0f64; SSIM_WINDOW];
    let centre = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - centre;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Horizontal then vertical pass of the separable Gaussian, valid windows
/// only: output is (h - 10) x (w - 10).
fn blur_valid(src: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - (SSIM_WINDOW - 1);
    let oh = h - (SSIM_WINDOW - 1);
    let mut rows = vec![0.0f64; h * ow];
    for r in 0..h {
        for c in 0..ow {
            let mut acc = 0.0;
            for (t, tap) in taps.iter().enumerate() {
                acc += tap * src[r * w + c + t];
            }
            rows[r * ow + c] = acc;
        }
    }
    let mut out = vec![0.0f64; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (t, tap) in taps.iter().enumerate() {
                acc += tap * rows[(r + t) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    out
}

/// Single-scale SSIM with the canonical 11x11 Gaussian window. Channels are
/// averaged; only fully interior windows contribute.
pub fn ssim<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::contract(format!(
            "ssim: shape {:?} does not match {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (channels, h, w) = image_dims(a, "ssim")?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::contract(format!(
            "ssim: image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    a.ensure_finite("ssim lhs")?;
    b.ensure_finite("ssim rhs")?;
    let taps = gaussian_taps();
    let c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE) * (SSIM_K1 * SSIM_DYNAMIC_RANGE);
    let c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE) * (SSIM_K2 * SSIM_DYNAMIC_RANGE);
    let plane = h * w;
    let mut channel_sum = 0.0f64;
    for ch in 0..channels {
        let pa: Vec<f64> = a.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v.to_f64_lossy()).collect();
        let pb: Vec<f64> = b.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v.to_f64_lossy()).collect();
        let sq_a: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let sq_b: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = blur_valid(&pa, h, w, &taps);
        let mu_b = blur_valid(&pb, h, w, &taps);
        let raw_aa = blur_valid(&sq_a, h, w, &taps);
        let raw_bb = blur_valid(&sq_b, h, w, &taps);
        let raw_ab = blur_valid(&prod, h, w, &taps);
        let mut acc = 0.0f64;
        for i in 0..mu_a.len() {
            let var_a = raw_aa[i] - mu_a[i] * mu_a[i];
            let var_b = raw_bb[i] - mu_b[i] * mu_b[i];
            let cov = raw_ab[i] - mu_a[i] * mu_b[i];
            // Written so that a == b makes numerator and denominator
            // bitwise identical, giving exactly 1.0.
            let num = (2.0 * (mu_a[i] * mu_b[i]) + c1) * (2.0 * cov + c2);
            let den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
            acc += num / den;
        }
        channel_sum += acc / mu_a.len() as f64;
    }
    Ok(channel_sum / channels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut rng = SeedStream::new(seed);
        Tensor::random_uniform(&[c, h, w], 0.0, 1.0, &mut rng)
    }

    /// Direct per-window double-sum SSIM, channels averaged. Builds its own
    /// 2-D kernel from the Gaussian definition.
    fn ssim_direct(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        let (c, h, w) = match a.shape() {
            [h, w] => (1, *h, *w),
            [c, h, w] => (*c, *h, *w),
            _ => unreachable!(),
        };
        let mut kernel = [[0.0f64; 11]; 11];
        let mut ksum = 0.0;
        for (i, row) in kernel.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let dy = i as f64 - 5.0;
                let dx = j as f64 - 5.0;
                *v = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
                ksum += *v;
            }
        }
        for row in kernel.iter_mut() {
            for v in row.iter_mut() {
                *v /= ksum;
            }
        }
        let c1 = 1e-4;
        let c2 = 9e-4;
        let plane = h * w;
        let mut total = 0.0;
        for ch in 0..c {
            let pa = &a.data()[ch * plane..(ch + 1) * plane];
            let pb = &b.data()[ch * plane..(ch + 1) * plane];
            let mut acc = 0.0;
            let mut count = 0usize;
            for top in 0..=(h - 11) {
                for left in 0..=(w - 11) {
                    let (mut ma, mut mb) = (0.0, 0.0);
                    for i in 0..11 {
                        for j in 0..11 {
                            let px = (top + i) * w + left + j;
                            ma += kernel[i][j] * pa[px];
                            mb += kernel[i][j] * pb[px];
                        }
                    }
                    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                    for i in 0..11 {
                        for j in 0..11 {
                            let px = (top + i) * w + left + j;
                            va += kernel[i][j] * (pa[px] - ma) * (pa[px] - ma);
                            vb += kernel[i][j] * (pb[px] - mb) * (pb[px] - mb);
                            cov += kernel[i][j] * (pa[px] - ma) * (pb[px] - mb);
                        }
                    }
                    acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    count += 1;
                }
            }
            total += acc / count as f64;
        }
        total / c as f64
    }

    #[test]
    fn identical_images_hit_the_cap_and_unit_ssim() {
        let img = random_image(3, 16, 16, 30);
        assert_eq!(psnr(&img, &img, 1.0).unwrap(), PSNR_CAP_DB);
        assert_eq!(ssim(&img, &img).unwrap(), 1.0);
        let flat = Tensor::<f64>::filled(&[12, 12], 0.37);
        assert_eq!(ssim(&flat, &flat).unwrap(), 1.0);
    }

    #[test]
    fn psnr_analytic_values() {
        let a = Tensor::<f64>::zeros(&[8, 8]);
        let b = Tensor::filled(&[8, 8], 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let ones = Tensor::filled(&[8, 8], 1.0);
        assert!((psnr(&a, &ones, 1.0).unwrap() - 0.0).abs() < 1e-9);
    }

    #[test]
    fn constant_images_get_the_stabilised_score() {
        let a = Tensor::<f64>::zeros(&[16, 16]);
        let b = Tensor::filled(&[16, 16], 1.0);
        let expect = 1e-4 / (1.0 + 1e-4);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_direct_formula_oracle() {
        let a = random_image(3, 20, 24, 31);
        let b = random_image(3, 20, 24, 32);
        let fast = ssim(&a, &b).unwrap();
        let slow = ssim_direct(&a, &b);
        assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
        // A structured pair too: oracle must also agree off the random case.
        let mut c = a.clone();
        for (i, v) in c.data_mut().iter_mut().enumerate() {
            *v = (*v + (i % 7) as f64 * 0.05).min(1.0);
        }
        let fast = ssim(&a, &c).unwrap();
        let slow = ssim_direct(&a, &c);
        assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = random_image(1, 14, 14, 33);
        let b = random_image(1, 14, 14, 34);
        assert!((psnr(&a, &b, 1.0).unwrap() - psnr(&b, &a, 1.0).unwrap()).abs() < 1e-9);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn psnr_decreases_along_a_noise_ladder() {
        let a = random_image(1, 16, 16, 35);
        let mut rng = SeedStream::new(36);
        let noise: Vec<f64> = (0..a.len()).map(|_| rng.normal()).collect();
        let mut prev = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let mut b = a.clone();
            for (v, n) in b.data_mut().iter_mut().zip(&noise) {
                *v += amp * n;
            }
            let p = psnr(&a, &b, 1.0).unwrap();
            assert!(p < prev, "noise {amp} gave {p} >= {prev}");
            prev = p;
        }
    }

    #[test]
    fn rejects_bad_shapes_and_small_images() {
        let a = Tensor::<f32>::zeros(&[8, 8]);
        let b = Tensor::<f32>::zeros(&[8, 9]);
        assert!(psnr(&a, &b, 1.0).is_err());
        assert!(ssim(&a, &a).is_err());
        let report = MetricReport::from_scores(&[(30.0, 0.9), (20.0, 0.7)]).unwrap();
        assert!((report.psnr - 25.0).abs() < 1e-12);
        assert!((report.ssim - 0.8).abs() < 1e-12);
        assert_eq!(report.samples, 2);
    }
}
