//! P5/P6 PPM images. Binary, 8-bit, maxval 255; the bit-exact format every
//! artifact test can diff.

use std::fs;
use std::path::Path;

use qtae_core::error::{Error, Result};
use qtae_core::tensor::Tensor;

/// Encode a CHW tensor in [0,1] as binary P6. Single-channel input is
/// replicated to grey RGB.
pub fn encode_p6(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let shape = image.shape();
    if shape.len() != 3 || (shape[0] != 1 && shape[0] != 3) {
        return Err(Error::contract(format!(
            "ppm: need [1|3, h, w] image, got {shape:?}"
        )));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * h * w);
    let plane = h * w;
    for p in 0..plane {
        for ch in 0..3 {
            let v = image.data()[if c == 1 { p } else { ch * plane + p }];
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn write_ppm(path: &Path, image: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode_p6(image)?)?;
    Ok(())
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Result<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, "ppm: truncated header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let at = self.pos as u64;
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(at, "ppm: expected a decimal number"))
    }
}

/// Decode binary P5 (one channel) or P6 (three channels) into a CHW tensor
/// scaled to [0,1]. Only maxval 255 is accepted.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut r = HeaderReader { bytes, pos: 0 };
    let magic = r.token()?;
    let channels = match magic {
        b"P5" => 1usize,
        b"P6" => 3usize,
        _ => return Err(Error::format(0, "ppm: magic must be P5 or P6")),
    };
    let w = r.number()?;
    let h = r.number()?;
    let maxval_at = r.pos as u64;
    let maxval = r.number()?;
    if maxval != 255 {
        return Err(Error::format(maxval_at, format!("ppm: maxval {maxval}, only 255 supported")));
    }
    // exactly one whitespace byte separates the header from the payload
    let data_start = r.pos + 1;
    let expect = channels * w * h;
    if bytes.len() < data_start + expect {
        return Err(Error::format(
            bytes.len() as u64,
            format!("ppm: payload needs {expect} bytes"),
        ));
    }
    let payload = &bytes[data_start..data_start + expect];
    // interleaved rows -> planar CHW
    let plane = w * h;
    let mut data = vec![0f32; expect];
    for p in 0..plane {
        for ch in 0..channels {
            data[ch * plane + p] = payload[p * channels + ch] as f32 / 255.0;
        }
    }
    Tensor::from_vec(&[channels, h, w], data)
}

pub fn read_ppm(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::contract(format!("cannot read {}: {e}", path.display())))?;
    decode_ppm(&bytes)
}

/// Mean-collapse RGB to grey or replicate grey to RGB so an image fits a
/// model trained on the other channel count.
pub fn adapt_channels(image: Tensor<f32>, channels: usize) -> Result<Tensor<f32>> {
    let shape = image.shape().to_vec();
    if shape[0] == channels {
        return Ok(image);
    }
    let (h, w) = (shape[1], shape[2]);
    let plane = h * w;
    match (shape[0], channels) {
        (3, 1) => {
            let mut data = vec![0f32; plane];
            for (p, v) in data.iter_mut().enumerate() {
                *v = (image.data()[p] + image.data()[plane + p] + image.data()[2 * plane + p])
                    / 3.0;
            }
            Tensor::from_vec(&[1, h, w], data)
        }
        (1, 3) => {
            let mut data = Vec::with_capacity(3 * plane);
            for _ in 0..3 {
                data.extend_from_slice(image.data());
            }
            Tensor::from_vec(&[3, h, w], data)
        }
        (got, want) => Err(Error::contract(format!(
            "image has {got} channels, model needs {want}"
        ))),
    }
}
