//! IDX image-file ingestion (the MNIST container format).

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const MAX_REASONABLE_EXTENT: u32 = 1 << 20;

struct Cursor<R> {
    reader: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let at = self.offset;
        let v = self
            .reader
            .read_u32::<BigEndian>()
            .map_err(|e| Error::format(at, format!("truncated {what}: {e}")))?;
        self.offset += 4;
        Ok(v)
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.reader
            .read_exact(buf)
            .map_err(|e| Error::format(at, format!("truncated {what}: {e}")))?;
        self.offset += buf.len() as u64;
        Ok(())
    }
}

/// Load an IDX unsigned-byte image file: big-endian magic 0x00000803, then
/// count/rows/cols, then row-major pixels. Pixels scale to [0, 1] and each
/// image comes back as a single-channel [1, rows, cols] tensor.
pub fn load_idx(path: &Path) -> Result<Vec<Tensor<f32>>> {
    let file = File::open(path)?;
    let mut cur = Cursor { reader: BufReader::new(file), offset: 0 };
    let magic = cur.read_u32("magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x} (ubyte images, 3 dims)"),
        ));
    }
    let count = cur.read_u32("image count")?;
    let rows = cur.read_u32("row count")?;
    let cols = cur.read_u32("column count")?;
    for (label, v) in [("count", count), ("rows", rows), ("cols", cols)] {
        if v == 0 || v > MAX_REASONABLE_EXTENT {
            return Err(Error::format(4, format!("unreasonable {label} {v}")));
        }
    }
    let pixels = rows as usize * cols as usize;
    let mut images = Vec::with_capacity(count as usize);
    let mut buf = vec![0u8; pixels];
    for i in 0..count {
        cur.read_exact(&mut buf, &format!("pixels of image {i}"))?;
        let data: Vec<f32> = buf.iter().map(|&b| b as f32 / 255.0).collect();
        images.push(Tensor::from_vec(&[1, rows as usize, cols as usize], data)?);
    }
    // A well-formed file ends exactly after the last image.
    let mut probe = [0u8; 1];
    if cur.reader.read(&mut probe)? != 0 {
        return Err(Error::format(cur.offset, "trailing bytes after final image".to_string()));
    }
    Ok(images)
}
