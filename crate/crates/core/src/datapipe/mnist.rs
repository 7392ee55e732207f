use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{DataKind, Dataset, Split};
use crate::io_util;
use crate::nn::Tensor;
use crate::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset as u64, format!("truncated {what}")))
}

/// Decodes an IDX image file (magic 0x803) and label file (magic 0x801).
/// Pixels are scaled to [0, 1] by 1/255.
pub fn parse_mnist_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = be_u32(images, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(0, format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let n = be_u32(images, 4, "image count")? as usize;
    let rows = be_u32(images, 8, "row count")? as usize;
    let cols = be_u32(images, 12, "column count")? as usize;
    let magic = be_u32(labels, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(0, format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let n_labels = be_u32(labels, 4, "label count")? as usize;
    if n_labels != n {
        return Err(Error::format(4, format!("label file has {n_labels} items, image file {n}")));
    }
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::format(4, "empty IDX file"));
    }
    let pixels = n * rows * cols;
    let payload = images.get(16..16 + pixels).ok_or_else(|| {
        Error::format(images.len() as u64, format!("image payload truncated, need {pixels} bytes after header"))
    })?;
    if images.len() != 16 + pixels {
        return Err(Error::format((16 + pixels) as u64, "trailing bytes after image payload"));
    }
    let label_bytes = labels.get(8..8 + n).ok_or_else(|| {
        Error::format(labels.len() as u64, format!("label payload truncated, need {n} bytes after header"))
    })?;
    if labels.len() != 8 + n {
        return Err(Error::format((8 + n) as u64, "trailing bytes after label payload"));
    }
    if let Some(pos) = label_bytes.iter().position(|&l| l > 9) {
        return Err(Error::format(8 + pos as u64, format!("label {} > 9", label_bytes[pos])));
    }
    let data = payload.iter().map(|&b| b as f32 / 255.0).collect();
    Dataset::new(
        Tensor::new(&[n, 1, rows, cols], data)?,
        label_bytes.iter().map(|&l| l as usize).collect(),
        10,
        Split::Train,
        DataKind::Mnist,
    )
}

pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = io_util::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads an IDX image/label pair; gzip-compressed files are detected by magic bytes.
pub fn load_mnist(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let mut ds = parse_mnist_idx(&read_maybe_gz(images)?, &read_maybe_gz(labels)?)?;
    ds.split = split;
    Ok(ds)
}
