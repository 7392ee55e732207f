use std::path::Path;

use super::{DataKind, Dataset, Split};
use crate::io_util;
use crate::nn::Tensor;
use crate::{Error, Result};

/// One label byte followed by 32×32 red, then green, then blue pixels.
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;

pub fn parse_cifar10_bin(bytes: &[u8]) -> Result<Dataset> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
        let whole = bytes.len() / CIFAR_RECORD_LEN * CIFAR_RECORD_LEN;
        return Err(Error::format(
            whole as u64,
            format!("length {} is not a positive multiple of {CIFAR_RECORD_LEN}", bytes.len()),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD_LEN;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * 3072);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if rec[0] > 9 {
            return Err(Error::format(
                (i * CIFAR_RECORD_LEN) as u64,
                format!("label byte {} > 9 in record {i}", rec[0]),
            ));
        }
        labels.push(rec[0] as usize);
        data.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Dataset::new(Tensor::new(&[n, 3, 32, 32], data)?, labels, 10, Split::Train, DataKind::Cifar10)
}

/// Inverse of [`parse_cifar10_bin`]; pixels are rounded to the nearest byte.
pub fn serialize_cifar10_bin(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.image_dims() != [3, 32, 32] || ds.class_count > 10 {
        return Err(Error::Input(format!(
            "CIFAR-10 records need 3x32x32 images and <= 10 classes, got {:?}",
            ds.image_dims()
        )));
    }
    let mut out = Vec::with_capacity(ds.len() * CIFAR_RECORD_LEN);
    for i in 0..ds.len() {
        out.push(ds.labels[i] as u8);
        out.extend(ds.image(i).iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

/// Concatenates several CIFAR-10 batch files.
pub fn load_cifar10(paths: &[impl AsRef<Path>], split: Split) -> Result<Dataset> {
    let mut bytes = Vec::new();
    for p in paths {
        let chunk = io_util::read(p.as_ref())?;
        if chunk.len() % CIFAR_RECORD_LEN != 0 {
            return Err(Error::format(
                0,
                format!("{}: length {} not a multiple of {CIFAR_RECORD_LEN}", p.as_ref().display(), chunk.len()),
            ));
        }
        bytes.extend_from_slice(&chunk);
    }
    let mut ds = parse_cifar10_bin(&bytes)?;
    ds.split = split;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, r: u8, g: u8, b: u8) -> Vec<u8> {
        let mut rec = vec![label];
        rec.extend(std::iter::repeat_n(r, 1024));
        rec.extend(std::iter::repeat_n(g, 1024));
        rec.extend(std::iter::repeat_n(b, 1024));
        rec
    }

    #[test]
    fn plane_order_is_red_green_blue() {
        let ds = parse_cifar10_bin(&record(6, 10, 20, 30)).unwrap();
        assert_eq!(ds.labels, vec![6]);
        assert_eq!(ds.images.dims(), &[1, 3, 32, 32]);
        let img = ds.image(0);
        assert_eq!(img[0], 10.0 / 255.0);
        assert_eq!(img[1024], 20.0 / 255.0);
        assert_eq!(img[2048 + 1023], 30.0 / 255.0);
    }

    #[test]
    fn bad_lengths_and_labels() {
        let mut bytes = record(1, 0, 0, 0);
        bytes.push(0);
        assert!(matches!(parse_cifar10_bin(&bytes), Err(Error::Format { offset: 3073, .. })));
        let mut bytes = record(1, 0, 0, 0);
        bytes.extend(record(10, 0, 0, 0));
        assert!(matches!(parse_cifar10_bin(&bytes), Err(Error::Format { offset: 3073, .. })));
        assert!(parse_cifar10_bin(&[]).is_err());
    }
}
