use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{DataKind, Dataset};
use crate::nn::Tensor;
use crate::rng::{self, Rng};
use crate::{Error, Result};

const CROP_PAD: usize = 4;

/// One standardized mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

/// Iterator over mini-batches of a dataset. The final batch may be short.
pub struct Batches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    augment: bool,
    rng: Rng,
    mean: Vec<f32>,
    std: Vec<f32>,
}

/// Shuffled training batches. Random crop and horizontal flip are applied only to
/// CIFAR-10 data when `augment` is set.
pub fn make_batches(ds: &Dataset, batch_size: usize, seed: u64, augment: bool) -> Result<Batches<'_>> {
    let mut b = eval_batches(ds, batch_size)?;
    let mut rng = rng::seeded(seed);
    b.order.shuffle(&mut rng);
    b.rng = rng;
    b.augment = augment && ds.kind == DataKind::Cifar10;
    Ok(b)
}

/// Batches in dataset order with standardization only.
pub fn eval_batches(ds: &Dataset, batch_size: usize) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::Input("batch size must be at least 1".into()));
    }
    let (mean, std) = ds.kind.channel_stats(ds.image_dims()[0]);
    Ok(Batches {
        ds,
        order: (0..ds.len()).collect(),
        pos: 0,
        batch_size,
        augment: false,
        rng: rng::seeded(0),
        mean,
        std,
    })
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        let [c, h, w] = self.ds.image_dims();
        let mut data = Vec::with_capacity(idx.len() * c * h * w);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            let mut img = self.ds.image(i).to_vec();
            if self.augment {
                let dy = self.rng.random_range(0..=2 * CROP_PAD);
                let dx = self.rng.random_range(0..=2 * CROP_PAD);
                img = pad_crop(&img, [c, h, w], CROP_PAD, dy, dx);
                if self.rng.random_bool(0.5) {
                    hflip(&mut img, [c, h, w]);
                }
            }
            for (ch, plane) in img.chunks_exact_mut(h * w).enumerate() {
                for v in plane {
                    *v = (*v - self.mean[ch]) / self.std[ch];
                }
            }
            data.extend_from_slice(&img);
            labels.push(self.ds.labels[i]);
        }
        let images = Tensor::new(&[idx.len(), c, h, w], data).expect("batch dims match data");
        Some(Batch { images, labels })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for Batches<'_> {}

/// Mirrors a CHW image left to right in place.
pub fn hflip(image: &mut [f32], [c, h, w]: [usize; 3]) {
    assert_eq!(image.len(), c * h * w);
    for row in image.chunks_exact_mut(w) {
        row.reverse();
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Reflect-pads a CHW image by `pad` on each side and crops an h×w window whose
/// top-left corner is at (`dy`, `dx`) in padded coordinates.
pub fn pad_crop(image: &[f32], [c, h, w]: [usize; 3], pad: usize, dy: usize, dx: usize) -> Vec<f32> {
    assert!(dy <= 2 * pad && dx <= 2 * pad);
    let mut out = Vec::with_capacity(image.len());
    for ch in 0..c {
        let plane = &image[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            let sy = reflect(y as isize + dy as isize - pad as isize, h);
            for x in 0..w {
                let sx = reflect(x as isize + dx as isize - pad as isize, w);
                out.push(plane[sy * w + sx]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy;
    use super::*;

    #[test]
    fn short_last_batch_and_full_coverage() {
        let ds = toy(10, 10, [1, 2, 2]);
        let batches: Vec<_> = make_batches(&ds, 32, 5, false).unwrap().collect();
        let sizes: Vec<_> = batches.iter().map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![32, 32, 32, 4]);
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.labels.clone()).collect();
        seen.sort_unstable();
        let mut want = ds.labels.clone();
        want.sort_unstable();
        assert_eq!(seen, want);
    }

    #[test]
    fn shuffle_is_seeded() {
        let ds = toy(10, 10, [1, 1, 1]);
        let a: Vec<_> = make_batches(&ds, 7, 1, false).unwrap().flat_map(|b| b.images.into_data()).collect();
        let b: Vec<_> = make_batches(&ds, 7, 1, false).unwrap().flat_map(|b| b.images.into_data()).collect();
        let c: Vec<_> = make_batches(&ds, 7, 2, false).unwrap().flat_map(|b| b.images.into_data()).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mnist_standardization() {
        let mut ds = toy(1, 1, [1, 1, 1]);
        ds.kind = DataKind::Mnist;
        ds.images.data_mut()[0] = 0.1307;
        let b = eval_batches(&ds, 1).unwrap().next().unwrap();
        assert!(b.images.data()[0].abs() < 1e-7);
    }

    #[test]
    fn hflip_reverses_rows_and_is_involution() {
        let mut img: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let orig = img.clone();
        hflip(&mut img, [2, 2, 3]);
        assert_eq!(&img[..3], &[2.0, 1.0, 0.0]);
        hflip(&mut img, [2, 2, 3]);
        assert_eq!(img, orig);
    }

    #[test]
    fn centered_crop_is_identity_and_reflection_skips_edge() {
        let img: Vec<f32> = (0..25).map(|v| v as f32).collect();
        assert_eq!(pad_crop(&img, [1, 5, 5], 4, 4, 4), img);
        // shift by one pixel to the left: column -1 reflects to column 1
        let shifted = pad_crop(&img, [1, 5, 5], 4, 4, 3);
        assert_eq!(&shifted[..5], &[1.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_batch_size_rejected() {
        let ds = toy(2, 2, [1, 1, 1]);
        assert!(make_batches(&ds, 0, 0, false).is_err());
    }
}
