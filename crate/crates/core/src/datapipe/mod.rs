//! Dataset readers (MNIST IDX, CIFAR-10 binary), stratified sampling and batching.

mod batch;
mod cifar;
mod mnist;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

pub use batch::{eval_batches, hflip, make_batches, pad_crop, Batch, Batches};
pub use cifar::{load_cifar10, parse_cifar10_bin, serialize_cifar10_bin, CIFAR_RECORD_LEN};
pub use mnist::{load_mnist, parse_mnist_idx};

use crate::nn::Tensor;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Mnist,
    Cifar10,
    /// No standardization, no augmentation.
    Custom,
}

impl DataKind {
    /// Published per-channel means and standard deviations of the training sets.
    pub fn channel_stats(self, channels: usize) -> (Vec<f32>, Vec<f32>) {
        match self {
            DataKind::Mnist => (vec![0.1307; channels], vec![0.3081; channels]),
            DataKind::Cifar10 => (vec![0.4914, 0.4822, 0.4465], vec![0.2470, 0.2435, 0.2616]),
            DataKind::Custom => (vec![0.0; channels], vec![1.0; channels]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Images in [0, 1] with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: Split,
    pub kind: DataKind,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_count: usize, split: Split, kind: DataKind) -> Result<Self> {
        images.expect_rank("dataset", 4)?;
        if images.dims()[0] != labels.len() {
            return Err(Error::Input(format!(
                "{} images but {} labels",
                images.dims()[0],
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Input(format!("label {l} outside [0, {class_count})")));
        }
        Ok(Self {
            images,
            labels,
            class_count,
            split,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// (channels, height, width)
    pub fn image_dims(&self) -> [usize; 3] {
        let d = self.images.dims();
        [d[1], d[2], d[3]]
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let sz: usize = self.image_dims().iter().product();
        &self.images.data()[i * sz..(i + 1) * sz]
    }

    /// New dataset holding the given samples in the given order. Panics on an
    /// out-of-range index.
    pub fn select(&self, indices: &[usize], split: Split) -> Result<Dataset> {
        let [c, h, w] = self.image_dims();
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        if indices.is_empty() {
            return Err(Error::Input("cannot build an empty dataset".into()));
        }
        Dataset::new(
            Tensor::new(&[indices.len(), c, h, w], data)?,
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_count,
            split,
            self.kind,
        )
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// SHA-256 over dims, pixels and labels, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for d in self.images.dims() {
            h.update((*d as u64).to_le_bytes());
        }
        for v in self.images.data() {
            h.update(v.to_le_bytes());
        }
        for l in &self.labels {
            h.update((*l as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn shuffled_class_indices(&self, seed: u64) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        for (c, idx) in by_class.iter_mut().enumerate() {
            idx.shuffle(&mut rng::seeded(rng::derive_seed(seed, &[c as u64])));
        }
        by_class
    }
}

/// Exactly `per_class` samples of every class, chosen by a seeded shuffle; returned in
/// their original dataset order.
pub fn stratified_subset(ds: &Dataset, per_class: usize, seed: u64) -> Result<Dataset> {
    let (train, _) = split_by_class(ds, per_class, 0, seed)?;
    Ok(train)
}

/// Disjoint stratified train/validation subsets carved from one split.
pub fn stratified_split(
    ds: &Dataset,
    train_per_class: usize,
    val_per_class: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if val_per_class == 0 {
        return Err(Error::Input("validation split needs at least one sample per class".into()));
    }
    let (train, val) = split_by_class(ds, train_per_class, val_per_class, seed)?;
    Ok((train, val.expect("non-empty validation split")))
}

fn split_by_class(ds: &Dataset, first: usize, second: usize, seed: u64) -> Result<(Dataset, Option<Dataset>)> {
    if first == 0 {
        return Err(Error::Input("per-class count must be positive".into()));
    }
    let by_class = ds.shuffled_class_indices(seed);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < first + second {
            return Err(Error::Input(format!(
                "class {c} has {} samples, need {}",
                idx.len(),
                first + second
            )));
        }
        a.extend_from_slice(&idx[..first]);
        b.extend_from_slice(&idx[first..first + second]);
    }
    a.sort_unstable();
    b.sort_unstable();
    let train = ds.select(&a, ds.split)?;
    let val = if b.is_empty() { None } else { Some(ds.select(&b, Split::Val)?) };
    Ok((train, val))
}
