//! Mini-batch SGD over a [`Dataset`] and top-1 evaluation.

use log::debug;

use crate::archspace::{Mode, Network};
use crate::datapipe::{eval_batches, make_batches, Dataset};
use crate::nn::{lr_at_epoch, softmax_cross_entropy, TrainConfig};
use crate::rng::derive_seed;
use crate::Result;

/// Batch size used when only inference is needed.
pub const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Mean training loss of every completed epoch.
    pub epoch_losses: Vec<f64>,
    /// Set when a batch loss was not finite; training stops at that batch.
    pub diverged: bool,
}

/// Trains `net` in place. The shuffle of epoch `e` is seeded by `derive_seed(cfg.seed, [e])`.
pub fn train(net: &mut Network, data: &Dataset, cfg: &TrainConfig, augment: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(&cfg.schedule, epoch) as f32;
        let mut total = 0.0f64;
        for batch in make_batches(data, cfg.batch_size, derive_seed(cfg.seed, &[epoch as u64]), augment)? {
            let logits = net.forward(&batch.images, Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &batch.labels)?;
            if !loss.is_finite() {
                debug!("epoch {epoch}: loss {loss}, stopping");
                return Ok(TrainOutcome {
                    epoch_losses,
                    diverged: true,
                });
            }
            total += loss as f64 * batch.labels.len() as f64;
            net.backward(&grad)?;
            net.sgd_step(lr, cfg.momentum as f32, cfg.weight_decay as f32)?;
        }
        let mean = total / data.len() as f64;
        debug!("epoch {epoch}: lr {lr} loss {mean:.4}");
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        epoch_losses,
        diverged: false,
    })
}

/// Top-1 accuracy in percent, computed in eval mode.
pub fn accuracy(net: &mut Network, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for batch in eval_batches(data, EVAL_BATCH)? {
        let logits = net.forward(&batch.images, Mode::Eval)?;
        let k = logits.dims()[1];
        for (row, &label) in logits.data().chunks_exact(k).zip(&batch.labels) {
            if argmax(row) == label {
                correct += 1;
            }
        }
    }
    Ok(100.0 * correct as f64 / data.len() as f64)
}

/// Index of the largest value; the first one wins ties, NaN never wins.
fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] || row[best].is_nan() {
            best = i;
        }
    }
    best
}
