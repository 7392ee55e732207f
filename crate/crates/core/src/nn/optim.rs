use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

/// Step decay: `base_lr * decay_factor^(number of decay epochs <= epoch)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    #[serde(default)]
    pub decay_epochs: Vec<usize>,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
}

fn default_decay_factor() -> f64 {
    0.1
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            base_lr: lr,
            decay_epochs: Vec::new(),
            decay_factor: 0.1,
        }
    }

    /// 0.1, decayed ×0.1 at epochs 60, 120 and 180.
    pub fn cifar() -> Self {
        Self {
            base_lr: 0.1,
            decay_epochs: vec![60, 120, 180],
            decay_factor: 0.1,
        }
    }

    /// 0.1, decayed ×0.1 at epochs 50, 100 and 135.
    pub fn imagenet() -> Self {
        Self {
            base_lr: 0.1,
            decay_epochs: vec![50, 100, 135],
            decay_factor: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be > 0, got {}", self.base_lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must be in (0, 1), got {}",
                self.decay_factor
            )));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "decay_epochs must be strictly increasing, got {:?}",
                self.decay_epochs
            )));
        }
        Ok(())
    }
}

pub fn lr_at_epoch(schedule: &LrSchedule, epoch: usize) -> f64 {
    let passed = schedule.decay_epochs.iter().filter(|&&e| e <= epoch).count();
    schedule.base_lr * schedule.decay_factor.powi(passed as i32)
}

/// Optimizer settings for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch_size() -> usize {
    128
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    1e-4
}

impl TrainConfig {
    /// 10-epoch candidate evaluation budget at a constant learning rate.
    pub fn proxy() -> Self {
        Self {
            epochs: 10,
            batch_size: default_batch_size(),
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            schedule: LrSchedule::constant(0.1),
            seed: 0,
        }
    }

    /// 200 epochs with the CIFAR step schedule.
    pub fn cifar_full() -> Self {
        Self {
            epochs: 200,
            schedule: LrSchedule::cifar(),
            ..Self::proxy()
        }
    }

    /// 150 epochs with the ImageNet step schedule.
    pub fn imagenet_full() -> Self {
        Self {
            epochs: 150,
            schedule: LrSchedule::imagenet(),
            ..Self::proxy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        self.schedule.validate()
    }
}

/// `v ← momentum·v + grad + weight_decay·param; param ← param − lr·v`
pub fn sgd_step(
    param: &mut Tensor,
    grad: &Tensor,
    velocity: &mut Tensor,
    lr: f32,
    momentum: f32,
    weight_decay: f32,
) -> Result<()> {
    param.expect_same_dims("sgd_step", grad)?;
    param.expect_same_dims("sgd_step", velocity)?;
    for ((p, &g), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(velocity.data_mut())
    {
        *v = momentum * *v + g + weight_decay * *p;
        *p -= lr * *v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let c = LrSchedule::cifar();
        assert_eq!(lr_at_epoch(&c, 0), 0.1);
        assert!((lr_at_epoch(&c, 59) - 0.1).abs() < 1e-15);
        assert!((lr_at_epoch(&c, 60) - 0.01).abs() < 1e-15);
        assert!((lr_at_epoch(&c, 130) - 0.001).abs() < 1e-15);
        let i = LrSchedule::imagenet();
        assert!((lr_at_epoch(&i, 140) - 0.0001).abs() < 1e-15);
    }

    #[test]
    fn schedule_validation() {
        let mut s = LrSchedule::cifar();
        s.decay_epochs = vec![60, 60];
        assert!(s.validate().is_err());
        assert!(LrSchedule::constant(0.0).validate().is_err());
    }

    #[test]
    fn sgd_hand_values() {
        let mut p = Tensor::full(&[1], 1.0);
        let mut v = Tensor::zeros(&[1]);
        sgd_step(&mut p, &Tensor::full(&[1], 0.5), &mut v, 0.1, 0.0, 0.0).unwrap();
        assert!((p.data()[0] - 0.95).abs() < 1e-7);

        let mut p = Tensor::zeros(&[1]);
        let mut v = Tensor::zeros(&[1]);
        let g = Tensor::full(&[1], 1.0);
        sgd_step(&mut p, &g, &mut v, 1.0, 0.9, 0.0).unwrap();
        assert_eq!(p.data()[0], -1.0);
        sgd_step(&mut p, &g, &mut v, 1.0, 0.9, 0.0).unwrap();
        assert!((p.data()[0] + 2.9).abs() < 1e-6);
    }

    #[test]
    fn sgd_shape_mismatch() {
        let mut p = Tensor::zeros(&[2]);
        let mut v = Tensor::zeros(&[2]);
        assert!(sgd_step(&mut p, &Tensor::zeros(&[3]), &mut v, 0.1, 0.9, 0.0).is_err());
    }
}
