use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archspace::NetworkTemplate;
use crate::datapipe::{load_cifar10, load_mnist, stratified_split, Dataset, Split};
use crate::evosearch::SearchConfig;
use crate::io_util;
use crate::nn::{LrSchedule, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// `paths = [images, labels]`, IDX, optionally gzipped.
    Mnist,
    /// `paths` lists CIFAR-10 binary batch files.
    Cifar10,
}

/// Where the proxy data comes from and how it is split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub format: DatasetFormat,
    pub paths: Vec<PathBuf>,
    pub train_per_class: usize,
    pub val_per_class: usize,
    #[serde(default)]
    pub subset_seed: u64,
    /// Random crop and flip during training (CIFAR-10 only).
    #[serde(default)]
    pub augment: bool,
}

/// Everything a search or training run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub template: String,
    pub output_dir: PathBuf,
    /// Initialize candidates from a trained uniform-4× network.
    #[serde(default)]
    pub supernet_init: bool,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub search: SearchConfig,
    /// Candidate training. `epochs` must equal `search.proxy_epochs`; the seed is
    /// replaced per candidate.
    #[serde(default = "default_proxy_train")]
    pub proxy_train: TrainConfig,
    /// Used by `bnas train`.
    #[serde(default = "TrainConfig::cifar_full")]
    pub full_train: TrainConfig,
    /// Supernet training; defaults to `proxy_train`.
    #[serde(default)]
    pub supernet_train: Option<TrainConfig>,
}

fn default_proxy_train() -> TrainConfig {
    TrainConfig {
        epochs: SearchConfig::default().proxy_epochs,
        schedule: LrSchedule::constant(0.1),
        ..TrainConfig::proxy()
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io_util::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.output_dir);
        self.dataset.paths.iter_mut().for_each(resolve);
    }

    /// Checks every field and that the dataset files exist, before any compute.
    pub fn validate(&self) -> Result<()> {
        NetworkTemplate::builtin(&self.template).map_err(|e| Error::Config(e.to_string()))?;
        self.search.validate()?;
        self.proxy_train.validate()?;
        self.full_train.validate()?;
        if let Some(s) = &self.supernet_train {
            s.validate()?;
        }
        if self.proxy_train.epochs != self.search.proxy_epochs {
            return Err(Error::Config(format!(
                "proxy_train.epochs = {} but search.proxy_epochs = {}",
                self.proxy_train.epochs, self.search.proxy_epochs
            )));
        }
        let d = &self.dataset;
        if d.train_per_class == 0 || d.val_per_class == 0 {
            return Err(Error::Config("train_per_class and val_per_class must be positive".into()));
        }
        match (d.format, d.paths.len()) {
            (DatasetFormat::Mnist, 2) | (DatasetFormat::Cifar10, 1..) => {}
            (DatasetFormat::Mnist, n) => {
                return Err(Error::Config(format!("mnist needs [images, labels] paths, got {n}")));
            }
            (DatasetFormat::Cifar10, _) => return Err(Error::Config("cifar10 needs at least one batch file".into())),
        }
        if let Some(missing) = d.paths.iter().find(|p| !p.is_file()) {
            return Err(Error::Config(format!("dataset file {} does not exist", missing.display())));
        }
        Ok(())
    }

    pub fn template(&self) -> Result<NetworkTemplate> {
        NetworkTemplate::builtin(&self.template)
    }

    /// Supernet training settings, falling back to the proxy settings.
    pub fn supernet_train(&self) -> TrainConfig {
        self.supernet_train.clone().unwrap_or_else(|| self.proxy_train.clone())
    }

    /// Loads the dataset and carves the stratified train/validation subsets.
    pub fn load_splits(&self) -> Result<(Dataset, Dataset)> {
        let d = &self.dataset;
        let full = match d.format {
            DatasetFormat::Mnist => load_mnist(&d.paths[0], &d.paths[1], Split::Train)?,
            DatasetFormat::Cifar10 => load_cifar10(&d.paths, Split::Train)?,
        };
        let template = self.template()?;
        let dims = full.image_dims();
        if dims != template.input || full.class_count != template.classes {
            return Err(Error::Config(format!(
                "template {} takes {:?} images and {} classes, dataset has {:?} and {}",
                template.name, template.input, template.classes, dims, full.class_count
            )));
        }
        stratified_split(&full, d.train_per_class, d.val_per_class, d.subset_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
template = "vgg_small_mini"
output_dir = "runs/toy"

[dataset]
format = "mnist"
paths = ["images.gz", "labels.gz"]
train_per_class = 500
val_per_class = 100

[search]
population_size = 8
generations = 5
proxy_epochs = 2

[proxy_train]
epochs = 2
batch_size = 16
schedule = { base_lr = 0.05 }
"#;

    #[test]
    fn parses_and_resolves_relative_paths() {
        let mut cfg = RunConfig::from_toml(TOY).unwrap();
        assert_eq!(cfg.search.population_size, 8);
        assert_eq!(cfg.search.lambda, 4.0);
        assert_eq!(cfg.proxy_train.momentum, 0.9);
        cfg.resolve_paths(Path::new("/cfg"));
        assert_eq!(cfg.output_dir, Path::new("/cfg/runs/toy"));
        assert_eq!(cfg.dataset.paths[1], Path::new("/cfg/labels.gz"));
    }

    #[test]
    fn typos_are_rejected() {
        let bad = TOY.replace("generations = 5", "generatons = 5");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = TOY.replace("base_lr", "base_rl");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn missing_dataset_is_a_config_error() {
        let mut cfg = RunConfig::from_toml(TOY).unwrap();
        cfg.resolve_paths(Path::new("/nonexistent"));
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("images.gz"), "{err}");
    }

    #[test]
    fn proxy_epochs_must_agree() {
        let bad = TOY.replace("epochs = 2\nbatch_size", "epochs = 3\nbatch_size");
        let mut cfg = RunConfig::from_toml(&bad).unwrap();
        cfg.dataset.paths.clear();
        assert!(cfg.validate().unwrap_err().to_string().contains("proxy_epochs"));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::from_toml(TOY).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
