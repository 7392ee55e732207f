use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::archspace::{inherit_weights, CodeFile, ExpansionCode, Network, NetworkTemplate, Ratio};
use crate::checkpoint::Checkpoint;
use crate::datapipe::Dataset;
use crate::evosearch::{evolve_with, parse_log, write_log_lines, Individual, ProxyEvaluator, SearchConfig};
use crate::io_util;
use crate::nn::TrainConfig;
use crate::rng::derive_seed;
use crate::train::{accuracy, train};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "search_log.jsonl";
pub const BEST_CODE_FILE: &str = "best_code.json";
pub const SUPERNET_FILE: &str = "supernet.ckpt";

const SUPERNET_STREAM: u64 = 2;

/// Identifies what a run directory was created for. A resumed search must match it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub template: String,
    pub train_digest: String,
    pub val_digest: String,
    pub search: SearchConfig,
    pub proxy_train: TrainConfig,
    pub supernet_init: bool,
    pub supernet_train: Option<TrainConfig>,
    pub augment: bool,
}

impl Manifest {
    fn new(cfg: &RunConfig, train: &Dataset, val: &Dataset) -> Self {
        Self {
            template: cfg.template.clone(),
            train_digest: train.digest(),
            val_digest: val.digest(),
            search: cfg.search.clone(),
            proxy_train: cfg.proxy_train.clone(),
            supernet_init: cfg.supernet_init,
            supernet_train: cfg.supernet_init.then(|| cfg.supernet_train()),
            augment: cfg.dataset.augment,
        }
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[derive(Clone, Debug)]
pub struct SearchSummary {
    pub best: Individual,
    pub run_dir: PathBuf,
    /// Generations evaluated by this call (fewer than configured when resuming).
    pub new_generations: usize,
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(io_util::read(path)?).map_err(|_| Error::Corrupt(format!("{} is not UTF-8", path.display())))
}

/// Runs (or resumes) the search described by `cfg` in `cfg.output_dir`.
///
/// The log is rewritten atomically after every generation. Re-running on the same
/// directory continues after the last completed generation; a directory created with a
/// different configuration or dataset is refused.
pub fn run_search(cfg: &RunConfig) -> Result<SearchSummary> {
    cfg.validate()?;
    let template = cfg.template()?;
    let (train_set, val_set) = cfg.load_splits()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = Manifest::new(cfg, &train_set, &val_set);
    let manifest_path = dir.join(MANIFEST_FILE);
    let log_path = dir.join(LOG_FILE);
    let previous = if manifest_path.exists() {
        let existing: Manifest = serde_json::from_str(&read_text(&manifest_path)?)
            .map_err(|e| Error::Corrupt(format!("{}: {e}", manifest_path.display())))?;
        if existing != manifest {
            return Err(Error::Config(format!(
                "{} was created for a different configuration or dataset",
                dir.display()
            )));
        }
        if log_path.exists() {
            parse_log(&read_text(&log_path)?)?
        } else {
            Vec::new()
        }
    } else {
        if log_path.exists() {
            return Err(Error::Corrupt(format!("{} exists without {MANIFEST_FILE}", log_path.display())));
        }
        io_util::write_atomic(&manifest_path, manifest.to_json().as_bytes())?;
        Vec::new()
    };
    let done = previous.len() / cfg.search.population_size;

    let supernet = if cfg.supernet_init {
        Some(supernet(cfg, &template, &train_set, &dir.join(SUPERNET_FILE))?)
    } else {
        None
    };
    let evaluator = ProxyEvaluator {
        template: &template,
        train: &train_set,
        val: &val_set,
        train_config: cfg.proxy_train.clone(),
        lambda: cfg.search.lambda,
        supernet: supernet.as_ref(),
        augment: cfg.dataset.augment,
    };
    let outcome = evolve_with(&evaluator, &cfg.search, previous, |log| {
        io_util::write_atomic(&log_path, write_log_lines(log).as_bytes())
    })?;
    CodeFile {
        template: template.name.clone(),
        ratios: outcome.best.code.clone(),
    }
    .write(&dir.join(BEST_CODE_FILE))?;
    info!("best code {} fitness {:.3}", outcome.best.code, outcome.best.fitness);
    Ok(SearchSummary {
        best: outcome.best,
        run_dir: dir.clone(),
        new_generations: cfg.search.generations.saturating_sub(done),
    })
}

/// Loads the run's supernet checkpoint, training and writing it first if absent.
fn supernet(cfg: &RunConfig, template: &NetworkTemplate, data: &Dataset, path: &Path) -> Result<Checkpoint> {
    let code = ExpansionCode::uniform(Ratio::FOUR, template.n_genes);
    if path.exists() {
        let ckpt = Checkpoint::read(path)?;
        if ckpt.meta.template != template.name || ckpt.meta.code != code {
            return Err(Error::Corrupt(format!("{} is not a {} 4x supernet", path.display(), template.name)));
        }
        return Ok(ckpt);
    }
    let seed = derive_seed(cfg.search.master_seed, &[SUPERNET_STREAM]);
    let train_cfg = TrainConfig {
        seed,
        ..cfg.supernet_train()
    };
    info!("training the 4x supernet for {} epochs", train_cfg.epochs);
    let mut net = Network::new(template, &code, seed, Default::default())?;
    train(&mut net, data, &train_cfg, cfg.dataset.augment)?;
    let ckpt = net.to_checkpoint();
    ckpt.write(path)?;
    Ok(ckpt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub train_acc: f64,
    pub val_acc: f64,
    pub diverged: bool,
    pub epoch_losses: Vec<f64>,
}

/// Trains `code` from scratch (seeded by `train_cfg.seed`) or from a supernet on the
/// configured train split and writes the checkpoint to `out`.
pub fn train_code(
    cfg: &RunConfig,
    code: &ExpansionCode,
    train_cfg: &TrainConfig,
    inherit: Option<&Checkpoint>,
    out: &Path,
) -> Result<TrainSummary> {
    let template = cfg.template()?;
    let (train_set, val_set) = cfg.load_splits()?;
    let mut net = match inherit {
        Some(s) => {
            let ckpt = inherit_weights(s, &template, code)?;
            let mut net = Network::new(&template, code, train_cfg.seed, ckpt.meta.precision)?;
            net.load_checkpoint(&ckpt)?;
            net
        }
        None => Network::new(&template, code, train_cfg.seed, Default::default())?,
    };
    let outcome = train(&mut net, &train_set, train_cfg, cfg.dataset.augment)?;
    net.to_checkpoint().write(out)?;
    Ok(TrainSummary {
        train_acc: accuracy(&mut net, &train_set)?,
        val_acc: accuracy(&mut net, &val_set)?,
        diverged: outcome.diverged,
        epoch_losses: outcome.epoch_losses,
    })
}

/// Top-1 accuracy of a checkpoint on the configured (train, validation) splits.
pub fn evaluate_checkpoint(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<(f64, f64)> {
    let template = cfg.template()?;
    if ckpt.meta.template != template.name {
        return Err(Error::Input(format!(
            "checkpoint is for {}, config for {}",
            ckpt.meta.template, template.name
        )));
    }
    let (train_set, val_set) = cfg.load_splits()?;
    let mut net = Network::new(&template, &ckpt.meta.code, ckpt.meta.seed, ckpt.meta.precision)?;
    net.load_checkpoint(ckpt)?;
    Ok((accuracy(&mut net, &train_set)?, accuracy(&mut net, &val_set)?))
}
