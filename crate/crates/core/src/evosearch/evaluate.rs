use super::{fitness, Individual};
use crate::archspace::{count_cost, CostReport, inherit_weights, instantiate, ExpansionCode, Network, NetworkTemplate};
use crate::checkpoint::Checkpoint;
use crate::datapipe::Dataset;
use crate::nn::TrainConfig;
use crate::train::{accuracy, train};
use crate::Result;

/// Defines the search space and scores codes in it. `evaluate` must be deterministic
/// in `(code, eval_seed)`.
pub trait Evaluator: Sync {
    /// Length of every code.
    fn genes(&self) -> usize;
    fn cost(&self, code: &ExpansionCode) -> Result<CostReport>;
    fn evaluate(&self, code: &ExpansionCode, eval_seed: u64) -> Result<Individual>;
}

/// Short training on a proxy train split, accuracy on a disjoint validation split.
pub struct ProxyEvaluator<'a> {
    pub template: &'a NetworkTemplate,
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    /// `epochs` is the proxy budget; `seed` is replaced per candidate.
    pub train_config: TrainConfig,
    pub lambda: f64,
    /// Trained uniform-4× network whose leading channels initialize every candidate.
    pub supernet: Option<&'a Checkpoint>,
    pub augment: bool,
}

impl Evaluator for ProxyEvaluator<'_> {
    fn genes(&self) -> usize {
        self.template.n_genes
    }

    fn cost(&self, code: &ExpansionCode) -> Result<CostReport> {
        count_cost(self.template, code)
    }

    fn evaluate(&self, code: &ExpansionCode, eval_seed: u64) -> Result<Individual> {
        let mut net = match self.supernet {
            Some(s) => {
                let ckpt = inherit_weights(s, self.template, code)?;
                let mut net = Network::new(self.template, code, eval_seed, ckpt.meta.precision)?;
                net.load_checkpoint(&ckpt)?;
                net
            }
            None => instantiate(self.template, code, eval_seed)?,
        };
        let cfg = TrainConfig {
            seed: eval_seed,
            ..self.train_config.clone()
        };
        let outcome = train(&mut net, self.train, &cfg, self.augment)?;
        let acc = if outcome.diverged { 0.0 } else { accuracy(&mut net, self.val)? };
        let cost = self.cost(code)?;
        Ok(Individual {
            code: code.clone(),
            acc,
            cost,
            fitness: fitness(acc, cost.flops_norm, self.lambda),
            eval_seed,
            diverged: outcome.diverged,
        })
    }
}
