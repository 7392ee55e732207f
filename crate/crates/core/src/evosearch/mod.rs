//! Evolutionary search over expansion codes.
//!
//! A generation is `population_size` individuals. Generation 0 is random (optionally
//! with the uniform-1× and uniform-4× codes at indices 0 and 1); every later
//! generation keeps the `elitism_count` fittest individuals and fills the rest with
//! children bred by tournament selection, uniform crossover and mutation. Candidate
//! `i` of generation `g` is trained with seed `derive_seed(master_seed, [1, g, i])`
//! and generation `g` is bred from `derive_seed(master_seed, [0, g])`, so a search
//! can be resumed at any generation boundary and gives the same result.

mod config;
mod evaluate;
mod evolve;
mod log;
mod operators;

pub use config::SearchConfig;
pub use evaluate::{Evaluator, ProxyEvaluator};
pub use evolve::{evolve, evolve_with, SearchOutcome};
pub use log::{parse_log, write_log_lines, SearchLogRecord};
pub use operators::{apply_mask, crossover, mutate, select_parent};

use serde::{Deserialize, Serialize};

use crate::archspace::{CostReport, ExpansionCode};

/// `max(acc − λ·flops_norm, 0)` with `acc` in percent.
pub fn fitness(acc_percent: f64, flops_norm: f64, lambda: f64) -> f64 {
    (acc_percent - lambda * flops_norm).max(0.0)
}

/// An evaluated code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub code: ExpansionCode,
    /// Top-1 validation accuracy in percent.
    pub acc: f64,
    pub cost: CostReport,
    pub fitness: f64,
    pub eval_seed: u64,
    /// Training produced a non-finite loss; `acc` is then 0.
    pub diverged: bool,
}
