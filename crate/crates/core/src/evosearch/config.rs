use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub population_size: usize,
    pub generations: usize,
    pub lambda: f64,
    pub proxy_epochs: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means `1/n` for an `n`-gene code.
    pub mutation_rate: Option<f64>,
    pub elitism_count: usize,
    pub master_seed: u64,
    /// Put the uniform-1× and uniform-4× codes into generation 0.
    pub inject_anchors: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population_size: 32,
            generations: 50,
            lambda: 4.0,
            proxy_epochs: 10,
            tournament_size: 2,
            crossover_rate: 0.9,
            mutation_rate: None,
            elitism_count: 2,
            master_seed: 0,
            inject_anchors: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.population_size < 2 {
            return bad(format!("population_size must be >= 2, got {}", self.population_size));
        }
        if self.generations == 0 {
            return bad("generations must be >= 1".into());
        }
        if self.elitism_count >= self.population_size {
            return bad(format!(
                "elitism_count {} must be below population_size {}",
                self.elitism_count, self.population_size
            ));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return bad(format!(
                "tournament_size must be in [1, {}], got {}",
                self.population_size, self.tournament_size
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad(format!("crossover_rate must be in [0, 1], got {}", self.crossover_rate));
        }
        if let Some(r) = self.mutation_rate {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("mutation_rate must be in [0, 1], got {r}"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        Ok(())
    }

    pub fn mutation_rate_for(&self, genes: usize) -> f64 {
        self.mutation_rate.unwrap_or(1.0 / genes.max(1) as f64)
    }
}
