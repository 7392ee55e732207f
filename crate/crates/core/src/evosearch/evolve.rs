use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use super::log::SearchLogRecord;
use super::operators::{crossover, mutate, select_parent};
use super::{Evaluator, Individual, SearchConfig};
use crate::archspace::{ExpansionCode, Ratio};
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

const BREED_STREAM: u64 = 0;
const EVAL_STREAM: u64 = 1;
/// Tournaments run for the second parent while it has the first parent's code.
const MATE_ATTEMPTS: usize = 8;

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    /// Highest fitness ever evaluated; the earliest one on ties.
    pub best: Individual,
    /// `population_size` records per generation, in (generation, index) order.
    pub log: Vec<SearchLogRecord>,
}

/// Runs a complete search from scratch.
pub fn evolve(evaluator: &dyn Evaluator, config: &SearchConfig) -> Result<SearchOutcome> {
    evolve_with(evaluator, config, Vec::new(), |_| Ok(()))
}

/// Runs or continues a search. `previous` holds the records of already completed
/// generations (as produced by an earlier call); evaluation restarts at the first
/// generation not present. `on_generation` receives the full log after every newly
/// completed generation.
pub fn evolve_with(
    evaluator: &dyn Evaluator,
    config: &SearchConfig,
    previous: Vec<SearchLogRecord>,
    mut on_generation: impl FnMut(&[SearchLogRecord]) -> Result<()>,
) -> Result<SearchOutcome> {
    config.validate()?;
    let n = evaluator.genes();
    let k = config.population_size;
    let mut population = restore(evaluator, &previous, config)?;
    let mut log = previous;
    let mut generation = log.len() / k;
    if generation > 0 {
        info!("resuming at generation {generation}");
    }

    while generation < config.generations {
        let started = Instant::now();
        let (carried, codes) = match &population {
            None => (Vec::new(), initial_codes(config, n, generation)),
            Some(prev) => breed(prev, config, n, generation),
        };
        let first = carried.len();
        let evaluated: Vec<(Individual, f64)> = codes
            .par_iter()
            .enumerate()
            .map(|(j, code)| {
                let seed = derive_seed(config.master_seed, &[EVAL_STREAM, generation as u64, (first + j) as u64]);
                let t = Instant::now();
                evaluator.evaluate(code, seed).map(|ind| (ind, t.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?;

        let mut next = Vec::with_capacity(k);
        for ind in carried {
            log.push(SearchLogRecord::new(generation, next.len(), &ind, true, 0.0));
            next.push(ind);
        }
        for (ind, secs) in evaluated {
            if ind.diverged {
                warn!("generation {generation} candidate {} {} diverged", next.len(), ind.code);
            }
            log.push(SearchLogRecord::new(generation, next.len(), &ind, false, secs));
            next.push(ind);
        }
        let best = best_of(&log);
        info!(
            "generation {generation}: best fitness {:.3} ({}), {:.1}s",
            best.fitness,
            best.code,
            started.elapsed().as_secs_f64()
        );
        population = Some(next);
        generation += 1;
        on_generation(&log)?;
    }

    Ok(SearchOutcome {
        best: record_to_individual(evaluator, best_of(&log))?,
        log,
    })
}

fn initial_codes(config: &SearchConfig, n: usize, generation: usize) -> Vec<ExpansionCode> {
    let mut rng = seeded(derive_seed(config.master_seed, &[BREED_STREAM, generation as u64]));
    let mut codes = Vec::with_capacity(config.population_size);
    if config.inject_anchors {
        codes.push(ExpansionCode::uniform(Ratio::ONE, n));
        codes.push(ExpansionCode::uniform(Ratio::FOUR, n));
    }
    while codes.len() < config.population_size {
        codes.push(ExpansionCode::random(n, &mut rng));
    }
    codes
}

/// Elites (fittest first, lower index on ties) and the codes of the new children.
fn breed(
    prev: &[Individual],
    config: &SearchConfig,
    n: usize,
    generation: usize,
) -> (Vec<Individual>, Vec<ExpansionCode>) {
    let mut order: Vec<usize> = (0..prev.len()).collect();
    order.sort_by(|&a, &b| prev[b].fitness.total_cmp(&prev[a].fitness).then(a.cmp(&b)));
    let elites = order[..config.elitism_count].iter().map(|&i| prev[i].clone()).collect();

    if prev.iter().all(|i| i.fitness == 0.0) {
        warn!("generation {}: every fitness is 0, parents chosen uniformly at random", generation - 1);
    }
    let mut rng = seeded(derive_seed(config.master_seed, &[BREED_STREAM, generation as u64]));
    let rate = config.mutation_rate_for(n);
    let children = (config.elitism_count..config.population_size)
        .map(|_| {
            let a = select_parent(prev, config.tournament_size, &mut rng);
            let mut b = select_parent(prev, config.tournament_size, &mut rng);
            for _ in 1..MATE_ATTEMPTS {
                if prev[b].code != prev[a].code {
                    break;
                }
                b = select_parent(prev, config.tournament_size, &mut rng);
            }
            let child = crossover(&prev[a].code, &prev[b].code, config.crossover_rate, &mut rng)
                .expect("population codes share one length");
            mutate(&child, rate, &mut rng)
        })
        .collect();
    (elites, children)
}

fn best_of(log: &[SearchLogRecord]) -> &SearchLogRecord {
    log.iter()
        .reduce(|best, r| if r.fitness > best.fitness { r } else { best })
        .expect("log holds at least one generation")
}

fn record_to_individual(evaluator: &dyn Evaluator, r: &SearchLogRecord) -> Result<Individual> {
    Ok(Individual {
        code: r.code.clone(),
        acc: r.acc,
        cost: evaluator.cost(&r.code)?,
        fitness: r.fitness,
        eval_seed: r.eval_seed,
        diverged: r.diverged,
    })
}

/// Last population of a previously written log, after checking that the log consists
/// of whole generations in order.
fn restore(evaluator: &dyn Evaluator, log: &[SearchLogRecord], config: &SearchConfig) -> Result<Option<Vec<Individual>>> {
    if log.is_empty() {
        return Ok(None);
    }
    let (k, n) = (config.population_size, evaluator.genes());
    if log.len() % k != 0 {
        return Err(Error::Corrupt(format!(
            "search log holds {} records, not a whole number of generations of {k}",
            log.len()
        )));
    }
    if log.len() / k > config.generations {
        return Err(Error::Corrupt(format!(
            "search log has {} generations, config allows {}",
            log.len() / k,
            config.generations
        )));
    }
    for (i, r) in log.iter().enumerate() {
        if r.generation != i / k || r.index != i % k || r.code.len() != n {
            return Err(Error::Corrupt(format!(
                "search log record {} is generation {} index {} with {} genes, expected generation {} index {} with {n}",
                i + 1,
                r.generation,
                r.index,
                r.code.len(),
                i / k,
                i % k
            )));
        }
    }
    log[log.len() - k..]
        .iter()
        .map(|r| record_to_individual(evaluator, r))
        .collect::<Result<_>>()
        .map(Some)
}
