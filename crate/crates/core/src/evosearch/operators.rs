use rand::seq::index::sample;
use rand::Rng;

use super::Individual;
use crate::archspace::{ExpansionCode, Ratio};
use crate::{Error, Result};

/// Tournament selection: `tournament_size` distinct indices, highest fitness wins,
/// ties go to the lower index. When every individual has fitness 0 the winner is a
/// uniform random pick instead. Returns the index into `population`.
pub fn select_parent(population: &[Individual], tournament_size: usize, rng: &mut impl Rng) -> usize {
    assert!(!population.is_empty(), "selection from an empty population");
    if population.iter().all(|i| i.fitness == 0.0) {
        return rng.random_range(0..population.len());
    }
    let k = tournament_size.clamp(1, population.len());
    let mut best: Option<usize> = None;
    for i in sample(rng, population.len(), k) {
        best = Some(match best {
            Some(b) if population[b].fitness > population[i].fitness => b,
            Some(b) if population[b].fitness == population[i].fitness && b < i => b,
            _ => i,
        });
    }
    best.expect("tournament is non-empty")
}

/// Gene `i` from `a` where `take_a[i]`, else from `b`.
pub fn apply_mask(a: &ExpansionCode, b: &ExpansionCode, take_a: &[bool]) -> Result<ExpansionCode> {
    if a.len() != b.len() || a.len() != take_a.len() {
        return Err(Error::Input(format!(
            "crossover of codes with {} and {} genes (mask {})",
            a.len(),
            b.len(),
            take_a.len()
        )));
    }
    Ok(ExpansionCode::new(
        a.ratios()
            .iter()
            .zip(b.ratios())
            .zip(take_a)
            .map(|((&x, &y), &t)| if t { x } else { y })
            .collect(),
    ))
}

/// Uniform crossover applied with probability `rate`; otherwise a copy of `a`.
pub fn crossover(a: &ExpansionCode, b: &ExpansionCode, rate: f64, rng: &mut impl Rng) -> Result<ExpansionCode> {
    if a.len() != b.len() {
        return apply_mask(a, b, &[]);
    }
    if !rng.random_bool(rate) {
        return Ok(a.clone());
    }
    let mask: Vec<bool> = (0..a.len()).map(|_| rng.random_bool(0.5)).collect();
    apply_mask(a, b, &mask)
}

/// Each gene, with probability `rate`, is replaced by one of the five other ratios.
pub fn mutate(code: &ExpansionCode, rate: f64, rng: &mut impl Rng) -> ExpansionCode {
    let mut out = code.clone();
    for r in out.ratios_mut() {
        if rng.random_bool(rate) {
            let current = Ratio::ALL.iter().position(|x| x == r).expect("ratio is a candidate");
            let mut pick = rng.random_range(0..Ratio::ALL.len() - 1);
            if pick >= current {
                pick += 1;
            }
            *r = Ratio::ALL[pick];
        }
    }
    out
}
