//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use bnas::binquant::{binarize_activations, binarize_weights};
use bnas::archspace::{CostReport, ExpansionCode};
use bnas::evosearch::{Evaluator, Individual};
use bnas::nn::Tensor;
use bnas::Result;
use rand::Rng;

/// Fitness −Σ|aᵢ − 2|, maximal (zero) at the all-2 code. No training involved.
pub struct DistanceToTwo {
    pub genes: usize,
}

impl Evaluator for DistanceToTwo {
    fn genes(&self) -> usize {
        self.genes
    }

    fn cost(&self, code: &ExpansionCode) -> Result<CostReport> {
        let mean = code.as_f64s().iter().sum::<f64>() / code.len() as f64;
        Ok(CostReport {
            flops: mean,
            flops_norm: mean,
            speedup: 1.0 / mean,
            weight_bits: 0,
        })
    }

    fn evaluate(&self, code: &ExpansionCode, eval_seed: u64) -> Result<Individual> {
        let distance: f64 = code.as_f64s().iter().map(|a| (a - 2.0).abs()).sum();
        Ok(Individual {
            code: code.clone(),
            acc: 100.0 - distance,
            cost: self.cost(code)?,
            fitness: -distance,
            eval_seed,
            diverged: false,
        })
    }
}

pub const H: f32 = 1e-3;

pub fn random(dims: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.random_range(-1.0f32..1.0))
}

/// `L = Σ r ⊙ f(x)` summed in f64, so the probe weights every output differently.
fn probe(out: &Tensor, r: &Tensor) -> f64 {
    out.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Numeric gradient of `L(x) = probe(f(x), r)` by central differences on every entry.
pub fn numeric(x: &Tensor, r: &Tensor, f: &mut dyn FnMut(&Tensor) -> Tensor) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + H;
        let up = probe(&f(&xp), r);
        xp.data_mut()[i] = orig - H;
        let down = probe(&f(&xp), r);
        xp.data_mut()[i] = orig;
        g.push((up - down) / (2.0 * H as f64));
    }
    g
}

/// ‖a − n‖ / max(‖a‖, ‖n‖).
pub fn rel_err(analytic: &Tensor, numeric: &[f64]) -> f64 {
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for (&a, &n) in analytic.data().iter().zip(numeric) {
        diff += (a as f64 - n).powi(2);
        na += (a as f64).powi(2);
        nn += n * n;
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-12)
}

/// Random multiples of 1/8 in [-2, 2]: products and short sums stay exact in f32.
pub fn dyadic(dims: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.random_range(-16i32..=16) as f32 / 8.0)
}


pub fn max_abs_diff(a: &Tensor, b: &[f64]) -> f64 {
    a.data().iter().zip(b).map(|(&a, &b)| (a as f64 - b).abs()).fold(0.0, f64::max)
}

/// STE gradients of a one-layer binary fc `y = x_b · w_b + b`, by direct loops in f64:
/// the weight quantizer's derivative is taken as 1, the activation's as 1[0 ≤ x ≤ 1].
pub fn surrogate_fc(x: &Tensor, w: &Tensor, g: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d, m) = (x.dims()[0], x.dims()[1], w.dims()[1]);
    let xb = binarize_activations(x).values;
    let wb = binarize_weights(w).unwrap().reconstruct();
    let mut gw = vec![0.0f64; d * m];
    let mut gx = vec![0.0f64; n * d];
    for i in 0..n {
        for j in 0..d {
            for k in 0..m {
                let go = g.data()[i * m + k] as f64;
                gw[j * m + k] += xb.data()[i * d + j] as f64 * go;
                gx[i * d + j] += wb.data()[j * m + k] as f64 * go;
            }
            if !(0.0..=1.0).contains(&x.data()[i * d + j]) {
                gx[i * d + j] = 0.0;
            }
        }
    }
    (gx, gw)
}
