//! FLOPs and storage model.
//!
//! One multiply-accumulate counts as one FLOP. A conv layer costs
//! `Cin·Cout·kh·kw·Hout·Wout`, an fc layer `D·M`; pooling, batch-norm, activations and
//! residual adds are free. Binarized layers cost 1/64 of their full-precision count.

use serde::{Deserialize, Serialize};

use super::resolve::{resolve_channels, ResolvedLayer};
use super::template::{LayerKind, NetworkTemplate};
use super::{ExpansionCode, Ratio};
use crate::Result;

pub const BINARY_FLOP_DIVISOR: f64 = 64.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    /// Template quantization flags apply.
    #[default]
    Binary,
    /// Every layer full precision.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub flops: f64,
    /// `flops` over the uniform-1× binary network's flops.
    pub flops_norm: f64,
    /// Full-precision uniform-1× flops over `flops`.
    pub speedup: f64,
    pub weight_bits: u64,
}

/// Multiply-accumulates of one layer at full precision.
pub fn layer_macs(layer: &ResolvedLayer) -> u64 {
    match layer.kind {
        LayerKind::Conv => {
            (layer.in_channels * layer.out_channels * layer.kernel.0 * layer.kernel.1 * layer.out_hw.0 * layer.out_hw.1) as u64
        }
        LayerKind::Fc => (layer.in_channels * layer.out_channels) as u64,
        _ => 0,
    }
}

fn weight_count(layer: &ResolvedLayer) -> (u64, u64) {
    match layer.kind {
        LayerKind::Conv => ((layer.in_channels * layer.out_channels * layer.kernel.0 * layer.kernel.1) as u64, 0),
        LayerKind::Fc => ((layer.in_channels * layer.out_channels) as u64, layer.out_channels as u64),
        _ => (0, 0),
    }
}

fn is_binary(layer: &ResolvedLayer, precision: Precision) -> bool {
    precision == Precision::Binary && layer.binarized
}

pub fn flops_of(layers: &[ResolvedLayer], precision: Precision) -> f64 {
    layers
        .iter()
        .map(|l| {
            let macs = layer_macs(l) as f64;
            if is_binary(l, precision) {
                macs / BINARY_FLOP_DIVISOR
            } else {
                macs
            }
        })
        .sum()
}

/// 1 bit per binary weight plus a 32-bit scale per binary layer; 32 bits for every
/// full-precision weight and every bias.
pub fn weight_bits_of(layers: &[ResolvedLayer], precision: Precision) -> u64 {
    layers
        .iter()
        .filter(|l| matches!(l.kind, LayerKind::Conv | LayerKind::Fc))
        .map(|l| {
            let (weights, biases) = weight_count(l);
            let w = if is_binary(l, precision) { weights + 32 } else { 32 * weights };
            w + 32 * biases
        })
        .sum()
}

pub fn network_flops(template: &NetworkTemplate, code: &ExpansionCode, precision: Precision) -> Result<f64> {
    Ok(flops_of(&resolve_channels(template, code)?, precision))
}

/// Cost of the binary network for `code`.
pub fn count_cost(template: &NetworkTemplate, code: &ExpansionCode) -> Result<CostReport> {
    count_cost_with(template, code, Precision::Binary)
}

pub fn count_cost_with(template: &NetworkTemplate, code: &ExpansionCode, precision: Precision) -> Result<CostReport> {
    let layers = resolve_channels(template, code)?;
    let flops = flops_of(&layers, precision);
    let unit = ExpansionCode::uniform(Ratio::ONE, template.n_genes);
    let base_binary = network_flops(template, &unit, Precision::Binary)?;
    let base_full = network_flops(template, &unit, Precision::Full)?;
    Ok(CostReport {
        flops,
        flops_norm: flops / base_binary,
        speedup: base_full / flops,
        weight_bits: weight_bits_of(&layers, precision),
    })
}

#[cfg(test)]
mod tests {
    use super::super::template::{resnet18, vgg_small};
    use super::*;

    fn single_conv() -> ResolvedLayer {
        ResolvedLayer {
            name: "c".into(),
            kind: LayerKind::Conv,
            branch: super::super::Branch::Main,
            in_channels: 16,
            out_channels: 16,
            in_hw: (8, 8),
            out_hw: (8, 8),
            kernel: (3, 3),
            stride: 1,
            pad: 1,
            binarized: true,
            gene: Some(0),
            base_in: 16,
            base_out: 16,
        }
    }

    #[test]
    fn single_binary_conv_hand_formula() {
        let l = single_conv();
        assert_eq!(layer_macs(&l), 147_456);
        assert_eq!(flops_of(&[l.clone()], Precision::Binary), 2304.0);
        assert_eq!(flops_of(&[l.clone()], Precision::Full), 147_456.0);
        assert_eq!(weight_bits_of(&[l], Precision::Binary), 16 * 16 * 9 + 32);
    }

    #[test]
    fn uniform_one_is_the_normalizer() {
        for t in [vgg_small(), resnet18()] {
            let unit = ExpansionCode::uniform(Ratio::ONE, t.n_genes);
            let r = count_cost(&t, &unit).unwrap();
            assert_eq!(r.flops_norm, 1.0);
            let full = count_cost_with(&t, &unit, Precision::Full).unwrap();
            assert_eq!(full.speedup, 1.0);
            assert!((r.speedup * r.flops - full.flops).abs() < 1e-6 * full.flops);
        }
    }

    #[test]
    fn smaller_code_is_cheaper() {
        let t = vgg_small();
        let small = count_cost(&t, &ExpansionCode::uniform(Ratio::QUARTER, 7)).unwrap();
        let big = count_cost(&t, &ExpansionCode::uniform(Ratio::FOUR, 7)).unwrap();
        assert!(small.flops_norm < big.flops_norm);
        assert!(small.weight_bits < big.weight_bits);
    }
}
