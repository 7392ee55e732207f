use serde::Serialize;

use super::template::{LayerKind, LayerSpec, NetworkTemplate, OutWidth, TemplateNode};
use super::ExpansionCode;
use crate::nn::conv_output_dim;
use crate::{Error, Result};

/// Which branch of the graph a layer sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Main,
    Body,
    Shortcut,
}

/// A template layer with concrete channel counts and spatial sizes for one code.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedLayer {
    pub name: String,
    pub kind: LayerKind,
    pub branch: Branch,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: usize,
    pub binarized: bool,
    pub gene: Option<usize>,
    pub base_in: usize,
    pub base_out: usize,
}

#[derive(Clone, Copy)]
struct Flow {
    channels: usize,
    hw: (usize, usize),
}

/// Concrete per-layer widths for `code`, in execution order. Residual blocks emit
/// their body layers, then their shortcut layers, then a `ResidualAdd` entry.
pub fn resolve_channels(template: &NetworkTemplate, code: &ExpansionCode) -> Result<Vec<ResolvedLayer>> {
    if code.len() != template.n_genes {
        return Err(Error::Input(format!(
            "template {} needs {} genes, code has {}",
            template.name,
            template.n_genes,
            code.len()
        )));
    }
    let mut out = Vec::new();
    let mut flow = Flow {
        channels: template.input[0],
        hw: (template.input[1], template.input[2]),
    };
    for node in &template.nodes {
        match node {
            TemplateNode::Layer(spec) => {
                flow = resolve_layer(template, code, spec, flow, flow.channels, Branch::Main, &mut out)?;
            }
            TemplateNode::Block(block) => {
                let block_in = flow;
                let mut body = block_in;
                for spec in &block.body {
                    body = resolve_layer(template, code, spec, body, block_in.channels, Branch::Body, &mut out)?;
                }
                let mut short = block_in;
                for spec in &block.shortcut {
                    short = resolve_layer(template, code, spec, short, block_in.channels, Branch::Shortcut, &mut out)?;
                }
                if body.channels != short.channels || body.hw != short.hw {
                    return Err(Error::Input(format!(
                        "block {}: body gives {}x{:?}, shortcut gives {}x{:?}",
                        block.name, body.channels, body.hw, short.channels, short.hw
                    )));
                }
                out.push(ResolvedLayer {
                    name: format!("{}.add", block.name),
                    kind: LayerKind::ResidualAdd,
                    branch: Branch::Main,
                    in_channels: body.channels,
                    out_channels: body.channels,
                    in_hw: body.hw,
                    out_hw: body.hw,
                    kernel: (1, 1),
                    stride: 1,
                    pad: 0,
                    binarized: false,
                    gene: None,
                    base_in: 0,
                    base_out: 0,
                });
                flow = body;
            }
        }
    }
    Ok(out)
}

fn resolve_layer(
    template: &NetworkTemplate,
    code: &ExpansionCode,
    spec: &LayerSpec,
    flow: Flow,
    block_in: usize,
    branch: Branch,
    out: &mut Vec<ResolvedLayer>,
) -> Result<Flow> {
    let window = |size: usize, k: usize| {
        conv_output_dim(size, k, spec.stride, spec.pad).ok_or_else(|| {
            Error::Input(format!("layer {}: window does not fit extent {size}", spec.name))
        })
    };
    let (out_channels, out_hw) = match spec.kind {
        LayerKind::Conv | LayerKind::Fc => {
            let c = match spec.width {
                Some(OutWidth::Gene(g)) => code.ratios()[g].apply(spec.base_out),
                Some(OutWidth::BlockInput) => block_in,
                Some(OutWidth::Classes) => template.classes,
                None => {
                    return Err(Error::Input(format!("layer {} has no width rule", spec.name)));
                }
            };
            if spec.kind == LayerKind::Conv {
                (c, (window(flow.hw.0, spec.kernel.0)?, window(flow.hw.1, spec.kernel.1)?))
            } else {
                if flow.hw != (1, 1) {
                    return Err(Error::Input(format!("fc layer {} needs a flat input", spec.name)));
                }
                (c, (1, 1))
            }
        }
        LayerKind::MaxPool => (
            flow.channels,
            (window(flow.hw.0, spec.kernel.0)?, window(flow.hw.1, spec.kernel.1)?),
        ),
        LayerKind::GlobalAvgPool => (flow.channels, (1, 1)),
        LayerKind::Flatten => (flow.channels * flow.hw.0 * flow.hw.1, (1, 1)),
        LayerKind::BatchNorm | LayerKind::Act | LayerKind::ResidualAdd => (flow.channels, flow.hw),
    };
    out.push(ResolvedLayer {
        name: spec.name.clone(),
        kind: spec.kind,
        branch,
        in_channels: flow.channels,
        out_channels,
        in_hw: flow.hw,
        out_hw,
        kernel: spec.kernel,
        stride: spec.stride,
        pad: spec.pad,
        binarized: spec.binarized,
        gene: spec.gene_index(),
        base_in: spec.base_in,
        base_out: spec.base_out,
    });
    Ok(Flow {
        channels: out_channels,
        hw: out_hw,
    })
}

#[cfg(test)]
mod tests {
    use super::super::template::{resnet18, vgg_small};
    use super::super::Ratio;
    use super::*;

    fn widths(layers: &[ResolvedLayer], kind: LayerKind) -> Vec<(String, usize, usize)> {
        layers
            .iter()
            .filter(|l| l.kind == kind)
            .map(|l| (l.name.clone(), l.in_channels, l.out_channels))
            .collect()
    }

    #[test]
    fn resnet18_uniform_one_is_standard() {
        let t = resnet18();
        let layers = resolve_channels(&t, &ExpansionCode::uniform(Ratio::ONE, t.n_genes)).unwrap();
        let convs = widths(&layers, LayerKind::Conv);
        assert_eq!(convs.len(), 20);
        assert_eq!(convs[0], ("conv1".into(), 3, 64));
        let out_of = |name: &str| convs.iter().find(|c| c.0 == name).unwrap().2;
        assert_eq!(out_of("layer1.1.conv2"), 64);
        assert_eq!(out_of("layer2.1.conv2"), 128);
        assert_eq!(out_of("layer3.1.conv2"), 256);
        assert_eq!(out_of("layer4.1.conv2"), 512);
        assert_eq!(out_of("layer4.0.downsample.conv"), 512);
        let fc = widths(&layers, LayerKind::Fc);
        assert_eq!(fc, vec![("fc".into(), 512, 1000)]);
        let last = layers.iter().find(|l| l.name == "layer4.1.conv2").unwrap();
        assert_eq!(last.out_hw, (7, 7));
    }

    #[test]
    fn vgg_small_uniform_four() {
        let t = vgg_small();
        let layers = resolve_channels(&t, &ExpansionCode::uniform(Ratio::FOUR, t.n_genes)).unwrap();
        let outs: Vec<usize> = widths(&layers, LayerKind::Conv).iter().map(|c| c.2).collect();
        assert_eq!(outs, vec![512, 512, 1024, 1024, 2048, 2048]);
        let fc = widths(&layers, LayerKind::Fc);
        assert_eq!(fc[0], ("fc1".into(), 2048 * 16, 4096));
        assert_eq!(fc[1], ("fc2".into(), 4096, 10));
    }

    #[test]
    fn code_length_mismatch() {
        let t = vgg_small();
        let r = resolve_channels(&t, &ExpansionCode::uniform(Ratio::ONE, 3));
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn quarter_ratio_on_base_64() {
        let t = resnet18();
        let mut code = ExpansionCode::uniform(Ratio::ONE, t.n_genes);
        code.ratios_mut()[0] = Ratio::QUARTER;
        let layers = resolve_channels(&t, &code).unwrap();
        assert_eq!(layers[0].out_channels, 16);
        // stage 1 blocks are tied to the stem width
        let l = layers.iter().find(|l| l.name == "layer1.0.conv2").unwrap();
        assert_eq!(l.out_channels, 16);
    }
}
