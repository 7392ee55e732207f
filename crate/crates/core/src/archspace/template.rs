//! Fixed skeletons of the model families. Only channel widths vary between
//! candidates; kernel sizes, strides, layer order and quantization flags are fixed here.

use serde::Serialize;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Fc,
    MaxPool,
    GlobalAvgPool,
    BatchNorm,
    /// Activation: the 1-bit quantizer in binary networks, ReLU in full precision.
    Act,
    Flatten,
    ResidualAdd,
}

/// Where the output width of a conv/fc layer comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutWidth {
    /// `code[i] × base_out`.
    Gene(usize),
    /// Same as the enclosing residual block's input (identity shortcut).
    BlockInput,
    /// The dataset's class count.
    Classes,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: usize,
    /// Channel counts of the 1× template.
    pub base_in: usize,
    pub base_out: usize,
    pub binarized: bool,
    /// Set for conv and fc layers only.
    pub width: Option<OutWidth>,
}

impl LayerSpec {
    pub fn gene_index(&self) -> Option<usize> {
        match self.width {
            Some(OutWidth::Gene(g)) => Some(g),
            _ => None,
        }
    }

    fn plain(name: String, kind: LayerKind, channels: usize) -> Self {
        Self {
            name,
            kind,
            kernel: (1, 1),
            stride: 1,
            pad: 0,
            base_in: channels,
            base_out: channels,
            binarized: false,
            width: None,
        }
    }
}

/// A residual block: `out = body(x) + shortcut(x)`, identity when `shortcut` is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub name: String,
    pub body: Vec<LayerSpec>,
    pub shortcut: Vec<LayerSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TemplateNode {
    Layer(LayerSpec),
    Block(ResidualBlock),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTemplate {
    pub name: String,
    /// (channels, height, width) of one input image.
    pub input: [usize; 3],
    pub classes: usize,
    pub nodes: Vec<TemplateNode>,
    pub n_genes: usize,
}

pub const TEMPLATE_NAMES: [&str; 3] = ["vgg_small", "vgg_small_mini", "resnet18"];

impl NetworkTemplate {
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "vgg_small" => Ok(vgg_small()),
            "vgg_small_mini" => Ok(vgg_small_mini()),
            "resnet18" => Ok(resnet18()),
            other => Err(Error::Input(format!(
                "unknown template {other:?}; expected one of {TEMPLATE_NAMES:?}"
            ))),
        }
    }

    /// All layers in execution order; for blocks, body then shortcut.
    pub fn layers(&self) -> Vec<&LayerSpec> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node {
                TemplateNode::Layer(l) => out.push(l),
                TemplateNode::Block(b) => out.extend(b.body.iter().chain(&b.shortcut)),
            }
        }
        out
    }

    /// Checks the structural rules every template must satisfy.
    pub fn validate(&self) -> Result<()> {
        let layers = self.layers();
        let weighted: Vec<&&LayerSpec> = layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Conv | LayerKind::Fc))
            .collect();
        let (first, last) = match (weighted.first(), weighted.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::Input(format!("template {} has no weighted layers", self.name))),
        };
        for l in &weighted {
            let edge = std::ptr::eq(**l, **first) || std::ptr::eq(**l, **last);
            if l.binarized == edge {
                return Err(Error::Input(format!(
                    "{}: layer {} must be {}",
                    self.name,
                    l.name,
                    if edge { "full precision" } else { "binarized" }
                )));
            }
            if l.gene_index().is_some() && l.base_out % 4 != 0 {
                return Err(Error::Input(format!(
                    "{}: layer {} base width {} not divisible by 4",
                    self.name, l.name, l.base_out
                )));
            }
        }
        let mut seen = vec![false; self.n_genes];
        for g in weighted.iter().filter_map(|l| l.gene_index()) {
            *seen.get_mut(g).ok_or_else(|| {
                Error::Input(format!("{}: gene {g} out of range", self.name))
            })? = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(Error::Input(format!("{}: gene {g} is unused", self.name)));
        }
        Ok(())
    }
}

/// Accumulates layers while tracking the base channel count and the next gene id.
struct Builder {
    channels: usize,
    next_gene: usize,
}

impl Builder {
    fn gene(&mut self) -> OutWidth {
        self.next_gene += 1;
        OutWidth::Gene(self.next_gene - 1)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: &str, out: usize, k: usize, stride: usize, pad: usize, binarized: bool, width: OutWidth) -> LayerSpec {
        let spec = LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Conv,
            kernel: (k, k),
            stride,
            pad,
            base_in: self.channels,
            base_out: out,
            binarized,
            width: Some(width),
        };
        self.channels = out;
        spec
    }

    fn fc(&mut self, name: &str, out: usize, binarized: bool, width: OutWidth) -> LayerSpec {
        let spec = LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Fc,
            kernel: (1, 1),
            stride: 1,
            pad: 0,
            base_in: self.channels,
            base_out: out,
            binarized,
            width: Some(width),
        };
        self.channels = out;
        spec
    }

    fn bn(&self, name: &str) -> LayerSpec {
        LayerSpec::plain(name.to_string(), LayerKind::BatchNorm, self.channels)
    }

    fn act(&self, name: &str) -> LayerSpec {
        LayerSpec::plain(name.to_string(), LayerKind::Act, self.channels)
    }

    fn max_pool(&self, name: &str, k: usize, stride: usize, pad: usize) -> LayerSpec {
        LayerSpec {
            kernel: (k, k),
            stride,
            pad,
            ..LayerSpec::plain(name.to_string(), LayerKind::MaxPool, self.channels)
        }
    }

    fn flatten(&mut self, spatial: usize) -> LayerSpec {
        let mut spec = LayerSpec::plain("flatten".into(), LayerKind::Flatten, self.channels);
        self.channels *= spatial;
        spec.base_out = self.channels;
        spec
    }
}

/// VGG-style stack: stages of two 3×3 convs each followed by 2×2 max-pooling, then a
/// binary hidden fc layer and a full-precision classifier.
fn vgg(name: &str, input: [usize; 3], classes: usize, stage_widths: &[usize], hidden: usize) -> NetworkTemplate {
    let mut b = Builder {
        channels: input[0],
        next_gene: 0,
    };
    let mut nodes = Vec::new();
    let mut idx = 1;
    let mut spatial = (input[1], input[2]);
    for &width in stage_widths {
        for second in [false, true] {
            let binarized = idx != 1;
            let w = b.gene();
            nodes.push(b.conv(&format!("conv{idx}"), width, 3, 1, 1, binarized, w));
            nodes.push(b.bn(&format!("bn{idx}")));
            if second {
                nodes.push(b.max_pool(&format!("pool{}", idx / 2), 2, 2, 0));
                spatial = (spatial.0 / 2, spatial.1 / 2);
            }
            nodes.push(b.act(&format!("act{idx}")));
            idx += 1;
        }
    }
    nodes.push(b.flatten(spatial.0 * spatial.1));
    let w = b.gene();
    nodes.push(b.fc("fc1", hidden, true, w));
    nodes.push(b.bn("bn_fc1"));
    nodes.push(b.act("act_fc1"));
    nodes.push(b.fc("fc2", classes, false, OutWidth::Classes));
    NetworkTemplate {
        name: name.to_string(),
        input,
        classes,
        nodes: nodes.into_iter().map(TemplateNode::Layer).collect(),
        n_genes: b.next_gene,
    }
}

/// CIFAR-10 VGG-small: 3→128→128 (pool) →256→256 (pool) →512→512 (pool),
/// fc 8192→1024, fc 1024→10. Seven genes (six convs, hidden fc).
pub fn vgg_small() -> NetworkTemplate {
    vgg("vgg_small", [3, 32, 32], 10, &[128, 256, 512], 1024)
}

/// MNIST-sized VGG variant: 1→8→8 (pool) →16→16 (pool), fc 784→64, fc 64→10.
/// Five genes.
pub fn vgg_small_mini() -> NetworkTemplate {
    vgg("vgg_small_mini", [1, 28, 28], 10, &[8, 16], 64)
}

/// ImageNet ResNet-18 with binarized block and projection convs.
///
/// Genes: 0 stem width (also the width of stage 1, whose blocks have identity
/// shortcuts); one per block for the inner width; one each for the output width of
/// stages 2–4, shared by the block's second conv and its projection shortcut.
/// Twelve genes in total.
pub fn resnet18() -> NetworkTemplate {
    let mut b = Builder {
        channels: 3,
        next_gene: 0,
    };
    let mut nodes = Vec::new();
    let stem = b.gene();
    nodes.push(TemplateNode::Layer(b.conv("conv1", 64, 7, 2, 3, false, stem)));
    nodes.push(TemplateNode::Layer(b.bn("bn1")));
    nodes.push(TemplateNode::Layer(b.max_pool("maxpool", 3, 2, 1)));

    for (stage, width) in [64usize, 128, 256, 512].into_iter().enumerate() {
        let stage_no = stage + 1;
        let projected = stage > 0;
        let stage_width = if projected { Some(b.gene()) } else { None };
        for block in 0..2 {
            let prefix = format!("layer{stage_no}.{block}");
            let first = block == 0;
            let stride = if projected && first { 2 } else { 1 };
            let block_in = b.channels;
            let mid = b.gene();
            let out_width = match stage_width {
                Some(w) if first => w,
                _ => OutWidth::BlockInput,
            };
            let body = vec![
                b.act(&format!("{prefix}.act1")),
                b.conv(&format!("{prefix}.conv1"), width, 3, stride, 1, true, mid),
                b.bn(&format!("{prefix}.bn1")),
                b.act(&format!("{prefix}.act2")),
                b.conv(&format!("{prefix}.conv2"), width, 3, 1, 1, true, out_width),
                b.bn(&format!("{prefix}.bn2")),
            ];
            let shortcut = if projected && first {
                let mut sb = Builder {
                    channels: block_in,
                    next_gene: 0,
                };
                vec![
                    sb.act(&format!("{prefix}.downsample.act")),
                    sb.conv(&format!("{prefix}.downsample.conv"), width, 1, 2, 0, true, out_width),
                    sb.bn(&format!("{prefix}.downsample.bn")),
                ]
            } else {
                Vec::new()
            };
            nodes.push(TemplateNode::Block(ResidualBlock {
                name: prefix,
                body,
                shortcut,
            }));
        }
    }
    nodes.push(TemplateNode::Layer(b.act("act_final")));
    nodes.push(TemplateNode::Layer(LayerSpec::plain(
        "avgpool".into(),
        LayerKind::GlobalAvgPool,
        b.channels,
    )));
    nodes.push(TemplateNode::Layer(b.flatten(1)));
    nodes.push(TemplateNode::Layer(b.fc("fc", 1000, false, OutWidth::Classes)));
    NetworkTemplate {
        name: "resnet18".into(),
        input: [3, 224, 224],
        classes: 1000,
        nodes,
        n_genes: b.next_gene,
    }
}
