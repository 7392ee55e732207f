use rand_distr::{Distribution, Normal};

use super::cost::Precision;
use super::resolve::{resolve_channels, ResolvedLayer};
use super::template::{LayerKind, NetworkTemplate, TemplateNode};
use super::ExpansionCode;
use crate::binquant;
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::nn::{self, BatchNormCache, BatchNormState, BnMode, MaxPoolCache, Tensor};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable array with its gradient and momentum buffer.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
    /// Whether weight decay applies (conv/fc weights only).
    pub decay: bool,
}

impl Param {
    fn new(name: String, value: Tensor, decay: bool) -> Self {
        let grad = Tensor::zeros(value.dims());
        let velocity = Tensor::zeros(value.dims());
        Self {
            name,
            value,
            grad,
            velocity,
            decay,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Conv { weight: Param, stride: usize, pad: usize, binary: bool },
    Linear { weight: Param, bias: Param, binary: bool },
    BatchNorm { gamma: Param, beta: Param, state: BatchNormState, stats_name: String },
    MaxPool { k: usize, stride: usize, pad: usize },
    GlobalAvgPool,
    Act { binary: bool },
    Flatten,
}

#[derive(Clone, Debug)]
enum Cache {
    Empty,
    Input(Tensor),
    Bn(BatchNormCache),
    Pool(MaxPoolCache),
    Dims(Vec<usize>),
}

#[derive(Clone, Debug)]
struct Layer {
    name: String,
    op: Op,
    cache: Cache,
}

fn missing_cache(name: &str) -> Error {
    Error::Input(format!("backward through {name} without a train-mode forward"))
}

impl Layer {
    fn forward(&mut self, x: Tensor, mode: Mode) -> Result<Tensor> {
        let train = mode == Mode::Train;
        let (y, cache) = match &mut self.op {
            Op::Conv { weight, stride, pad, binary } => {
                let y = if *binary {
                    binquant::binary_conv2d(&x, &weight.value, *stride, *pad)?
                } else {
                    nn::conv2d(&x, &weight.value, *stride, *pad)?
                };
                (y, Cache::Input(x))
            }
            Op::Linear { weight, bias, binary } => {
                let y = if *binary {
                    binquant::binary_fully_connected(&x, &weight.value, &bias.value)?
                } else {
                    nn::fully_connected(&x, &weight.value, &bias.value)?
                };
                (y, Cache::Input(x))
            }
            Op::BatchNorm { gamma, beta, state, .. } => {
                let bn_mode = if train { BnMode::Train } else { BnMode::Eval };
                let (y, cache) = nn::batch_norm(&x, &gamma.value, &beta.value, state, bn_mode)?;
                (y, cache.map_or(Cache::Empty, Cache::Bn))
            }
            Op::MaxPool { k, stride, pad } => {
                let (y, cache) = nn::max_pool2d(&x, *k, *stride, *pad)?;
                (y, Cache::Pool(cache))
            }
            Op::GlobalAvgPool => (nn::global_avg_pool(&x)?, Cache::Dims(x.dims().to_vec())),
            Op::Act { binary: true } => (binquant::binarize_activations(&x).values, Cache::Input(x)),
            Op::Act { binary: false } => (nn::relu(&x), Cache::Input(x)),
            Op::Flatten => {
                let dims = x.dims().to_vec();
                let flat = dims[1..].iter().product();
                (x.reshape(&[dims[0], flat])?, Cache::Dims(dims))
            }
        };
        self.cache = if train { cache } else { Cache::Empty };
        Ok(y)
    }

    fn backward(&mut self, g: Tensor) -> Result<Tensor> {
        let cache = std::mem::replace(&mut self.cache, Cache::Empty);
        match (&mut self.op, cache) {
            (Op::Conv { weight, stride, pad, binary }, Cache::Input(x)) => {
                let grads = if *binary {
                    binquant::binary_conv2d_backward(&x, &weight.value, &g, *stride, *pad)?
                } else {
                    nn::conv2d_backward(&x, &weight.value, &g, *stride, *pad)?
                };
                weight.grad = grads.weight;
                Ok(grads.input)
            }
            (Op::Linear { weight, bias, binary }, Cache::Input(x)) => {
                let grads = if *binary {
                    binquant::binary_fully_connected_backward(&x, &weight.value, &bias.value, &g)?
                } else {
                    nn::fully_connected_backward(&x, &weight.value, &bias.value, &g)?
                };
                weight.grad = grads.weight;
                bias.grad = grads.bias;
                Ok(grads.input)
            }
            (Op::BatchNorm { gamma, beta, .. }, Cache::Bn(cache)) => {
                let (gi, gg, gb) = nn::batch_norm_backward(&cache, &gamma.value, &g)?;
                gamma.grad = gg;
                beta.grad = gb;
                Ok(gi)
            }
            (Op::MaxPool { .. }, Cache::Pool(cache)) => nn::max_pool2d_backward(&cache, &g),
            (Op::GlobalAvgPool, Cache::Dims(dims)) => nn::global_avg_pool_backward(&dims, &g),
            (Op::Act { binary: true }, Cache::Input(x)) => binquant::ste_activation_grad(&g, &x),
            (Op::Act { binary: false }, Cache::Input(x)) => nn::relu_backward(&x, &g),
            (Op::Flatten, Cache::Dims(dims)) => g.reshape(&dims),
            _ => Err(missing_cache(&self.name)),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.op {
            Op::Conv { weight, .. } => vec![weight],
            Op::Linear { weight, bias, .. } => vec![weight, bias],
            Op::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => Vec::new(),
        }
    }

    /// Persistent arrays in checkpoint order.
    fn state(&self) -> Vec<(String, &Tensor)> {
        match &self.op {
            Op::Conv { weight, .. } => vec![(weight.name.clone(), &weight.value)],
            Op::Linear { weight, bias, .. } => {
                vec![(weight.name.clone(), &weight.value), (bias.name.clone(), &bias.value)]
            }
            Op::BatchNorm { gamma, beta, state, stats_name } => vec![
                (gamma.name.clone(), &gamma.value),
                (beta.name.clone(), &beta.value),
                (format!("{stats_name}.running_mean"), &state.running_mean),
                (format!("{stats_name}.running_var"), &state.running_var),
            ],
            _ => Vec::new(),
        }
    }

    fn state_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match &mut self.op {
            Op::Conv { weight, .. } => vec![(weight.name.clone(), &mut weight.value)],
            Op::Linear { weight, bias, .. } => vec![
                (weight.name.clone(), &mut weight.value),
                (bias.name.clone(), &mut bias.value),
            ],
            Op::BatchNorm { gamma, beta, state, stats_name } => vec![
                (gamma.name.clone(), &mut gamma.value),
                (beta.name.clone(), &mut beta.value),
                (format!("{stats_name}.running_mean"), &mut state.running_mean),
                (format!("{stats_name}.running_var"), &mut state.running_var),
            ],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Layer(Layer),
    Residual { body: Vec<Layer>, shortcut: Vec<Layer> },
}

/// Names and shapes of every persistent array of the network for `code`, in
/// checkpoint order.
pub fn param_shapes(template: &NetworkTemplate, code: &ExpansionCode) -> Result<Vec<(String, Vec<usize>)>> {
    Ok(resolve_channels(template, code)?
        .iter()
        .flat_map(layer_param_shapes)
        .collect())
}

fn layer_param_shapes(l: &ResolvedLayer) -> Vec<(String, Vec<usize>)> {
    let n = &l.name;
    match l.kind {
        LayerKind::Conv => vec![(
            format!("{n}.weight"),
            vec![l.out_channels, l.in_channels, l.kernel.0, l.kernel.1],
        )],
        LayerKind::Fc => vec![
            (format!("{n}.weight"), vec![l.in_channels, l.out_channels]),
            (format!("{n}.bias"), vec![l.out_channels]),
        ],
        LayerKind::BatchNorm => ["gamma", "beta", "running_mean", "running_var"]
            .iter()
            .map(|s| (format!("{n}.{s}"), vec![l.out_channels]))
            .collect(),
        _ => Vec::new(),
    }
}

/// A concrete network built from a template and an expansion code.
#[derive(Clone, Debug)]
pub struct Network {
    template: String,
    code: ExpansionCode,
    seed: u64,
    precision: Precision,
    input: [usize; 3],
    classes: usize,
    nodes: Vec<Node>,
}

/// Binary network for `(template, code)` with He-normal weights drawn from `seed`.
pub fn instantiate(template: &NetworkTemplate, code: &ExpansionCode, seed: u64) -> Result<Network> {
    Network::new(template, code, seed, Precision::Binary)
}

impl Network {
    pub fn new(template: &NetworkTemplate, code: &ExpansionCode, seed: u64, precision: Precision) -> Result<Self> {
        let resolved = resolve_channels(template, code)?;
        let mut rng = rng::seeded(seed);
        let mut it = resolved.into_iter();
        let mut next = || it.next().expect("resolved layers follow template order");
        let mut nodes = Vec::new();
        for node in &template.nodes {
            match node {
                TemplateNode::Layer(_) => nodes.push(Node::Layer(build_layer(&next(), precision, &mut rng)?)),
                TemplateNode::Block(b) => {
                    let body = (0..b.body.len())
                        .map(|_| build_layer(&next(), precision, &mut rng))
                        .collect::<Result<_>>()?;
                    let shortcut = (0..b.shortcut.len())
                        .map(|_| build_layer(&next(), precision, &mut rng))
                        .collect::<Result<_>>()?;
                    let add = next();
                    debug_assert_eq!(add.kind, LayerKind::ResidualAdd);
                    nodes.push(Node::Residual { body, shortcut });
                }
            }
        }
        Ok(Self {
            template: template.name.clone(),
            code: code.clone(),
            seed,
            precision,
            input: template.input,
            classes: template.classes,
            nodes,
        })
    }

    /// Rebuilds a network from a checkpoint of a built-in template.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let template = NetworkTemplate::builtin(&ckpt.meta.template)?;
        let mut net = Self::new(&template, &ckpt.meta.code, ckpt.meta.seed, ckpt.meta.precision)?;
        net.load_checkpoint(ckpt)?;
        Ok(net)
    }

    pub fn template_name(&self) -> &str {
        &self.template
    }

    pub fn code(&self) -> &ExpansionCode {
        &self.code
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.input
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.nodes.iter().flat_map(|n| -> Box<dyn Iterator<Item = &Layer>> {
            match n {
                Node::Layer(l) => Box::new(std::iter::once(l)),
                Node::Residual { body, shortcut } => Box::new(body.iter().chain(shortcut)),
            }
        })
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.nodes.iter_mut().flat_map(|n| -> Box<dyn Iterator<Item = &mut Layer>> {
            match n {
                Node::Layer(l) => Box::new(std::iter::once(l)),
                Node::Residual { body, shortcut } => Box::new(body.iter_mut().chain(shortcut.iter_mut())),
            }
        })
    }

    /// `(name, binarized)` for every conv and fc layer.
    pub fn weighted_layers(&self) -> Vec<(String, LayerKind, bool)> {
        self.layers()
            .filter_map(|l| match l.op {
                Op::Conv { binary, .. } => Some((l.name.clone(), LayerKind::Conv, binary)),
                Op::Linear { binary, .. } => Some((l.name.clone(), LayerKind::Fc, binary)),
                _ => None,
            })
            .collect()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let d = x.dims();
        if d.len() != 4 || d[1..] != self.input {
            return Err(Error::shape(
                "network",
                format!("input {d:?} does not match [N, {}, {}, {}]", self.input[0], self.input[1], self.input[2]),
            ));
        }
        let mut h = x.clone();
        for node in &mut self.nodes {
            h = match node {
                Node::Layer(l) => l.forward(h, mode)?,
                Node::Residual { body, shortcut } => {
                    let mut s = h.clone();
                    let mut b = h;
                    for l in body.iter_mut() {
                        b = l.forward(b, mode)?;
                    }
                    for l in shortcut.iter_mut() {
                        s = l.forward(s, mode)?;
                    }
                    b.expect_same_dims("residual add", &s)?;
                    for (bv, sv) in b.data_mut().iter_mut().zip(s.data()) {
                        *bv += sv;
                    }
                    b
                }
            };
        }
        Ok(h)
    }

    /// Back-propagates `grad` (w.r.t. the logits of the last train-mode forward) and
    /// stores parameter gradients. Returns the gradient w.r.t. the input.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for node in self.nodes.iter_mut().rev() {
            g = match node {
                Node::Layer(l) => l.backward(g)?,
                Node::Residual { body, shortcut } => {
                    let mut gs = g.clone();
                    let mut gb = g;
                    for l in body.iter_mut().rev() {
                        gb = l.backward(gb)?;
                    }
                    for l in shortcut.iter_mut().rev() {
                        gs = l.backward(gs)?;
                    }
                    for (a, b) in gb.data_mut().iter_mut().zip(gs.data()) {
                        *a += b;
                    }
                    gb
                }
            };
        }
        Ok(g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn sgd_step(&mut self, lr: f32, momentum: f32, weight_decay: f32) -> Result<()> {
        for p in self.params_mut() {
            let wd = if p.decay { weight_decay } else { 0.0 };
            nn::sgd_step(&mut p.value, &p.grad, &mut p.velocity, lr, momentum, wd)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(CheckpointMeta {
            template: self.template.clone(),
            code: self.code.clone(),
            seed: self.seed,
            precision: self.precision,
        });
        for l in self.layers() {
            for (name, t) in l.state() {
                ckpt.push(name, t.clone()).expect("layer names are unique");
            }
        }
        ckpt
    }

    /// Copies every array from `ckpt`; names and shapes must match exactly.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.meta.template != self.template || ckpt.meta.code != self.code {
            return Err(Error::Input(format!(
                "checkpoint is for {} {}, network is {} {}",
                ckpt.meta.template, ckpt.meta.code, self.template, self.code
            )));
        }
        let mut expected = 0;
        for l in self.layers_mut() {
            for (name, t) in l.state_mut() {
                expected += 1;
                let src = ckpt
                    .get(&name)
                    .ok_or_else(|| Error::Input(format!("checkpoint lacks {name}")))?;
                if src.dims() != t.dims() {
                    return Err(Error::shape(
                        "load_checkpoint",
                        format!("{name}: checkpoint {:?}, network {:?}", src.dims(), t.dims()),
                    ));
                }
                t.data_mut().copy_from_slice(src.data());
            }
        }
        if expected != ckpt.len() {
            return Err(Error::Input(format!(
                "checkpoint has {} arrays, network has {expected}",
                ckpt.len()
            )));
        }
        Ok(())
    }
}

fn he_normal(dims: &[usize], fan_in: usize, rng: &mut rng::Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt() as f32;
    let normal = Normal::new(0.0f32, std).expect("finite std");
    Tensor::from_fn(dims, |_| normal.sample(rng))
}

fn build_layer(l: &ResolvedLayer, precision: Precision, rng: &mut rng::Rng) -> Result<Layer> {
    let binary = precision == Precision::Binary && l.binarized;
    let shapes = layer_param_shapes(l);
    let op = match l.kind {
        LayerKind::Conv => {
            let (name, dims) = &shapes[0];
            let fan_in = l.in_channels * l.kernel.0 * l.kernel.1;
            Op::Conv {
                weight: Param::new(name.clone(), he_normal(dims, fan_in, rng), true),
                stride: l.stride,
                pad: l.pad,
                binary,
            }
        }
        LayerKind::Fc => Op::Linear {
            weight: Param::new(shapes[0].0.clone(), he_normal(&shapes[0].1, l.in_channels, rng), true),
            bias: Param::new(shapes[1].0.clone(), Tensor::zeros(&shapes[1].1), false),
            binary,
        },
        LayerKind::BatchNorm => Op::BatchNorm {
            gamma: Param::new(shapes[0].0.clone(), Tensor::full(&[l.out_channels], 1.0), false),
            beta: Param::new(shapes[1].0.clone(), Tensor::zeros(&[l.out_channels]), false),
            state: BatchNormState::new(l.out_channels),
            stats_name: l.name.clone(),
        },
        LayerKind::MaxPool => Op::MaxPool {
            k: l.kernel.0,
            stride: l.stride,
            pad: l.pad,
        },
        LayerKind::GlobalAvgPool => Op::GlobalAvgPool,
        LayerKind::Act => Op::Act {
            binary: precision == Precision::Binary,
        },
        LayerKind::Flatten => Op::Flatten,
        LayerKind::ResidualAdd => unreachable!("residual adds are handled by the block node"),
    };
    Ok(Layer {
        name: l.name.clone(),
        op,
        cache: Cache::Empty,
    })
}

#[cfg(test)]
mod tests {
    use super::super::template::{resnet18, vgg_small, vgg_small_mini};
    use super::super::Ratio;
    use super::*;

    #[test]
    fn same_seed_same_weights() {
        let t = vgg_small_mini();
        let code = ExpansionCode::uniform(Ratio::ONE, t.n_genes);
        let a = instantiate(&t, &code, 9).unwrap().to_checkpoint();
        let b = instantiate(&t, &code, 9).unwrap().to_checkpoint();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = instantiate(&t, &code, 10).unwrap().to_checkpoint();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn vgg_small_layer_roles() {
        let t = vgg_small();
        let net = instantiate(&t, &ExpansionCode::uniform(Ratio::ONE, t.n_genes), 0).unwrap();
        let w = net.weighted_layers();
        let binary_convs = w.iter().filter(|(_, k, b)| *k == LayerKind::Conv && *b).count();
        let fp_convs = w.iter().filter(|(_, k, b)| *k == LayerKind::Conv && !*b).count();
        let binary_fc = w.iter().filter(|(_, k, b)| *k == LayerKind::Fc && *b).count();
        let fp_fc = w.iter().filter(|(_, k, b)| *k == LayerKind::Fc && !*b).count();
        // first conv stays full precision; remaining five convs, the hidden fc are binary
        assert_eq!((fp_convs, binary_convs, binary_fc, fp_fc), (1, 5, 1, 1));
    }

    #[test]
    fn resnet18_has_twenty_convs() {
        let t = resnet18();
        let shapes = param_shapes(&t, &ExpansionCode::uniform(Ratio::ONE, t.n_genes)).unwrap();
        let convs = shapes.iter().filter(|(_, d)| d.len() == 4).count();
        assert_eq!(convs, 20);
        assert!(shapes.iter().any(|(n, d)| n == "fc.weight" && d == &vec![512, 1000]));
    }

    #[test]
    fn forward_backward_shapes_and_checkpoint_reload() {
        let t = vgg_small_mini();
        let code = ExpansionCode::from_f64s(&[0.5, 1.0, 0.25, 2.0, 1.0]).unwrap();
        let mut net = instantiate(&t, &code, 3).unwrap();
        let x = Tensor::from_fn(&[2, 1, 28, 28], |i| ((i % 17) as f32 - 8.0) / 8.0);
        let y = net.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.dims(), &[2, 10]);
        let gx = net.backward(&Tensor::full(&[2, 10], 0.1)).unwrap();
        assert_eq!(gx.dims(), x.dims());
        assert!(net.backward(&Tensor::full(&[2, 10], 0.1)).is_err());

        let ckpt = net.to_checkpoint();
        let mut other = Network::from_checkpoint(&ckpt).unwrap();
        let y1 = net.forward(&x, Mode::Eval).unwrap();
        let y2 = other.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y1, y2);
        assert!(net.forward(&Tensor::zeros(&[1, 3, 28, 28]), Mode::Eval).is_err());
    }
}
