//! Model templates, expansion codes and everything derived from a (template, code)
//! pair: channel widths, cost, a trainable network, inherited supernet weights.

mod code;
mod cost;
mod inherit;
mod network;
mod resolve;
mod template;

pub use code::{uniform_code, CodeFile, ExpansionCode, Ratio};
pub use cost::{
    count_cost, count_cost_with, flops_of, layer_macs, network_flops, weight_bits_of, CostReport, Precision,
    BINARY_FLOP_DIVISOR,
};
pub use inherit::inherit_weights;
pub use network::{instantiate, param_shapes, Mode, Network, Param};
pub use resolve::{resolve_channels, Branch, ResolvedLayer};
pub use template::{
    resnet18, vgg_small, vgg_small_mini, LayerKind, LayerSpec, NetworkTemplate, OutWidth, ResidualBlock,
    TemplateNode, TEMPLATE_NAMES,
};
