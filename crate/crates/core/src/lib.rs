//! Training and channel-width search for binary (1-bit) convolutional networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense tensors, convolution / linear / batch-norm / pooling layers with
//!   exact backward passes, cross-entropy loss, SGD with momentum and step schedules.
//! - [`binquant`]: 1-bit weight and activation quantizers with straight-through
//!   gradient rules, and the binary convolution / linear layers built from them.
//! - [`archspace`]: model templates (VGG-small, ResNet-18 and a small MNIST variant),
//!   per-layer expansion codes, channel resolution, the FLOPs cost model, network
//!   instantiation and supernet weight inheritance.
//! - [`evosearch`]: the evolutionary search over expansion codes.
//! - [`datapipe`]: MNIST IDX and CIFAR-10 binary readers, stratified subsets, batching.
//! - [`harness`]: run configuration, checkpoints, search runs and CSV reports used by
//!   the `bnas` command-line tool.

pub mod archspace;
pub mod binquant;
pub mod checkpoint;
pub mod datapipe;
mod error;
mod io_util;
pub mod evosearch;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
