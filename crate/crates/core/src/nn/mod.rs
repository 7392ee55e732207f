//! Dense f32 tensors and the layer kernels needed to train small CNNs on a CPU.
//!
//! Every forward kernel has a matching backward that returns exact gradients of the
//! forward map. Accumulation is in f32 throughout.

mod conv;
mod gemm;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use conv::{conv2d, conv2d_backward, conv_output_dim, Conv2dGrads};
pub use layers::{
    batch_norm, batch_norm_backward, fully_connected, fully_connected_backward,
    global_avg_pool, global_avg_pool_backward, max_pool2d, max_pool2d_backward, relu,
    relu_backward, BatchNormCache, BatchNormState, BnMode, LinearGrads, MaxPoolCache,
    BN_EPS, BN_MOMENTUM,
};
pub use loss::softmax_cross_entropy;
pub use optim::{lr_at_epoch, sgd_step, LrSchedule, TrainConfig};
pub use tensor::Tensor;
