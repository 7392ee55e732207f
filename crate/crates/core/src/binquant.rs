//! 1-bit quantizers and the layers built on them.
//!
//! Forward rules:
//!
//! ```text
//! w_b = sign(w) * mean(|w|)         sign(0) = +1, one scale per layer
//! x_b = round(clip(x, 0, 1))        0.5 rounds up
//! ```
//!
//! Backward rules (straight-through): the weight gradient passes through unchanged;
//! the activation gradient passes where `0 <= x <= 1` and is zero elsewhere.

use crate::nn::{conv2d, conv2d_backward, fully_connected, fully_connected_backward, Conv2dGrads, LinearGrads, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BinarizedWeights {
    /// ±1, same dims as the source weights.
    pub signs: Tensor,
    pub scale: f32,
}

impl BinarizedWeights {
    /// `signs × scale`
    pub fn reconstruct(&self) -> Tensor {
        let s = self.scale;
        self.signs.map(|v| v * s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedActivations {
    /// {0, 1}, same dims as the source.
    pub values: Tensor,
    /// True where the source lies inside [0, 1].
    pub pass_mask: Vec<bool>,
}

/// Mean absolute value of a weight array.
pub fn weight_scale(values: &[f32]) -> Result<f32> {
    if values.is_empty() {
        return Err(Error::Input("cannot binarize an empty weight array".into()));
    }
    Ok(values.iter().map(|v| v.abs()).sum::<f32>() / values.len() as f32)
}

#[inline]
fn sign(v: f32) -> f32 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn quantize_activation(v: f32) -> f32 {
    if v >= 0.5 {
        1.0
    } else {
        0.0
    }
}

pub fn binarize_weights(w: &Tensor) -> Result<BinarizedWeights> {
    let scale = weight_scale(w.data())?;
    Ok(BinarizedWeights {
        signs: w.map(sign),
        scale,
    })
}

pub fn binarize_activations(x: &Tensor) -> QuantizedActivations {
    QuantizedActivations {
        values: x.map(quantize_activation),
        pass_mask: x.data().iter().map(|v| (0.0..=1.0).contains(v)).collect(),
    }
}

pub fn ste_weight_grad(upstream: &Tensor, w: &Tensor) -> Result<Tensor> {
    upstream.expect_same_dims("ste_weight_grad", w)?;
    Ok(upstream.clone())
}

pub fn ste_activation_grad(upstream: &Tensor, x: &Tensor) -> Result<Tensor> {
    upstream.expect_same_dims("ste_activation_grad", x)?;
    let data = upstream
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, v)| if (0.0..=1.0).contains(v) { g } else { 0.0 })
        .collect();
    Tensor::new(x.dims(), data)
}

/// `conv2d(x_b, w_b)`.
pub fn binary_conv2d(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let xb = binarize_activations(x);
    let wb = binarize_weights(w)?;
    conv2d(&xb.values, &wb.reconstruct(), stride, pad)
}

/// Gradients of [`binary_conv2d`] with respect to the real-valued `x` and `w`.
pub fn binary_conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Conv2dGrads> {
    let xb = binarize_activations(x);
    let wb = binarize_weights(w)?;
    let g = conv2d_backward(&xb.values, &wb.reconstruct(), grad_out, stride, pad)?;
    Ok(Conv2dGrads {
        input: ste_activation_grad(&g.input, x)?,
        weight: ste_weight_grad(&g.weight, w)?,
    })
}

/// `x_b · w_b + bias`; the bias stays full precision.
pub fn binary_fully_connected(x: &Tensor, w: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let xb = binarize_activations(x);
    let wb = binarize_weights(w)?;
    fully_connected(&xb.values, &wb.reconstruct(), bias)
}

pub fn binary_fully_connected_backward(
    x: &Tensor,
    w: &Tensor,
    bias: &Tensor,
    grad_out: &Tensor,
) -> Result<LinearGrads> {
    let xb = binarize_activations(x);
    let wb = binarize_weights(w)?;
    let g = fully_connected_backward(&xb.values, &wb.reconstruct(), bias, grad_out)?;
    Ok(LinearGrads {
        input: ste_activation_grad(&g.input, x)?,
        weight: ste_weight_grad(&g.weight, w)?,
        bias: g.bias,
    })
}
