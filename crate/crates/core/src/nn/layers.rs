use super::gemm::{gemm_acc, transpose};
use super::{conv_output_dim, Tensor};
use crate::{Error, Result};

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;

/// y[N,M] = x[N,D] · w[D,M] + b[M]
pub fn fully_connected(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, d, m) = linear_dims(input, weight, bias)?;
    let mut out = Tensor::zeros(&[n, m]);
    gemm_acc(n, d, m, input.data(), weight.data(), out.data_mut());
    for row in out.data_mut().chunks_exact_mut(m) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn fully_connected_backward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    grad_out: &Tensor,
) -> Result<LinearGrads> {
    let (n, d, m) = linear_dims(input, weight, bias)?;
    if grad_out.dims() != [n, m] {
        return Err(Error::shape(
            "fully_connected_backward",
            format!("grad_out {:?} does not match output [{n}, {m}]", grad_out.dims()),
        ));
    }
    let mut grad_w = Tensor::zeros(&[d, m]);
    let x_t = transpose(n, d, input.data());
    gemm_acc(d, n, m, &x_t, grad_out.data(), grad_w.data_mut());
    let mut grad_in = Tensor::zeros(&[n, d]);
    let w_t = transpose(d, m, weight.data());
    gemm_acc(n, m, d, grad_out.data(), &w_t, grad_in.data_mut());
    let mut grad_b = Tensor::zeros(&[m]);
    for row in grad_out.data().chunks_exact(m) {
        for (gb, g) in grad_b.data_mut().iter_mut().zip(row) {
            *gb += g;
        }
    }
    Ok(LinearGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    })
}

fn linear_dims(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    input.expect_rank("fully_connected", 2)?;
    weight.expect_rank("fully_connected", 2)?;
    let (n, d) = (input.dims()[0], input.dims()[1]);
    let (wd, m) = (weight.dims()[0], weight.dims()[1]);
    if wd != d || bias.dims() != [m] {
        return Err(Error::shape(
            "fully_connected",
            format!(
                "input {:?}, weight {:?}, bias {:?} do not agree",
                input.dims(),
                weight.dims(),
                bias.dims()
            ),
        ));
    }
    Ok((n, d, m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
        }
    }
}

/// What the backward pass needs from a train-mode forward.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    x_hat: Vec<f32>,
    inv_std: Vec<f32>,
    dims: Vec<usize>,
}

/// (batch, channels, spatial) view of an [N,C] or [N,C,H,W] tensor.
fn bn_view(input: &Tensor, channels: usize) -> Result<(usize, usize, usize)> {
    let d = input.dims();
    let (n, c, s) = match d.len() {
        2 => (d[0], d[1], 1),
        4 => (d[0], d[1], d[2] * d[3]),
        _ => {
            return Err(Error::shape(
                "batch_norm",
                format!("expected [N,C] or [N,C,H,W], got {d:?}"),
            ))
        }
    };
    if c != channels {
        return Err(Error::shape(
            "batch_norm",
            format!("input {d:?} has {c} channels, parameters have {channels}"),
        ));
    }
    Ok((n, c, s))
}

pub fn batch_norm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BatchNormState,
    mode: BnMode,
) -> Result<(Tensor, Option<BatchNormCache>)> {
    let channels = gamma.len();
    if beta.len() != channels || state.running_mean.len() != channels || state.running_var.len() != channels {
        return Err(Error::shape("batch_norm", "gamma/beta/running stats lengths differ"));
    }
    let (n, c, s) = bn_view(input, channels)?;
    let x = input.data();
    let mut out = Tensor::zeros(input.dims());
    let y = out.data_mut();
    match mode {
        BnMode::Eval => {
            for ch in 0..c {
                let inv = 1.0 / (state.running_var.data()[ch] + BN_EPS).sqrt();
                let scale = gamma.data()[ch] * inv;
                let shift = beta.data()[ch] - state.running_mean.data()[ch] * scale;
                for b in 0..n {
                    let off = (b * c + ch) * s;
                    for i in off..off + s {
                        y[i] = x[i] * scale + shift;
                    }
                }
            }
            Ok((out, None))
        }
        BnMode::Train => {
            let count = (n * s) as f32;
            let mut x_hat = vec![0.0f32; x.len()];
            let mut inv_std = vec![0.0f32; c];
            for ch in 0..c {
                let mut sum = 0.0f32;
                for b in 0..n {
                    let off = (b * c + ch) * s;
                    sum += x[off..off + s].iter().sum::<f32>();
                }
                let mean = sum / count;
                let mut sq = 0.0f32;
                for b in 0..n {
                    let off = (b * c + ch) * s;
                    sq += x[off..off + s].iter().map(|v| (v - mean) * (v - mean)).sum::<f32>();
                }
                let var = sq / count;
                let inv = 1.0 / (var + BN_EPS).sqrt();
                inv_std[ch] = inv;
                let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
                for b in 0..n {
                    let off = (b * c + ch) * s;
                    for i in off..off + s {
                        let h = (x[i] - mean) * inv;
                        x_hat[i] = h;
                        y[i] = g * h + bt;
                    }
                }
                let unbiased = if count > 1.0 { sq / (count - 1.0) } else { var };
                let rm = &mut state.running_mean.data_mut()[ch];
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean;
                let rv = &mut state.running_var.data_mut()[ch];
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * unbiased;
            }
            Ok((
                out,
                Some(BatchNormCache {
                    x_hat,
                    inv_std,
                    dims: input.dims().to_vec(),
                }),
            ))
        }
    }
}

/// Returns (grad_input, grad_gamma, grad_beta) for a train-mode forward.
pub fn batch_norm_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    if grad_out.dims() != cache.dims.as_slice() {
        return Err(Error::shape(
            "batch_norm_backward",
            format!("grad_out {:?} does not match forward {:?}", grad_out.dims(), cache.dims),
        ));
    }
    let (n, c, s) = bn_view(grad_out, gamma.len())?;
    let count = (n * s) as f32;
    let g = grad_out.data();
    let mut grad_in = Tensor::zeros(grad_out.dims());
    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let (mut dg, mut db) = (0.0f32, 0.0f32);
        for b in 0..n {
            let off = (b * c + ch) * s;
            for i in off..off + s {
                dg += g[i] * cache.x_hat[i];
                db += g[i];
            }
        }
        grad_gamma.data_mut()[ch] = dg;
        grad_beta.data_mut()[ch] = db;
        let k = gamma.data()[ch] * cache.inv_std[ch] / count;
        let gi = grad_in.data_mut();
        for b in 0..n {
            let off = (b * c + ch) * s;
            for i in off..off + s {
                gi[i] = k * (count * g[i] - db - cache.x_hat[i] * dg);
            }
        }
    }
    Ok((grad_in, grad_gamma, grad_beta))
}

/// Argmax positions (flat input indices) of a max-pool forward.
#[derive(Clone, Debug)]
pub struct MaxPoolCache {
    argmax: Vec<usize>,
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
}

/// Max over k×k windows; padded cells never win. Ties go to the first cell in
/// row-major window order.
pub fn max_pool2d(input: &Tensor, k: usize, stride: usize, pad: usize) -> Result<(Tensor, MaxPoolCache)> {
    input.expect_rank("max_pool2d", 4)?;
    let d = input.dims();
    let (n, c, h, w) = (d[0], d[1], d[2], d[3]);
    let window_ok = pad < k;
    let (oh, ow) = match (conv_output_dim(h, k, stride, pad), conv_output_dim(w, k, stride, pad)) {
        (Some(oh), Some(ow)) if window_ok => (oh, ow),
        _ => {
            return Err(Error::shape(
                "max_pool2d",
                format!("window {k} stride {stride} pad {pad} invalid for {d:?}"),
            ))
        }
    };
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let x = input.data();
    let y = out.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix as usize >= w {
                            continue;
                        }
                        let idx = base + iy as usize * w + ix as usize;
                        if best_idx == usize::MAX || x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                y[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((
        out,
        MaxPoolCache {
            argmax,
            input_dims: d.to_vec(),
            output_dims: vec![n, c, oh, ow],
        },
    ))
}

pub fn max_pool2d_backward(cache: &MaxPoolCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.dims() != cache.output_dims.as_slice() {
        return Err(Error::shape(
            "max_pool2d_backward",
            format!("grad_out {:?} does not match {:?}", grad_out.dims(), cache.output_dims),
        ));
    }
    let mut grad_in = Tensor::zeros(&cache.input_dims);
    let gi = grad_in.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        gi[idx] += g;
    }
    Ok(grad_in)
}

/// [N,C,H,W] → [N,C] spatial mean.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    input.expect_rank("global_avg_pool", 4)?;
    let d = input.dims();
    let s = d[2] * d[3];
    let data = input
        .data()
        .chunks_exact(s)
        .map(|p| p.iter().sum::<f32>() / s as f32)
        .collect();
    Tensor::new(&[d[0], d[1]], data)
}

pub fn global_avg_pool_backward(input_dims: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if input_dims.len() != 4 || grad_out.dims() != [input_dims[0], input_dims[1]] {
        return Err(Error::shape(
            "global_avg_pool_backward",
            format!("grad_out {:?} vs input {input_dims:?}", grad_out.dims()),
        ));
    }
    let s = input_dims[2] * input_dims[3];
    let mut data = Vec::with_capacity(grad_out.len() * s);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g / s as f32, s));
    }
    Tensor::new(input_dims, data)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    input.expect_same_dims("relu_backward", grad_out)?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.dims(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fc_identity_and_bias() {
        let x = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let eye = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = fully_connected(&x, &eye, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);

        let x = Tensor::new(&[1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::new(&[2], vec![3.0, -3.0]).unwrap();
        assert_eq!(fully_connected(&x, &eye, &b).unwrap().data(), &[4.0, -2.0]);
    }

    #[test]
    fn fc_classifier_head_shape_and_mismatch() {
        let y = fully_connected(&Tensor::zeros(&[2, 512]), &Tensor::zeros(&[512, 1000]), &Tensor::zeros(&[1000])).unwrap();
        assert_eq!(y.dims(), &[2, 1000]);
        assert!(fully_connected(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[4, 5]), &Tensor::zeros(&[5])).is_err());
    }

    #[test]
    fn bn_constant_input_gives_beta() {
        let x = Tensor::full(&[2, 2, 3, 3], 5.0);
        let gamma = Tensor::full(&[2], 1.0);
        let beta = Tensor::new(&[2], vec![0.5, -0.25]).unwrap();
        let mut st = BatchNormState::new(2);
        let (y, _) = batch_norm(&x, &gamma, &beta, &mut st, BnMode::Train).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let ch = (i / 9) % 2;
            assert_eq!(*v, beta.data()[ch]);
        }
        // running stats moved 10% towards the batch statistics
        assert!((st.running_mean.data()[0] - 0.5).abs() < 1e-6);
        assert!((st.running_var.data()[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn bn_plus_minus_one_normalizes() {
        let x = Tensor::new(&[4, 1], vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let mut st = BatchNormState::new(1);
        let (y, _) = batch_norm(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), &mut st, BnMode::Train).unwrap();
        let e = 1.0 / (1.0f32 + BN_EPS).sqrt();
        for (v, s) in y.data().iter().zip([-1.0, 1.0, -1.0, 1.0]) {
            assert!((v - s * e).abs() < 1e-6);
        }
    }

    #[test]
    fn bn_eval_with_unit_stats_is_identity() {
        let x = Tensor::from_fn(&[2, 3, 2, 2], |i| i as f32 * 0.1 - 1.0);
        let mut st = BatchNormState::new(3);
        let (y, cache) = batch_norm(&x, &Tensor::full(&[3], 1.0), &Tensor::zeros(&[3]), &mut st, BnMode::Eval).unwrap();
        assert!(cache.is_none());
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-4);
        }
        assert_eq!(st, BatchNormState::new(3));
    }

    #[test]
    fn bn_channel_mismatch() {
        let mut st = BatchNormState::new(2);
        let r = batch_norm(&Tensor::zeros(&[1, 3, 2, 2]), &Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]), &mut st, BnMode::Train);
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn max_pool_basic_and_ties() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = max_pool2d(&x, 2, 2, 0).unwrap();
        assert_eq!(y.data(), &[4.0]);

        let x = Tensor::full(&[1, 1, 4, 4], 7.0);
        let (y, cache) = max_pool2d(&x, 2, 2, 0).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
        let g = max_pool2d_backward(&cache, &Tensor::full(&[1, 1, 2, 2], 1.0)).unwrap();
        #[rustfmt::skip]
        let expected = [
            1.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            1.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        ];
        assert_eq!(g.data(), &expected);
    }

    #[test]
    fn max_pool_shapes() {
        let (y, _) = max_pool2d(&Tensor::zeros(&[1, 128, 32, 32]), 2, 2, 0).unwrap();
        assert_eq!(y.dims(), &[1, 128, 16, 16]);
        let (y, _) = max_pool2d(&Tensor::zeros(&[1, 2, 112, 112]), 3, 2, 1).unwrap();
        assert_eq!(y.dims(), &[1, 2, 56, 56]);
        assert!(max_pool2d(&Tensor::zeros(&[1, 1, 2, 2]), 3, 1, 0).is_err());
        assert!(max_pool2d(&Tensor::zeros(&[1, 1, 4, 4]), 2, 2, 2).is_err());
    }
}
