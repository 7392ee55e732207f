//! Central finite differences against the analytic backward of every full-precision
//! layer, and the straight-through gradients of the binary layers against a
//! hand-written surrogate computed in f64.

mod common;

use bnas::binquant::{binarize_activations, binarize_weights, binary_conv2d_backward, binary_fully_connected_backward};
use bnas::nn::{
    batch_norm, batch_norm_backward, conv2d, conv2d_backward, fully_connected, fully_connected_backward,
    global_avg_pool, global_avg_pool_backward, max_pool2d, max_pool2d_backward, relu, relu_backward,
    softmax_cross_entropy, BatchNormState, BnMode, Tensor,
};
use bnas::rng::seeded;
use common::{dyadic, max_abs_diff, numeric, random, rel_err, surrogate_fc};
use rand::Rng;

const TOL: f64 = 1e-2;

fn check(name: &str, analytic: &Tensor, numeric: &[f64]) {
    let e = rel_err(analytic, numeric);
    assert!(e < TOL, "{name}: relative error {e:.2e}");
}

#[test]
fn conv2d_gradients() {
    let mut rng = seeded(1);
    for &(stride, pad) in &[(1, 1), (2, 1), (1, 0)] {
        let x = random(&[2, 3, 6, 6], &mut rng);
        let w = random(&[4, 3, 3, 3], &mut rng);
        let y = conv2d(&x, &w, stride, pad).unwrap();
        let r = random(y.dims(), &mut rng);
        let g = conv2d_backward(&x, &w, &r, stride, pad).unwrap();
        check("conv input", &g.input, &numeric(&x, &r, &mut |xp| conv2d(xp, &w, stride, pad).unwrap()));
        check("conv weight", &g.weight, &numeric(&w, &r, &mut |wp| conv2d(&x, wp, stride, pad).unwrap()));
    }
}

#[test]
fn fully_connected_gradients() {
    let mut rng = seeded(2);
    let x = random(&[5, 7], &mut rng);
    let w = random(&[7, 4], &mut rng);
    let b = random(&[4], &mut rng);
    let r = random(&[5, 4], &mut rng);
    let g = fully_connected_backward(&x, &w, &b, &r).unwrap();
    check("fc input", &g.input, &numeric(&x, &r, &mut |p| fully_connected(p, &w, &b).unwrap()));
    check("fc weight", &g.weight, &numeric(&w, &r, &mut |p| fully_connected(&x, p, &b).unwrap()));
    check("fc bias", &g.bias, &numeric(&b, &r, &mut |p| fully_connected(&x, &w, p).unwrap()));
}

#[test]
fn batch_norm_gradients() {
    let mut rng = seeded(3);
    for dims in [vec![4, 3], vec![2, 3, 3, 3]] {
        let x = random(&dims, &mut rng);
        let gamma = Tensor::from_fn(&[3], |_| rng.random_range(0.5f32..1.5));
        let beta = random(&[3], &mut rng);
        let r = random(&dims, &mut rng);
        let fwd = |x: &Tensor, gamma: &Tensor, beta: &Tensor| {
            let mut state = BatchNormState::new(3);
            batch_norm(x, gamma, beta, &mut state, BnMode::Train).unwrap()
        };
        let (_, cache) = fwd(&x, &gamma, &beta);
        let (gx, gg, gb) = batch_norm_backward(&cache.unwrap(), &gamma, &r).unwrap();
        check("bn input", &gx, &numeric(&x, &r, &mut |p| fwd(p, &gamma, &beta).0));
        check("bn gamma", &gg, &numeric(&gamma, &r, &mut |p| fwd(&x, p, &beta).0));
        check("bn beta", &gb, &numeric(&beta, &r, &mut |p| fwd(&x, &gamma, p).0));
    }
}

#[test]
fn max_pool_gradients() {
    // distinct values at least 0.01 apart, so a ±h nudge never changes a window's winner
    let mut rng = seeded(4);
    let n = 2 * 2 * 6 * 6;
    let mut values: Vec<f32> = (0..n).map(|i| i as f32 * 0.01).collect();
    for i in (1..n).rev() {
        values.swap(i, rng.random_range(0..=i));
    }
    let x = Tensor::new(&[2, 2, 6, 6], values).unwrap();
    for &(k, stride, pad) in &[(2, 2, 0), (3, 2, 1)] {
        let (y, cache) = max_pool2d(&x, k, stride, pad).unwrap();
        let r = random(y.dims(), &mut rng);
        let g = max_pool2d_backward(&cache, &r).unwrap();
        check("max pool", &g, &numeric(&x, &r, &mut |p| max_pool2d(p, k, stride, pad).unwrap().0));
    }
}

#[test]
fn global_avg_pool_and_relu_gradients() {
    let mut rng = seeded(5);
    let x = random(&[2, 3, 4, 4], &mut rng);
    let r = random(&[2, 3], &mut rng);
    let g = global_avg_pool_backward(x.dims(), &r).unwrap();
    check("gap", &g, &numeric(&x, &r, &mut |p| global_avg_pool(p).unwrap()));

    // keep inputs away from the kink at 0
    let x = x.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let r = random(x.dims(), &mut rng);
    let g = relu_backward(&x, &r).unwrap();
    check("relu", &g, &numeric(&x, &r, &mut |p| relu(p)));
}

#[test]
fn softmax_cross_entropy_gradient() {
    let mut rng = seeded(6);
    let logits = Tensor::from_fn(&[4, 5], |_| rng.random_range(-3.0f32..3.0));
    let labels = [0, 4, 2, 2];
    let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
    let one = Tensor::full(&[1], 1.0);
    let num = numeric(&logits, &one, &mut |p| Tensor::full(&[1], softmax_cross_entropy(p, &labels).unwrap().0));
    check("softmax ce", &grad, &num);
}

/// Surrogate of a one-layer binary conv: forward at (x_b, w_b), quantizer derivatives
/// replaced by 1 (weights) and 1[0 ≤ x ≤ 1] (activations). Direct loops in f64.
fn surrogate_conv(x: &Tensor, w: &Tensor, g: &Tensor, stride: usize, pad: usize) -> (Vec<f64>, Vec<f64>) {
    let xb = binarize_activations(x).values;
    let wb = binarize_weights(w).unwrap().reconstruct();
    let (n, c, h, wd) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    let (o, kh, kw) = (w.dims()[0], w.dims()[2], w.dims()[3]);
    let (oh, ow) = (g.dims()[2], g.dims()[3]);
    let at = |t: &Tensor, i: [usize; 4], d: [usize; 4]| t.data()[((i[0] * d[1] + i[1]) * d[2] + i[2]) * d[3] + i[3]] as f64;
    let (xd, wdims, gd) = ([n, c, h, wd], [o, c, kh, kw], [n, o, oh, ow]);
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    for b in 0..n {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let go = at(g, [b, oc, y, xx], gd);
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xx * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let (iy, ix) = (iy as usize, ix as usize);
                                gw[((oc * c + ic) * kh + ky) * kw + kx] += go * at(&xb, [b, ic, iy, ix], xd);
                                gx[((b * c + ic) * h + iy) * wd + ix] += go * at(&wb, [oc, ic, ky, kx], wdims);
                            }
                        }
                    }
                }
            }
        }
    }
    for (v, &xv) in gx.iter_mut().zip(x.data()) {
        if !(0.0..=1.0).contains(&xv) {
            *v = 0.0;
        }
    }
    (gx, gw)
}

#[test]
fn binary_conv_ste_matches_surrogate() {
    let mut rng = seeded(7);
    for &(stride, pad) in &[(1, 1), (2, 0)] {
        // 4·2·2·2 = 32 weights, so the mean |w| is exact
        let x = dyadic(&[2, 2, 5, 5], &mut rng);
        let w = dyadic(&[4, 2, 2, 2], &mut rng);
        let y = conv2d(&x, &w, stride, pad).unwrap();
        let g = dyadic(y.dims(), &mut rng);
        let ours = binary_conv2d_backward(&x, &w, &g, stride, pad).unwrap();
        let (gx, gw) = surrogate_conv(&x, &w, &g, stride, pad);
        assert!(max_abs_diff(&ours.weight, &gw) <= 1e-6);
        assert!(max_abs_diff(&ours.input, &gx) <= 1e-6);
        assert!(gx.iter().any(|&v| v != 0.0));
    }
}

#[test]
fn binary_fc_ste_matches_surrogate() {
    let mut rng = seeded(8);
    let x = dyadic(&[3, 16], &mut rng);
    let w = dyadic(&[16, 8], &mut rng);
    let b = dyadic(&[8], &mut rng);
    let g = dyadic(&[3, 8], &mut rng);
    let ours = binary_fully_connected_backward(&x, &w, &b, &g).unwrap();
    let (gx, gw) = surrogate_fc(&x, &w, &g);
    assert!(max_abs_diff(&ours.weight, &gw) <= 1e-6);
    assert!(max_abs_diff(&ours.input, &gx) <= 1e-6);
}
