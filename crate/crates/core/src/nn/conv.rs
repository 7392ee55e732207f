use super::gemm::{gemm_acc, transpose};
use super::Tensor;
use crate::{Error, Result};

/// Output extent of a strided, zero-padded window. `None` when the window does not fit.
pub fn conv_output_dim(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || size + 2 * pad < kernel {
        return None;
    }
    Some((size + 2 * pad - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    batch: usize,
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new(input: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        input.expect_rank("conv2d", 4)?;
        weight.expect_rank("conv2d", 4)?;
        let [batch, in_c, h, w] = [input.dims()[0], input.dims()[1], input.dims()[2], input.dims()[3]];
        let [out_c, w_in, kh, kw] = [weight.dims()[0], weight.dims()[1], weight.dims()[2], weight.dims()[3]];
        if w_in != in_c {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?} has {in_c} channels, weight {:?} expects {w_in}", input.dims(), weight.dims()),
            ));
        }
        let oh = conv_output_dim(h, kh, stride, pad);
        let ow = conv_output_dim(w, kw, stride, pad);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok(Self {
                batch,
                in_c,
                h,
                w,
                out_c,
                kh,
                kw,
                oh,
                ow,
                stride,
                pad,
            }),
            _ => Err(Error::shape(
                "conv2d",
                format!(
                    "kernel {kh}x{kw} stride {stride} pad {pad} does not fit input {:?}",
                    input.dims()
                ),
            )),
        }
    }

    fn k(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    /// Source pixel for output row/col and kernel offset, `None` inside the padding.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Output columns `lo..hi` whose source column for kernel offset `kx` is inside
    /// the image, and the source column of `lo`.
    fn valid_cols(&self, kx: usize) -> (usize, usize, usize) {
        let lo = (self.pad.saturating_sub(kx)).div_ceil(self.stride).min(self.ow);
        let hi = (lo..self.ow).find(|&ox| self.source(ox, kx, self.w).is_none()).unwrap_or(self.ow);
        let first = if lo < hi { lo * self.stride + kx - self.pad } else { 0 };
        (lo, hi, first)
    }

    fn im2col(&self, image: &[f32], col: &mut [f32]) {
        let p = self.p();
        for ci in 0..self.in_c {
            let plane = &image[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let (lo, hi, first) = self.valid_cols(kx);
                    let row = ((ci * self.kh + ky) * self.kw + kx) * p;
                    let dst = &mut col[row..row + p];
                    for oy in 0..self.oh {
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        match self.source(oy, ky, self.h) {
                            None => line.fill(0.0),
                            Some(iy) => {
                                line[..lo].fill(0.0);
                                line[hi..].fill(0.0);
                                let src = &plane[iy * self.w + first..];
                                if self.stride == 1 {
                                    line[lo..hi].copy_from_slice(&src[..hi - lo]);
                                } else {
                                    for (v, s) in line[lo..hi].iter_mut().zip(src.iter().step_by(self.stride)) {
                                        *v = *s;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f32], image: &mut [f32]) {
        let p = self.p();
        for ci in 0..self.in_c {
            let plane = &mut image[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let (lo, hi, first) = self.valid_cols(kx);
                    let row = ((ci * self.kh + ky) * self.kw + kx) * p;
                    let src = &col[row..row + p];
                    for oy in 0..self.oh {
                        let Some(iy) = self.source(oy, ky, self.h) else {
                            continue;
                        };
                        let line = &src[oy * self.ow + lo..oy * self.ow + hi];
                        let dst = &mut plane[iy * self.w + first..];
                        for (d, s) in dst.iter_mut().step_by(self.stride).zip(line) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation (no kernel flip) with zero padding and no bias.
///
/// Each output is accumulated over (in-channel, kernel row, kernel col) in row-major
/// order starting from zero.
pub fn conv2d(input: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = Geometry::new(input, weight, stride, pad)?;
    let (k, p) = (g.k(), g.p());
    let mut out = Tensor::zeros(&[g.batch, g.out_c, g.oh, g.ow]);
    let mut col = vec![0.0f32; k * p];
    let in_sz = g.in_c * g.h * g.w;
    let out_sz = g.out_c * p;
    for n in 0..g.batch {
        g.im2col(&input.data()[n * in_sz..(n + 1) * in_sz], &mut col);
        gemm_acc(
            g.out_c,
            k,
            p,
            weight.data(),
            &col,
            &mut out.data_mut()[n * out_sz..(n + 1) * out_sz],
        );
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub weight: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Conv2dGrads> {
    let g = Geometry::new(input, weight, stride, pad)?;
    let expected = [g.batch, g.out_c, g.oh, g.ow];
    if grad_out.dims() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!("grad_out {:?} does not match output {expected:?}", grad_out.dims()),
        ));
    }
    let (k, p) = (g.k(), g.p());
    let in_sz = g.in_c * g.h * g.w;
    let out_sz = g.out_c * p;
    let w_t = transpose(g.out_c, k, weight.data());
    let mut grad_in = Tensor::zeros(input.dims());
    // weight gradient is accumulated transposed, [k, out_c], over the whole batch
    let mut grad_w_t = vec![0.0f32; k * g.out_c];
    let mut col = vec![0.0f32; k * p];
    let mut grad_col = vec![0.0f32; k * p];
    for n in 0..g.batch {
        let go = &grad_out.data()[n * out_sz..(n + 1) * out_sz];
        g.im2col(&input.data()[n * in_sz..(n + 1) * in_sz], &mut col);
        let go_t = transpose(g.out_c, p, go);
        gemm_acc(k, p, g.out_c, &col, &go_t, &mut grad_w_t);
        grad_col.fill(0.0);
        gemm_acc(k, g.out_c, p, &w_t, go, &mut grad_col);
        g.col2im(&grad_col, &mut grad_in.data_mut()[n * in_sz..(n + 1) * in_sz]);
    }
    let grad_w = Tensor::new(weight.dims(), transpose(k, g.out_c, &grad_w_t))?;
    Ok(Conv2dGrads {
        input: grad_in,
        weight: grad_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_kernel_scales() {
        let x = Tensor::full(&[1, 1, 3, 3], 1.0);
        let w = Tensor::full(&[1, 1, 1, 1], 2.0);
        let y = conv2d(&x, &w, 1, 0).unwrap();
        assert_eq!(y.dims(), &[1, 1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn padded_window_overlap_counts() {
        let x = Tensor::full(&[1, 1, 4, 4], 1.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, 1, 1).unwrap();
        #[rustfmt::skip]
        let expected = [
            4.0, 6.0, 6.0, 4.0,
            6.0, 9.0, 9.0, 6.0,
            6.0, 9.0, 9.0, 6.0,
            4.0, 6.0, 6.0, 4.0,
        ];
        assert_eq!(y.data(), &expected);
    }

    #[test]
    fn resnet_stem_shape() {
        let g = Geometry::new(
            &Tensor::zeros(&[1, 3, 224, 224]),
            &Tensor::zeros(&[64, 3, 7, 7]),
            2,
            3,
        )
        .unwrap();
        assert_eq!((g.out_c, g.oh, g.ow), (64, 112, 112));
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let err = conv2d(&Tensor::zeros(&[1, 2, 4, 4]), &Tensor::zeros(&[1, 3, 3, 3]), 1, 1).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err}");
        assert!(err.to_string().contains("[1, 2, 4, 4]"));
    }

    #[test]
    fn kernel_larger_than_input_is_rejected() {
        assert!(conv2d(&Tensor::zeros(&[1, 1, 2, 2]), &Tensor::zeros(&[1, 1, 3, 3]), 1, 0).is_err());
    }
}
