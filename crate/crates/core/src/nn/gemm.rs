//! Small single-threaded matrix kernels. `gemm_acc` keeps the summation over the inner
//! dimension in increasing order for every output element, which the convolution relies
//! on to match a naive loop bit for bit.

const MR: usize = 4;
const NR: usize = 16;

/// c[m×n] += a[m×k] · b[k×n]
///
/// A 4×16 tile of `c` is held in locals while the inner dimension is swept, so each
/// element still receives its products one at a time in increasing `k` order. The
/// AVX2 build uses separate multiplies and adds, never fused ones, and gives the same
/// bits as the portable path.
pub(crate) fn gemm_acc(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just checked.
        unsafe { gemm_acc_avx2(m, k, n, a, b, c) };
        return;
    }
    gemm_acc_tiled(m, k, n, a, b, c);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_acc_avx2(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    gemm_acc_tiled(m, k, n, a, b, c);
}

#[inline(always)]
fn gemm_acc_tiled(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    let rem = n % NR;
    let full = n - rem;
    // the last partial column block of `b`, zero-padded to NR wide
    let mut panel = Vec::new();
    if rem > 0 {
        panel = vec![0.0f32; k * NR];
        for p in 0..k {
            panel[p * NR..p * NR + rem].copy_from_slice(&b[p * n + full..(p + 1) * n]);
        }
    }
    let zeros = vec![0.0f32; k];
    for i in (0..m).step_by(MR) {
        let rows = (m - i).min(MR);
        let row = |r: usize| if r < rows { &a[(i + r) * k..(i + r + 1) * k] } else { &zeros[..] };
        let a_rows = [row(0), row(1), row(2), row(3)];
        for j in (0..full).step_by(NR) {
            if rows == MR {
                full_tile(&a_rows, k, b, n, c, i, j);
            } else {
                tile(&a_rows, k, b, n, j, c, n, i, j, rows, NR);
            }
        }
        if rem > 0 {
            tile(&a_rows, k, &panel, NR, 0, c, n, i, full, rows, rem);
        }
    }
}

#[inline(always)]
fn full_tile(a: &[&[f32]; MR], k: usize, b: &[f32], n: usize, c: &mut [f32], i: usize, j: usize) {
    let load = |r: usize| -> [f32; NR] { c[(i + r) * n + j..(i + r) * n + j + NR].try_into().unwrap() };
    let (mut c0, mut c1, mut c2, mut c3) = (load(0), load(1), load(2), load(3));
    let [a0, a1, a2, a3] = *a;
    for p in 0..k {
        let bv: &[f32; NR] = b[p * n + j..p * n + j + NR].try_into().unwrap();
        let (x0, x1, x2, x3) = (a0[p], a1[p], a2[p], a3[p]);
        for l in 0..NR {
            c0[l] += x0 * bv[l];
            c1[l] += x1 * bv[l];
            c2[l] += x2 * bv[l];
            c3[l] += x3 * bv[l];
        }
    }
    for (r, out) in [c0, c1, c2, c3].iter().enumerate() {
        c[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(out);
    }
}

/// Accumulates the `rows × cols` block of `c` at (`i`, `j`). `b` is read as rows of
/// stride `ldb` starting at column `b_off`, NR values at a time.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn tile(
    a: &[&[f32]; MR],
    k: usize,
    b: &[f32],
    ldb: usize,
    b_off: usize,
    c: &mut [f32],
    ldc: usize,
    i: usize,
    j: usize,
    rows: usize,
    cols: usize,
) {
    let mut acc = [[0.0f32; NR]; MR];
    for r in 0..rows {
        acc[r][..cols].copy_from_slice(&c[(i + r) * ldc + j..(i + r) * ldc + j + cols]);
    }
    let [mut c0, mut c1, mut c2, mut c3] = acc;
    let [a0, a1, a2, a3] = *a;
    for p in 0..k {
        let bv: &[f32; NR] = b[p * ldb + b_off..p * ldb + b_off + NR].try_into().unwrap();
        let (x0, x1, x2, x3) = (a0[p], a1[p], a2[p], a3[p]);
        for l in 0..NR {
            c0[l] += x0 * bv[l];
            c1[l] += x1 * bv[l];
            c2[l] += x2 * bv[l];
            c3[l] += x3 * bv[l];
        }
    }
    for (r, out) in [c0, c1, c2, c3].iter().enumerate().take(rows) {
        c[(i + r) * ldc + j..(i + r) * ldc + j + cols].copy_from_slice(&out[..cols]);
    }
}

pub(crate) fn transpose(rows: usize, cols: usize, src: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f32> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0f32;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_exactly() {
        let (m, k, n) = (7, 13, 600);
        let a: Vec<f32> = (0..m * k).map(|i| ((i * 37 % 101) as f32 - 50.0) / 17.0).collect();
        let b: Vec<f32> = (0..k * n).map(|i| ((i * 53 % 97) as f32 - 48.0) / 13.0).collect();
        let mut c = vec![0.0; m * n];
        gemm_acc(m, k, n, &a, &b, &mut c);
        assert_eq!(c, naive(m, k, n, &a, &b));
    }

    #[test]
    fn tile_edges_and_existing_values() {
        for (m, k, n) in [(1, 1, 1), (4, 3, 8), (5, 9, 17), (9, 2, 7), (12, 31, 33)] {
            let a: Vec<f32> = (0..m * k).map(|i| (i % 7) as f32 * 0.3 - 1.0).collect();
            let b: Vec<f32> = (0..k * n).map(|i| (i % 5) as f32 * 0.7 - 1.4).collect();
            let mut c: Vec<f32> = (0..m * n).map(|i| i as f32 * 0.01).collect();
            let mut expect = c.clone();
            for i in 0..m {
                for j in 0..n {
                    let mut s = expect[i * n + j];
                    for p in 0..k {
                        s += a[i * k + p] * b[p * n + j];
                    }
                    expect[i * n + j] = s;
                }
            }
            gemm_acc(m, k, n, &a, &b, &mut c);
            assert_eq!(c, expect, "{m}x{k}x{n}");
        }
    }
}
