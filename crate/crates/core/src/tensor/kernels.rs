//! Raw slice kernels shared by forward ops and backward closures.
//!
//! All kernels accumulate with `+=` into caller-provided buffers and keep a
//! fixed per-output accumulation order, so results are bitwise reproducible
//! run-to-run on the same machine. On x86-64 the matrix kernels are
//! recompiled with AVX2+FMA behind a runtime feature check.

use super::Elem;

macro_rules! simd_dispatch {
    ($portable:ident, $fast:ident, $name:ident, ($($arg:ident: $ty:ty),*)) => {
        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn $fast<T: Elem>($($arg: $ty),*) {
            $portable($($arg),*)
        }

        pub fn $name<T: Elem>($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            {
                if std::arch::is_x86_feature_detected!("avx2")
                    && std::arch::is_x86_feature_detected!("fma")
                {
                    // Same code, recompiled with vector features enabled.
                    unsafe { $fast($($arg),*) };
                    return;
                }
            }
            $portable($($arg),*)
        }
    };
}

/// out[m,n] += a[m,k] · b[k,n]
#[inline(always)]
fn mm_nn_body<T: Elem>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let k4 = k / 4 * 4;
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        let mut p = 0;
        while p < k4 {
            let (a0, a1, a2, a3) = (a_row[p], a_row[p + 1], a_row[p + 2], a_row[p + 3]);
            let b0 = &b[p * n..(p + 1) * n];
            let b1 = &b[(p + 1) * n..(p + 2) * n];
            let b2 = &b[(p + 2) * n..(p + 3) * n];
            let b3 = &b[(p + 3) * n..(p + 4) * n];
            for j in 0..n {
                out_row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            p += 4;
        }
        while p < k {
            let ap = a_row[p];
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += ap * b_row[j];
            }
            p += 1;
        }
    }
}

/// out[m,k] += a[m,n] · b[k,n]ᵀ  (rows of `a` dotted with rows of `b`)
#[inline(always)]
fn mm_nt_body<T: Elem>(a: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        let out_row = &mut out[i * k..(i + 1) * k];
        for j in 0..k {
            let b_row = &b[j * n..(j + 1) * n];
            let mut acc = T::ZERO;
            for p in 0..n {
                acc += a_row[p] * b_row[p];
            }
            out_row[j] += acc;
        }
    }
}

/// out[k,n] += a[m,k]ᵀ · b[m,n]
#[inline(always)]
fn mm_tn_body<T: Elem>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let m4 = m / 4 * 4;
    let mut i = 0;
    while i < m4 {
        for p in 0..k {
            let (a0, a1, a2, a3) = (
                a[i * k + p],
                a[(i + 1) * k + p],
                a[(i + 2) * k + p],
                a[(i + 3) * k + p],
            );
            let b0 = &b[i * n..(i + 1) * n];
            let b1 = &b[(i + 1) * n..(i + 2) * n];
            let b2 = &b[(i + 2) * n..(i + 3) * n];
            let b3 = &b[(i + 3) * n..(i + 4) * n];
            let out_row = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
        }
        i += 4;
    }
    while i < m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::ZERO {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += aip * b_row[j];
            }
        }
        i += 1;
    }
}

simd_dispatch!(mm_nn_body, mm_nn_fast, mm_nn, (a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize));
simd_dispatch!(mm_nt_body, mm_nt_fast, mm_nt, (a: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize));
simd_dispatch!(mm_tn_body, mm_tn_fast, mm_tn, (a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize));

/// Unfold one image [C,H,W] into columns [C·kh·kw, oh·ow] for convolution
/// with the given stride and zero padding.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Elem>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out: &mut [T],
) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    debug_assert_eq!(out.len(), c * kh * kw * oh * ow);
    let plane = oh * ow;
    for ci in 0..c {
        let x_plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * plane;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let out_row = &mut out[row + oy * ow..row + (oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        for v in out_row.iter_mut() {
                            *v = T::ZERO;
                        }
                        continue;
                    }
                    let x_row = &x_plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        out_row[ox] = if ix < 0 || ix >= w as isize {
                            T::ZERO
                        } else {
                            x_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Fold columns back onto an image, accumulating overlaps (adjoint of im2col).
#[allow(clippy::too_many_arguments)]
pub fn col2im_acc<T: Elem>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out: &mut [T],
) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    debug_assert_eq!(cols.len(), c * kh * kw * oh * ow);
    debug_assert_eq!(out.len(), c * h * w);
    let plane = oh * ow;
    for ci in 0..c {
        let out_plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * plane;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let cols_row = &cols[row + oy * ow..row + (oy + 1) * ow];
                    let out_row = &mut out_plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            out_row[ix as usize] += cols_row[ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm_variants_agree_with_reference() {
        let (m, k, n) = (7, 9, 6);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut c_ref = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c_ref[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        let mut c = vec![0.0; m * n];
        mm_nn(&a, &b, &mut c, m, k, n);
        for (x, y) in c.iter().zip(&c_ref) {
            assert!((x - y).abs() < 1e-12);
        }

        // a·bᵀ path: feed b transposed so the product matches c_ref.
        let mut bt = vec![0.0; k * n];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c2 = vec![0.0; m * n];
        mm_nt(&a, &bt, &mut c2, m, k, n);
        for (x, y) in c2.iter().zip(&c_ref) {
            assert!((x - y).abs() < 1e-12);
        }

        // aᵀ·b path.
        let mut at = vec![0.0; m * k];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c3 = vec![0.0; m * n];
        mm_tn(&at, &b, &mut c3, k, m, n);
        for (x, y) in c3.iter().zip(&c_ref) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        let (c, h, w, k, stride, pad) = (2, 5, 4, 3, 2, 1);
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.7).cos()).collect();
        let y: Vec<f64> = (0..c * k * k * oh * ow).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, c, h, w, k, k, stride, pad, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut folded = vec![0.0; x.len()];
        col2im_acc(&y, c, h, w, k, k, stride, pad, &mut folded);
        let rhs: f64 = folded.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
