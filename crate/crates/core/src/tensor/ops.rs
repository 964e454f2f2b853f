//! Differentiable tensor operations.
//!
//! Every op validates shapes, computes the result eagerly, and registers a
//! backward rule when an operand is traced. Binary elementwise ops broadcast
//! with trailing-dimension alignment.

use std::sync::Arc;

use super::kernels::{col2im_acc, im2col, mm_nn, mm_nt, mm_tn};
use super::{make_result, Elem, Tensor};
use crate::error::{Error, Result};

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Broadcast shape of `a` and `b` under trailing-dimension alignment.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return Err(Error::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
    }
    Ok(out)
}

/// Strides of `shape` right-aligned to `out_shape`; broadcast dims get 0.
fn aligned_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let strides = contiguous_strides(shape);
    let offset = out_shape.len() - shape.len();
    let mut out = vec![0; out_shape.len()];
    for i in 0..shape.len() {
        out[offset + i] = if shape[i] == 1 { 0 } else { strides[i] };
    }
    out
}

/// Row-major walk over `out_shape` maintaining offsets for two strided views.
fn for_each_bcast2(
    out_shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let numel: usize = out_shape.iter().product();
    if numel == 0 {
        return;
    }
    let rank = out_shape.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    for flat in 0..numel {
        f(flat, oa, ob);
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                oa += sa[d];
                ob += sb[d];
                break;
            }
            idx[d] = 0;
            oa -= sa[d] * (out_shape[d] - 1);
            ob -= sb[d] * (out_shape[d] - 1);
        }
    }
}

struct BinarySpec<T: Elem> {
    /// out = f(a, b)
    f: fn(T, T) -> T,
    /// d/da given (go, a, b)
    dfa: fn(T, T, T) -> T,
    /// d/db given (go, a, b)
    dfb: fn(T, T, T) -> T,
}

fn binary_op<T: Elem>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    spec: BinarySpec<T>,
) -> Result<Tensor<T>> {
    let out_shape = broadcast_shape(op, a.shape(), b.shape())?;
    let numel: usize = out_shape.iter().product();
    let mut data = vec![T::ZERO; numel];

    if a.shape() == b.shape() {
        for ((o, &x), &y) in data.iter_mut().zip(a.data()).zip(b.data()) {
            *o = (spec.f)(x, y);
        }
    } else {
        let sa = aligned_strides(a.shape(), &out_shape);
        let sb = aligned_strides(b.shape(), &out_shape);
        let (ad, bd) = (a.data(), b.data());
        for_each_bcast2(&out_shape, &sa, &sb, |flat, oa, ob| {
            data[flat] = (spec.f)(ad[oa], bd[ob]);
        });
    }

    let a_data = a.data_arc();
    let b_data = b.data_arc();
    let a_shape = a.shape().to_vec();
    let b_shape = b.shape().to_vec();
    let bw_shape = out_shape.clone();
    make_result(op, out_shape, Arc::new(data), &[a, b], move |go, sink| {
        let sa = aligned_strides(&a_shape, &bw_shape);
        let sb = aligned_strides(&b_shape, &bw_shape);
        if sink.wants(0) {
            let mut ga = vec![T::ZERO; a_data.len()];
            for_each_bcast2(&bw_shape, &sa, &sb, |flat, oa, ob| {
                ga[oa] += (spec.dfa)(go[flat], a_data[oa], b_data[ob]);
            });
            sink.accum(0, ga);
        }
        if sink.wants(1) {
            let mut gb = vec![T::ZERO; b_data.len()];
            for_each_bcast2(&bw_shape, &sa, &sb, |flat, oa, ob| {
                gb[ob] += (spec.dfb)(go[flat], a_data[oa], b_data[ob]);
            });
            sink.accum(1, gb);
        }
    })
}

fn unary_op<T: Elem>(
    op: &'static str,
    x: &Tensor<T>,
    f: impl Fn(T) -> T,
    df: impl Fn(T, T) -> T + Send + 'static, // (go, x) -> gx
) -> Result<Tensor<T>> {
    let data: Vec<T> = x.data().iter().map(|&v| f(v)).collect();
    let x_data = x.data_arc();
    make_result(op, x.shape().to_vec(), Arc::new(data), &[x], move |go, sink| {
        if sink.wants(0) {
            let gx: Vec<T> = go.iter().zip(x_data.iter()).map(|(&g, &v)| df(g, v)).collect();
            sink.accum(0, gx);
        }
    })
}

impl<T: Elem> Tensor<T> {
    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary_op(
            "add",
            self,
            rhs,
            BinarySpec {
                f: |a, b| a + b,
                dfa: |go, _, _| go,
                dfb: |go, _, _| go,
            },
        )
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary_op(
            "sub",
            self,
            rhs,
            BinarySpec {
                f: |a, b| a - b,
                dfa: |go, _, _| go,
                dfb: |go, _, _| -go,
            },
        )
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary_op(
            "mul",
            self,
            rhs,
            BinarySpec {
                f: |a, b| a * b,
                dfa: |go, _, b| go * b,
                dfb: |go, a, _| go * a,
            },
        )
    }

    pub fn div(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        binary_op(
            "div",
            self,
            rhs,
            BinarySpec {
                f: |a, b| a / b,
                dfa: |go, _, b| go / b,
                dfb: |go, a, b| -go * a / (b * b),
            },
        )
    }

    /// y = scale·x + shift
    pub fn affine(&self, scale: T, shift: T) -> Result<Tensor<T>> {
        unary_op("affine", self, |v| scale * v + shift, move |go, _| go * scale)
    }

    pub fn neg(&self) -> Result<Tensor<T>> {
        self.affine(-T::ONE, T::ZERO)
    }

    pub fn abs(&self) -> Result<Tensor<T>> {
        unary_op(
            "abs",
            self,
            |v| v.abs(),
            |go, v| {
                if v > T::ZERO {
                    go
                } else if v < T::ZERO {
                    -go
                } else {
                    T::ZERO
                }
            },
        )
    }

    pub fn relu(&self) -> Result<Tensor<T>> {
        unary_op(
            "relu",
            self,
            |v| v.max_with(T::ZERO),
            |go, v| if v > T::ZERO { go } else { T::ZERO },
        )
    }

    pub fn exp(&self) -> Result<Tensor<T>> {
        // Backward needs the output; capture it.
        let data: Arc<Vec<T>> = Arc::new(self.data().iter().map(|&v| v.exp()).collect());
        let y = data.clone();
        make_result("exp", self.shape().to_vec(), data, &[self], move |go, sink| {
            if sink.wants(0) {
                let gx: Vec<T> = go.iter().zip(y.iter()).map(|(&g, &v)| g * v).collect();
                sink.accum(0, gx);
            }
        })
    }

    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        let data: Arc<Vec<T>> = Arc::new(
            self.data()
                .iter()
                .map(|&v| T::ONE / (T::ONE + (-v).exp()))
                .collect(),
        );
        let y = data.clone();
        make_result("sigmoid", self.shape().to_vec(), data, &[self], move |go, sink| {
            if sink.wants(0) {
                let gx: Vec<T> = go
                    .iter()
                    .zip(y.iter())
                    .map(|(&g, &v)| g * v * (T::ONE - v))
                    .collect();
                sink.accum(0, gx);
            }
        })
    }

    /// Exact GELU: x·Φ(x) with the Gaussian CDF (no tanh approximation).
    pub fn gelu(&self) -> Result<Tensor<T>> {
        let half = T::from_f64(0.5);
        let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
        let inv_sqrt_2pi = T::from_f64(0.3989422804014327);
        unary_op(
            "gelu",
            self,
            move |v| v * half * (T::ONE + (v * inv_sqrt2).erf()),
            move |go, v| {
                let cdf = half * (T::ONE + (v * inv_sqrt2).erf());
                let pdf = inv_sqrt_2pi * (-half * v * v).exp();
                go * (cdf + v * pdf)
            },
        )
    }

    /// Clamp to [0, 1]. Inference-only: refuses traced inputs.
    pub fn clamp01(&self) -> Result<Tensor<T>> {
        if self.is_traced() {
            return Err(Error::invalid("clamp01", "clamp is an inference-only op"));
        }
        let data: Vec<T> = self
            .data()
            .iter()
            .map(|&v| v.max_with(T::ZERO).min_with(T::ONE))
            .collect();
        Tensor::from_vec(data, self.shape())
    }

    /// Batched matrix product `[..., m, k] × [..., k, n] → [..., m, n]`,
    /// broadcasting over batch dims.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (ash, bsh) = (self.shape(), rhs.shape());
        if ash.len() < 2 || bsh.len() < 2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ash.to_vec(),
                rhs: bsh.to_vec(),
            });
        }
        let (m, ka) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (kb, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ash.to_vec(),
                rhs: bsh.to_vec(),
            });
        }
        let k = ka;
        let batch_shape = broadcast_shape("matmul", &ash[..ash.len() - 2], &bsh[..bsh.len() - 2])?;
        let num_batches: usize = batch_shape.iter().product();
        let sa = aligned_strides(&ash[..ash.len() - 2], &batch_shape);
        let sb = aligned_strides(&bsh[..bsh.len() - 2], &batch_shape);

        let mut out_shape = batch_shape.clone();
        out_shape.push(m);
        out_shape.push(n);
        let mut data = vec![T::ZERO; num_batches * m * n];
        let (ad, bd) = (self.data(), rhs.data());
        for_each_bcast2(&batch_shape, &sa, &sb, |batch, oa, ob| {
            mm_nn(
                &ad[oa * m * k..oa * m * k + m * k],
                &bd[ob * k * n..ob * k * n + k * n],
                &mut data[batch * m * n..(batch + 1) * m * n],
                m,
                k,
                n,
            );
        });

        let a_data = self.data_arc();
        let b_data = rhs.data_arc();
        let bsh_v = batch_shape.clone();
        make_result("matmul", out_shape, Arc::new(data), &[self, rhs], move |go, sink| {
            if sink.wants(0) {
                let mut ga = vec![T::ZERO; a_data.len()];
                for_each_bcast2(&bsh_v, &sa, &sb, |batch, oa, ob| {
                    // dA = dC·Bᵀ
                    mm_nt(
                        &go[batch * m * n..(batch + 1) * m * n],
                        &b_data[ob * k * n..ob * k * n + k * n],
                        &mut ga[oa * m * k..oa * m * k + m * k],
                        m,
                        n,
                        k,
                    );
                });
                sink.accum(0, ga);
            }
            if sink.wants(1) {
                let mut gb = vec![T::ZERO; b_data.len()];
                for_each_bcast2(&bsh_v, &sa, &sb, |batch, oa, ob| {
                    // dB = Aᵀ·dC
                    mm_tn(
                        &a_data[oa * m * k..oa * m * k + m * k],
                        &go[batch * m * n..(batch + 1) * m * n],
                        &mut gb[ob * k * n..ob * k * n + k * n],
                        m,
                        k,
                        n,
                    );
                });
                sink.accum(1, gb);
            }
        })
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(Error::invalid(
                "softmax",
                format!("axis {} out of range for shape {:?}", axis, self.shape()),
            ));
        }
        let shape = self.shape();
        let len = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.data();
        let mut data = vec![T::ZERO; x.len()];
        for o in 0..outer {
            for j in 0..inner {
                let base = o * len * inner + j;
                let mut maxv = x[base];
                for i in 1..len {
                    maxv = maxv.max_with(x[base + i * inner]);
                }
                let mut sum = T::ZERO;
                for i in 0..len {
                    let e = (x[base + i * inner] - maxv).exp();
                    data[base + i * inner] = e;
                    sum += e;
                }
                for i in 0..len {
                    data[base + i * inner] = data[base + i * inner] / sum;
                }
            }
        }
        let data = Arc::new(data);
        let y = data.clone();
        make_result("softmax", shape.to_vec(), data, &[self], move |go, sink| {
            if sink.wants(0) {
                let mut gx = vec![T::ZERO; go.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let base = o * len * inner + j;
                        let mut dot = T::ZERO;
                        for i in 0..len {
                            let p = base + i * inner;
                            dot += go[p] * y[p];
                        }
                        for i in 0..len {
                            let p = base + i * inner;
                            gx[p] = y[p] * (go[p] - dot);
                        }
                    }
                }
                sink.accum(0, gx);
            }
        })
    }

    pub fn sum_all(&self) -> Result<Tensor<T>> {
        let total: T = self.data().iter().copied().sum();
        let n = self.numel();
        make_result("sum", vec![], Arc::new(vec![total]), &[self], move |go, sink| {
            if sink.wants(0) {
                sink.accum(0, vec![go[0]; n]);
            }
        })
    }

    pub fn mean_all(&self) -> Result<Tensor<T>> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::invalid("mean", "empty tensor"));
        }
        let scale = T::ONE / T::from_f64(n as f64);
        let total: T = self.data().iter().copied().sum();
        make_result(
            "mean",
            vec![],
            Arc::new(vec![total * scale]),
            &[self],
            move |go, sink| {
                if sink.wants(0) {
                    sink.accum(0, vec![go[0] * scale; n]);
                }
            },
        )
    }

    /// Sum over the given axes (removed from the result shape).
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let shape = self.shape();
        for &a in axes {
            if a >= shape.len() {
                return Err(Error::invalid("sum_axes", format!("axis {} out of range", a)));
            }
        }
        let reduced: Vec<bool> = (0..shape.len()).map(|d| axes.contains(&d)).collect();
        let out_shape: Vec<usize> = shape
            .iter()
            .zip(&reduced)
            .filter(|(_, &r)| !r)
            .map(|(&s, _)| s)
            .collect();
        // Stride of each input dim within the output (0 when reduced).
        let out_strides = contiguous_strides(&out_shape);
        let mut map_strides = vec![0usize; shape.len()];
        let mut oi = 0;
        for d in 0..shape.len() {
            if !reduced[d] {
                map_strides[d] = out_strides[oi];
                oi += 1;
            }
        }
        let out_numel: usize = out_shape.iter().product();
        let mut data = vec![T::ZERO; out_numel];
        let x = self.data();
        let zeros = vec![0usize; shape.len()];
        for_each_bcast2(shape, &map_strides, &zeros, |flat, off, _| {
            data[off] += x[flat];
        });
        let in_shape = shape.to_vec();
        make_result("sum_axes", out_shape, Arc::new(data), &[self], move |go, sink| {
            if sink.wants(0) {
                let mut gx = vec![T::ZERO; in_shape.iter().product()];
                let zeros = vec![0usize; in_shape.len()];
                for_each_bcast2(&in_shape, &map_strides, &zeros, |flat, off, _| {
                    gx[flat] = go[off];
                });
                sink.accum(0, gx);
            }
        })
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = new_shape.iter().product();
        if numel != self.numel() {
            return Err(Error::invalid(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape(), new_shape),
            ));
        }
        make_result(
            "reshape",
            new_shape.to_vec(),
            self.data_arc(),
            &[self],
            move |go, sink| {
                if sink.wants(0) {
                    sink.accum(0, go.to_vec());
                }
            },
        )
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<T>> {
        let shape = self.shape();
        if perm.len() != shape.len() {
            return Err(Error::invalid("permute", format!("perm {:?} vs rank {}", perm, shape.len())));
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::invalid("permute", format!("bad permutation {:?}", perm)));
            }
            seen[p] = true;
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let data = permute_raw(self.data(), shape, perm);
        let mut inv = vec![0usize; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let out_shape_bw = out_shape.clone();
        make_result("permute", out_shape, Arc::new(data), &[self], move |go, sink| {
            if sink.wants(0) {
                sink.accum(0, permute_raw(go, &out_shape_bw, &inv));
            }
        })
    }

    /// Slice `len` indices starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::invalid(
                "narrow",
                format!("axis {} range {}..{} on shape {:?}", axis, start, start + len, shape),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let extent = shape[axis];
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let mut data = vec![T::ZERO; outer * len * inner];
        let x = self.data();
        for o in 0..outer {
            let src = (o * extent + start) * inner;
            let dst = o * len * inner;
            data[dst..dst + len * inner].copy_from_slice(&x[src..src + len * inner]);
        }
        let in_numel = self.numel();
        make_result("narrow", out_shape, Arc::new(data), &[self], move |go, sink| {
            if sink.wants(0) {
                let mut gx = vec![T::ZERO; in_numel];
                for o in 0..outer {
                    let dst = (o * extent + start) * inner;
                    let src = o * len * inner;
                    gx[dst..dst + len * inner].copy_from_slice(&go[src..src + len * inner]);
                }
                sink.accum(0, gx);
            }
        })
    }

    /// Concatenate along `axis`; all other extents must match.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::invalid("concat", "no tensors given"));
        }
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(Error::invalid("concat", format!("axis {} out of range", axis)));
        }
        let mut total = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s.iter().enumerate().any(|(d, &e)| d != axis && e != first[d])
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.to_vec(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.to_vec();
        out_shape[axis] = total;
        let mut data = vec![T::ZERO; outer * total * inner];
        let mut offset = 0;
        let mut extents = Vec::with_capacity(parts.len());
        for p in parts {
            let e = p.shape()[axis];
            let pd = p.data();
            for o in 0..outer {
                let dst = (o * total + offset) * inner;
                let src = o * e * inner;
                data[dst..dst + e * inner].copy_from_slice(&pd[src..src + e * inner]);
            }
            offset += e;
            extents.push(e);
        }
        make_result("concat", out_shape, Arc::new(data), parts, move |go, sink| {
            let mut offset = 0;
            for (slot, &e) in extents.iter().enumerate() {
                if sink.wants(slot) {
                    let mut gp = vec![T::ZERO; outer * e * inner];
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        let dst = o * e * inner;
                        gp[dst..dst + e * inner].copy_from_slice(&go[src..src + e * inner]);
                    }
                    sink.accum(slot, gp);
                }
                offset += e;
            }
        })
    }

    /// Reflective padding of the two trailing spatial dims of an NCHW tensor.
    /// Mirrors without repeating the border row/column; each pad amount must
    /// be < the corresponding extent.
    pub fn pad_reflect2d(&self, top: usize, bottom: usize, left: usize, right: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() != 4 {
            return Err(Error::invalid("pad_reflect2d", format!("want rank 4, got {:?}", shape)));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if top.max(bottom) >= h || left.max(right) >= w {
            return Err(Error::invalid(
                "pad_reflect2d",
                format!("pad ({top},{bottom},{left},{right}) too large for {h}x{w}"),
            ));
        }
        let (oh, ow) = (h + top + bottom, w + left + right);
        let reflect = |i: isize, extent: usize| -> usize {
            let e = extent as isize;
            let mut v = i;
            if v < 0 {
                v = -v;
            }
            if v >= e {
                v = 2 * e - 2 - v;
            }
            v as usize
        };
        let mut ymap = Vec::with_capacity(oh);
        for oy in 0..oh {
            ymap.push(reflect(oy as isize - top as isize, h));
        }
        let mut xmap = Vec::with_capacity(ow);
        for ox in 0..ow {
            xmap.push(reflect(ox as isize - left as isize, w));
        }
        let x = self.data();
        let mut data = vec![T::ZERO; n * c * oh * ow];
        for p in 0..n * c {
            let src = &x[p * h * w..(p + 1) * h * w];
            let dst = &mut data[p * oh * ow..(p + 1) * oh * ow];
            for oy in 0..oh {
                let sy = ymap[oy] * w;
                for ox in 0..ow {
                    dst[oy * ow + ox] = src[sy + xmap[ox]];
                }
            }
        }
        let (ymap_b, xmap_b) = (ymap.clone(), xmap.clone());
        make_result(
            "pad_reflect2d",
            vec![n, c, oh, ow],
            Arc::new(data),
            &[self],
            move |go, sink| {
                if sink.wants(0) {
                    let mut gx = vec![T::ZERO; n * c * h * w];
                    for p in 0..n * c {
                        let dst = &mut gx[p * h * w..(p + 1) * h * w];
                        let src = &go[p * oh * ow..(p + 1) * oh * ow];
                        for oy in 0..oh {
                            let sy = ymap_b[oy] * w;
                            for ox in 0..ow {
                                dst[sy + xmap_b[ox]] += src[oy * ow + ox];
                            }
                        }
                    }
                    sink.accum(0, gx);
                }
            },
        )
    }

    /// Torus roll of two adjacent axes: `out[.., y, x, ..] = in[.., y-dy, x-dx, ..]`
    /// (indices mod extent).
    pub fn roll2d(&self, axis: usize, dy: isize, dx: isize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if axis + 1 >= shape.len() {
            return Err(Error::invalid("roll2d", format!("axes {},{} out of range", axis, axis + 1)));
        }
        let h = shape[axis];
        let w = shape[axis + 1];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 2..].iter().product();
        let modp = |v: isize, m: usize| -> usize {
            let m = m as isize;
            (((v % m) + m) % m) as usize
        };
        let x = self.data();
        let mut data = vec![T::ZERO; x.len()];
        for o in 0..outer {
            for y in 0..h {
                let sy = modp(y as isize - dy, h);
                for xx in 0..w {
                    let sx = modp(xx as isize - dx, w);
                    let dst = ((o * h + y) * w + xx) * inner;
                    let src = ((o * h + sy) * w + sx) * inner;
                    data[dst..dst + inner].copy_from_slice(&x[src..src + inner]);
                }
            }
        }
        let shape_v = shape.to_vec();
        make_result("roll2d", shape.to_vec(), Arc::new(data), &[self], move |go, sink| {
            if sink.wants(0) {
                let mut gx = vec![T::ZERO; go.len()];
                let h = shape_v[axis];
                let w = shape_v[axis + 1];
                for o in 0..outer {
                    for y in 0..h {
                        let sy = modp(y as isize - dy, h);
                        for xx in 0..w {
                            let sx = modp(xx as isize - dx, w);
                            let dst = ((o * h + y) * w + xx) * inner;
                            let src = ((o * h + sy) * w + sx) * inner;
                            gx[src..src + inner].copy_from_slice(&go[dst..dst + inner]);
                        }
                    }
                }
                sink.accum(0, gx);
            }
        })
    }

    /// Gather rows of a 2-D table: `out[i, :] = table[idx[i], :]`.
    pub fn index_select_rows(&self, idx: &[usize]) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(Error::invalid("index_select", format!("want rank 2 table, got {:?}", shape)));
        }
        let (rows, cols) = (shape[0], shape[1]);
        for &i in idx {
            if i >= rows {
                return Err(Error::invalid("index_select", format!("index {} >= {}", i, rows)));
            }
        }
        let x = self.data();
        let mut data = vec![T::ZERO; idx.len() * cols];
        for (o, &i) in idx.iter().enumerate() {
            data[o * cols..(o + 1) * cols].copy_from_slice(&x[i * cols..(i + 1) * cols]);
        }
        let idx_v: Vec<usize> = idx.to_vec();
        make_result(
            "index_select",
            vec![idx.len(), cols],
            Arc::new(data),
            &[self],
            move |go, sink| {
                if sink.wants(0) {
                    let mut gt = vec![T::ZERO; rows * cols];
                    for (o, &i) in idx_v.iter().enumerate() {
                        for j in 0..cols {
                            gt[i * cols + j] += go[o * cols + j];
                        }
                    }
                    sink.accum(0, gt);
                }
            },
        )
    }

    /// Nearest-neighbour ×2 spatial upsample of an NCHW tensor.
    pub fn upsample_nearest2x(&self) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() != 4 {
            return Err(Error::invalid("upsample", format!("want rank 4, got {:?}", shape)));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let x = self.data();
        let mut data = vec![T::ZERO; n * c * 4 * h * w];
        let (oh, ow) = (2 * h, 2 * w);
        for p in 0..n * c {
            let src = &x[p * h * w..(p + 1) * h * w];
            let dst = &mut data[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                let sy = (y / 2) * w;
                for xx in 0..ow {
                    dst[y * ow + xx] = src[sy + xx / 2];
                }
            }
        }
        make_result(
            "upsample_nearest2x",
            vec![n, c, oh, ow],
            Arc::new(data),
            &[self],
            move |go, sink| {
                if sink.wants(0) {
                    let mut gx = vec![T::ZERO; n * c * h * w];
                    for p in 0..n * c {
                        let dst = &mut gx[p * h * w..(p + 1) * h * w];
                        let src = &go[p * oh * ow..(p + 1) * oh * ow];
                        for y in 0..oh {
                            let sy = (y / 2) * w;
                            for xx in 0..ow {
                                dst[sy + xx / 2] += src[y * ow + xx];
                            }
                        }
                    }
                    sink.accum(0, gx);
                }
            },
        )
    }

    /// Depth-to-space: `[N, C·r², H, W] → [N, C, rH, rW]`.
    /// Output pixel (i·r+a, j·r+b) reads input channel c·r²+a·r+b.
    pub fn pixel_shuffle(&self, r: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() != 4 {
            return Err(Error::invalid("pixel_shuffle", format!("want rank 4, got {:?}", shape)));
        }
        let (n, cr2, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if r == 0 || cr2 % (r * r) != 0 {
            return Err(Error::invalid(
                "pixel_shuffle",
                format!("channels {} not divisible by r²={}", cr2, r * r),
            ));
        }
        let c = cr2 / (r * r);
        let x = self.data();
        let mut data = vec![T::ZERO; x.len()];
        let (oh, ow) = (h * r, w * r);
        for ni in 0..n {
            for ci in 0..c {
                for a in 0..r {
                    for b in 0..r {
                        let ic = ci * r * r + a * r + b;
                        let src_plane = &x[(ni * cr2 + ic) * h * w..(ni * cr2 + ic + 1) * h * w];
                        let dst_base = (ni * c + ci) * oh * ow;
                        for i in 0..h {
                            let dy = i * r + a;
                            for j in 0..w {
                                data[dst_base + dy * ow + j * r + b] = src_plane[i * w + j];
                            }
                        }
                    }
                }
            }
        }
        make_result(
            "pixel_shuffle",
            vec![n, c, oh, ow],
            Arc::new(data),
            &[self],
            move |go, sink| {
                if sink.wants(0) {
                    let mut gx = vec![T::ZERO; go.len()];
                    for ni in 0..n {
                        for ci in 0..c {
                            for a in 0..r {
                                for b in 0..r {
                                    let ic = ci * r * r + a * r + b;
                                    let dst_plane =
                                        &mut gx[(ni * cr2 + ic) * h * w..(ni * cr2 + ic + 1) * h * w];
                                    let src_base = (ni * c + ci) * oh * ow;
                                    for i in 0..h {
                                        let dy = i * r + a;
                                        for j in 0..w {
                                            dst_plane[i * w + j] = go[src_base + dy * ow + j * r + b];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    sink.accum(0, gx);
                }
            },
        )
    }

    /// Space-to-depth inverse of [`Tensor::pixel_shuffle`].
    pub fn pixel_unshuffle(&self, r: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() != 4 {
            return Err(Error::invalid("pixel_unshuffle", format!("want rank 4, got {:?}", shape)));
        }
        let (n, c, oh, ow) = (shape[0], shape[1], shape[2], shape[3]);
        if r == 0 || oh % r != 0 || ow % r != 0 {
            return Err(Error::invalid(
                "pixel_unshuffle",
                format!("spatial {}x{} not divisible by r={}", oh, ow, r),
            ));
        }
        let (h, w) = (oh / r, ow / r);
        let cr2 = c * r * r;
        let x = self.data();
        let mut data = vec![T::ZERO; x.len()];
        for ni in 0..n {
            for ci in 0..c {
                for a in 0..r {
                    for b in 0..r {
                        let oc = ci * r * r + a * r + b;
                        let dst_plane = &mut data[(ni * cr2 + oc) * h * w..(ni * cr2 + oc + 1) * h * w];
                        let src_base = (ni * c + ci) * oh * ow;
                        for i in 0..h {
                            let sy = i * r + a;
                            for j in 0..w {
                                dst_plane[i * w + j] = x[src_base + sy * ow + j * r + b];
                            }
                        }
                    }
                }
            }
        }
        make_result(
            "pixel_unshuffle",
            vec![n, cr2, h, w],
            Arc::new(data),
            &[self],
            move |go, sink| {
                if sink.wants(0) {
                    let mut gx = vec![T::ZERO; go.len()];
                    for ni in 0..n {
                        for ci in 0..c {
                            for a in 0..r {
                                for b in 0..r {
                                    let oc = ci * r * r + a * r + b;
                                    let src_plane = &go[(ni * cr2 + oc) * h * w..(ni * cr2 + oc + 1) * h * w];
                                    let dst_base = (ni * c + ci) * oh * ow;
                                    for i in 0..h {
                                        let sy = i * r + a;
                                        for j in 0..w {
                                            gx[dst_base + sy * ow + j * r + b] = src_plane[i * w + j];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    sink.accum(0, gx);
                }
            },
        )
    }

    /// Affine map over the last axis: `y[..., o] = Σ_i x[..., i]·w[i, o] + b[o]`.
    pub fn linear(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.is_empty() || ws.len() != 2 || xs[xs.len() - 1] != ws[0] {
            return Err(Error::ShapeMismatch {
                op: "linear",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        let din = ws[0];
        let dout = ws[1];
        if let Some(b) = bias {
            if b.shape() != [dout] {
                return Err(Error::ShapeMismatch {
                    op: "linear",
                    lhs: vec![dout],
                    rhs: b.shape().to_vec(),
                });
            }
        }
        let tokens = self.numel() / din;
        let mut data = vec![T::ZERO; tokens * dout];
        mm_nn(self.data(), weight.data(), &mut data, tokens, din, dout);
        if let Some(b) = bias {
            let bd = b.data();
            for t in 0..tokens {
                let row = &mut data[t * dout..(t + 1) * dout];
                for (o, &bv) in row.iter_mut().zip(bd) {
                    *o += bv;
                }
            }
        }
        let mut out_shape = xs.to_vec();
        *out_shape.last_mut().unwrap() = dout;

        let x_data = self.data_arc();
        let w_data = weight.data_arc();
        let inputs: Vec<&Tensor<T>> = match bias {
            Some(b) => vec![self, weight, b],
            None => vec![self, weight],
        };
        make_result("linear", out_shape, Arc::new(data), &inputs, move |go, sink| {
            if sink.wants(0) {
                let mut gx = vec![T::ZERO; x_data.len()];
                mm_nt(go, &w_data, &mut gx, tokens, dout, din);
                sink.accum(0, gx);
            }
            if sink.wants(1) {
                let mut gw = vec![T::ZERO; w_data.len()];
                mm_tn(&x_data, go, &mut gw, tokens, din, dout);
                sink.accum(1, gw);
            }
            if sink.wants(2) {
                let mut gb = vec![T::ZERO; dout];
                for t in 0..tokens {
                    for (g, &v) in gb.iter_mut().zip(&go[t * dout..(t + 1) * dout]) {
                        *g += v;
                    }
                }
                sink.accum(2, gb);
            }
        })
    }

    /// 2-D cross-correlation over NCHW input with zero padding.
    /// `weight` is `[Cout, Cin, kh, kw]`.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<T>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        let (n, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel {kh}x{kw} does not fit {h}x{w} with pad {pad}"),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d",
                    lhs: vec![cout],
                    rhs: b.shape().to_vec(),
                });
            }
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let plane = oh * ow;
        let patch = cin * kh * kw;

        let x = self.data();
        let wt = weight.data();
        let mut data = vec![T::ZERO; n * cout * plane];
        let mut cols = vec![T::ZERO; patch * plane];
        for ni in 0..n {
            im2col(&x[ni * cin * h * w..(ni + 1) * cin * h * w], cin, h, w, kh, kw, stride, pad, &mut cols);
            mm_nn(wt, &cols, &mut data[ni * cout * plane..(ni + 1) * cout * plane], cout, patch, plane);
        }
        if let Some(b) = bias {
            let bd = b.data();
            for ni in 0..n {
                for co in 0..cout {
                    let bv = bd[co];
                    let row = &mut data[(ni * cout + co) * plane..(ni * cout + co + 1) * plane];
                    for v in row.iter_mut() {
                        *v += bv;
                    }
                }
            }
        }

        let x_data = self.data_arc();
        let w_data = weight.data_arc();
        let inputs: Vec<&Tensor<T>> = match bias {
            Some(b) => vec![self, weight, b],
            None => vec![self, weight],
        };
        make_result(
            "conv2d",
            vec![n, cout, oh, ow],
            Arc::new(data),
            &inputs,
            move |go, sink| {
                let want_x = sink.wants(0);
                let want_w = sink.wants(1);
                let mut gx = if want_x { vec![T::ZERO; x_data.len()] } else { Vec::new() };
                let mut gw = if want_w { vec![T::ZERO; w_data.len()] } else { Vec::new() };
                if want_x || want_w {
                    let mut cols = vec![T::ZERO; patch * plane];
                    let mut dcols = vec![T::ZERO; patch * plane];
                    for ni in 0..n {
                        let go_n = &go[ni * cout * plane..(ni + 1) * cout * plane];
                        if want_w {
                            im2col(
                                &x_data[ni * cin * h * w..(ni + 1) * cin * h * w],
                                cin, h, w, kh, kw, stride, pad, &mut cols,
                            );
                            mm_nt(go_n, &cols, &mut gw, cout, plane, patch);
                        }
                        if want_x {
                            dcols.iter_mut().for_each(|v| *v = T::ZERO);
                            mm_tn(&w_data, go_n, &mut dcols, cout, patch, plane);
                            col2im_acc(
                                &dcols,
                                cin, h, w, kh, kw, stride, pad,
                                &mut gx[ni * cin * h * w..(ni + 1) * cin * h * w],
                            );
                        }
                    }
                }
                if want_x {
                    sink.accum(0, gx);
                }
                if want_w {
                    sink.accum(1, gw);
                }
                if sink.wants(2) {
                    let mut gb = vec![T::ZERO; cout];
                    for ni in 0..n {
                        for co in 0..cout {
                            let row = &go[(ni * cout + co) * plane..(ni * cout + co + 1) * plane];
                            gb[co] += row.iter().copied().sum();
                        }
                    }
                    sink.accum(2, gb);
                }
            },
        )
    }

    /// Layer normalization over the last axis with affine parameters.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let shape = self.shape();
        let d = *shape.last().ok_or_else(|| Error::invalid("layer_norm", "rank 0 input"))?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: vec![d],
                rhs: gamma.shape().to_vec(),
            });
        }
        let rows = self.numel() / d;
        let x = self.data();
        let g = gamma.data();
        let b = beta.data();
        let inv_d = T::ONE / T::from_f64(d as f64);
        let mut data = vec![T::ZERO; x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mut mean = T::ZERO;
            for &v in row {
                mean += v;
            }
            mean *= inv_d;
            let mut var = T::ZERO;
            for &v in row {
                let c = v - mean;
                var += c * c;
            }
            var *= inv_d;
            let inv_std = T::ONE / (var + eps).sqrt();
            let out = &mut data[r * d..(r + 1) * d];
            for i in 0..d {
                out[i] = (row[i] - mean) * inv_std * g[i] + b[i];
            }
        }

        let x_data = self.data_arc();
        let g_data = gamma.data_arc();
        make_result(
            "layer_norm",
            shape.to_vec(),
            Arc::new(data),
            &[self, gamma, beta],
            move |go, sink| {
                let want_x = sink.wants(0);
                let want_g = sink.wants(1);
                let want_b = sink.wants(2);
                let mut gx = if want_x { vec![T::ZERO; x_data.len()] } else { Vec::new() };
                let mut gg = if want_g { vec![T::ZERO; g_data.len()] } else { Vec::new() };
                let mut gb = if want_b { vec![T::ZERO; g_data.len()] } else { Vec::new() };
                for r in 0..rows {
                    let row = &x_data[r * d..(r + 1) * d];
                    let go_row = &go[r * d..(r + 1) * d];
                    let mut mean = T::ZERO;
                    for &v in row {
                        mean += v;
                    }
                    mean *= inv_d;
                    let mut var = T::ZERO;
                    for &v in row {
                        let c = v - mean;
                        var += c * c;
                    }
                    var *= inv_d;
                    let inv_std = T::ONE / (var + eps).sqrt();
                    if want_g || want_b {
                        for i in 0..d {
                            let xhat = (row[i] - mean) * inv_std;
                            if want_g {
                                gg[i] += go_row[i] * xhat;
                            }
                            if want_b {
                                gb[i] += go_row[i];
                            }
                        }
                    }
                    if want_x {
                        // dx = inv_std · (dxhat − mean(dxhat) − xhat·mean(dxhat⊙xhat))
                        let mut sum_dxhat = T::ZERO;
                        let mut sum_dxhat_xhat = T::ZERO;
                        for i in 0..d {
                            let xhat = (row[i] - mean) * inv_std;
                            let dxhat = go_row[i] * g_data[i];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                        }
                        sum_dxhat *= inv_d;
                        sum_dxhat_xhat *= inv_d;
                        let gx_row = &mut gx[r * d..(r + 1) * d];
                        for i in 0..d {
                            let xhat = (row[i] - mean) * inv_std;
                            let dxhat = go_row[i] * g_data[i];
                            gx_row[i] = inv_std * (dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
                        }
                    }
                }
                if want_x {
                    sink.accum(0, gx);
                }
                if want_g {
                    sink.accum(1, gg);
                }
                if want_b {
                    sink.accum(2, gb);
                }
            },
        )
    }

    /// Fused attention-score adjustment: `y = scale·x + bias + mask`, where
    /// `x` is `[B, heads, P, P]`, `bias` broadcasts over B, and the optional
    /// `mask` `[nw, P, P]` is applied per window (`w = b mod nw`). The mask is
    /// a constant; no gradient flows into it.
    pub fn attn_adjust(
        &self,
        scale: T,
        bias: Option<&Tensor<T>>,
        mask: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() != 4 {
            return Err(Error::invalid("attn_adjust", format!("want rank 4 scores, got {:?}", shape)));
        }
        let (bsz, heads, p1, p2) = (shape[0], shape[1], shape[2], shape[3]);
        if let Some(b) = bias {
            if b.shape() != [heads, p1, p2] {
                return Err(Error::ShapeMismatch {
                    op: "attn_adjust",
                    lhs: vec![heads, p1, p2],
                    rhs: b.shape().to_vec(),
                });
            }
        }
        let nw = if let Some(m) = mask {
            let ms = m.shape();
            if ms.len() != 3 || ms[1] != p1 || ms[2] != p2 || ms[0] == 0 || bsz % ms[0] != 0 {
                return Err(Error::ShapeMismatch {
                    op: "attn_adjust",
                    lhs: shape.to_vec(),
                    rhs: ms.to_vec(),
                });
            }
            ms[0]
        } else {
            1
        };
        let plane = p1 * p2;
        let x = self.data();
        let mut data = vec![T::ZERO; x.len()];
        let bias_data = bias.map(|b| b.data_arc());
        let mask_data = mask.map(|m| m.data_arc());
        for bi in 0..bsz {
            let m_off = (bi % nw) * plane;
            for hi in 0..heads {
                let base = (bi * heads + hi) * plane;
                let b_off = hi * plane;
                for i in 0..plane {
                    let mut v = scale * x[base + i];
                    if let Some(bd) = &bias_data {
                        v += bd[b_off + i];
                    }
                    if let Some(md) = &mask_data {
                        v += md[m_off + i];
                    }
                    data[base + i] = v;
                }
            }
        }
        let inputs: Vec<&Tensor<T>> = match bias {
            Some(b) => vec![self, b],
            None => vec![self],
        };
        let bias_len = bias.map(|b| b.numel()).unwrap_or(0);
        make_result("attn_adjust", shape.to_vec(), Arc::new(data), &inputs, move |go, sink| {
            if sink.wants(0) {
                let gx: Vec<T> = go.iter().map(|&g| g * scale).collect();
                sink.accum(0, gx);
            }
            if sink.wants(1) {
                let mut gb = vec![T::ZERO; bias_len];
                for bi in 0..bsz {
                    for hi in 0..heads {
                        let base = (bi * heads + hi) * plane;
                        let b_off = hi * plane;
                        for i in 0..plane {
                            gb[b_off + i] += go[base + i];
                        }
                    }
                }
                sink.accum(1, gb);
            }
        })
    }
}

fn permute_raw<T: Elem>(data: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = contiguous_strides(shape);
    // Stride to advance the source offset as each output dim increments.
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let numel: usize = shape.iter().product();
    let mut out = vec![T::ZERO; numel];
    if numel == 0 {
        return out;
    }
    let rank = out_shape.len();
    if rank == 0 {
        out[0] = data[0];
        return out;
    }
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for o in out.iter_mut() {
        *o = data[src];
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                src += src_strides[d];
                break;
            }
            idx[d] = 0;
            src -= src_strides[d] * (out_shape[d] - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn t64(data: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::from_vec(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn add_componentwise() {
        let a = t64(&[1.0, 2.0], &[2]);
        let b = t64(&[3.0, 4.0], &[2]);
        assert_eq!(a.add(&b).unwrap().to_vec(), vec![4.0, 6.0]);
    }

    #[test]
    fn scalar_mul_annihilator() {
        let a = t64(&[2.0, 3.0], &[2]);
        assert_eq!(a.affine(0.0, 0.0).unwrap().to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn broadcast_add_rows() {
        let a = t64(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let b = t64(&[10.0, 20.0, 30.0], &[3]);
        let y = a.add(&b).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert_eq!(y.to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    }

    #[test]
    fn broadcast_shape_mismatch_errors() {
        let a = t64(&[1.0, 2.0], &[2]);
        let b = t64(&[1.0, 2.0, 3.0], &[3]);
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn matmul_identity() {
        let i2 = t64(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let m = t64(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        assert_eq!(i2.matmul(&m).unwrap().to_vec(), m.to_vec());
    }

    #[test]
    fn matmul_hand_contraction() {
        let a = t64(&[1.0, 2.0], &[1, 2]);
        let b = t64(&[3.0, 4.0], &[2, 1]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![11.0]);
    }

    #[test]
    fn matmul_batched_shape() {
        let a = Tensor::<f64>::ones(&[2, 3, 4]);
        let b = Tensor::<f64>::ones(&[2, 4, 5]);
        assert_eq!(a.matmul(&b).unwrap().shape(), &[2, 3, 5]);
    }

    #[test]
    fn matmul_inner_mismatch_errors() {
        let a = Tensor::<f64>::ones(&[2, 3]);
        let b = Tensor::<f64>::ones(&[4, 5]);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn softmax_symmetry_and_shift_invariance() {
        let y = t64(&[0.0, 0.0], &[2]).softmax(0).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
        let y = t64(&[1000.0, 1000.0], &[2]).softmax(0).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_closed_form() {
        let y = t64(&[0.0, 3.0f64.ln()], &[2]).softmax(0).unwrap();
        assert!((y.data()[0] - 0.25).abs() < 1e-12);
        assert!((y.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn backward_sum_of_squares() {
        let tape = Tape::new();
        let x = tape.leaf(&t64(&[1.0, 2.0], &[2]));
        let loss = x.mul(&x).unwrap().sum_all().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).unwrap().to_vec(), vec![2.0, 4.0]);
    }

    #[test]
    fn backward_product_rule() {
        let tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(3.0f64));
        let y = tape.leaf(&Tensor::scalar(5.0f64));
        let loss = x.mul(&y).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).unwrap().item().unwrap(), 5.0);
        assert_eq!(grads.get(&y).unwrap().item().unwrap(), 3.0);
    }

    #[test]
    fn backward_twice_errors() {
        let tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(1.0f64));
        let loss = x.mul(&x).unwrap();
        tape.backward(&loss).unwrap();
        assert!(matches!(tape.backward(&loss), Err(crate::Error::TapeConsumed)));
    }

    #[test]
    fn backward_rejects_non_scalar_and_detached() {
        let tape = Tape::new();
        let x = tape.leaf(&t64(&[1.0, 2.0], &[2]));
        assert!(matches!(
            tape.backward(&x),
            Err(crate::Error::NonScalarRoot { .. })
        ));
        let free = Tensor::scalar(1.0f64);
        assert!(matches!(tape.backward(&free), Err(crate::Error::DetachedRoot)));
    }

    #[test]
    fn non_finite_is_surfaced() {
        let a = t64(&[1.0], &[1]);
        let b = t64(&[0.0], &[1]);
        assert!(matches!(a.div(&b), Err(crate::Error::NonFinite { .. })));
    }

    #[test]
    fn pixel_shuffle_unrolled_and_roundtrip() {
        let x = Tensor::from_vec(vec![1.0f64, 2.0, 3.0, 4.0], &[1, 4, 1, 1]).unwrap();
        let y = x.pixel_shuffle(2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        let back = y.pixel_unshuffle(2).unwrap();
        assert_eq!(back.to_vec(), x.to_vec());

        // r = 1 is the identity.
        let z = y.pixel_shuffle(1).unwrap();
        assert_eq!(z.to_vec(), y.to_vec());
    }

    #[test]
    fn roll_hand_example() {
        let x = Tensor::from_vec(vec![1.0f64, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        // cyclic shift by (1,1) = torus roll by (−1,−1)
        let y = x.roll2d(2, -1, -1).unwrap();
        assert_eq!(y.to_vec(), vec![4.0, 3.0, 2.0, 1.0]);
        let back = y.roll2d(2, 1, 1).unwrap();
        assert_eq!(back.to_vec(), x.to_vec());
    }

    #[test]
    fn concat_narrow_roundtrip() {
        let a = t64(&[1.0, 2.0], &[1, 2]);
        let b = t64(&[3.0, 4.0, 5.0, 6.0], &[2, 2]);
        let y = Tensor::concat(&[&a, &b], 0).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.narrow(0, 0, 1).unwrap().to_vec(), a.to_vec());
        assert_eq!(y.narrow(0, 1, 2).unwrap().to_vec(), b.to_vec());
    }

    #[test]
    fn pad_reflect_matches_hand() {
        let x = Tensor::from_vec(vec![1.0f64, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let y = x.pad_reflect2d(0, 1, 0, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        // rows: [1 2 1; 3 4 3; 1 2 1]
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 1.0, 3.0, 4.0, 3.0, 1.0, 2.0, 1.0]);
    }
}
