//! Value-level kernels shared by the autograd tape and the pure functional API.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How a (possibly batched) matrix product maps onto strided GEMM calls.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MatmulPlan {
    pub batch: usize,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    /// Element stride between batch entries of `a`; 0 when broadcast.
    pub a_bs: usize,
    pub b_bs: usize,
    pub out_shape: Vec<usize>,
}

impl MatmulPlan {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::shape("matmul", a, b));
        }
        let (ra, rb) = (a.len(), b.len());
        let (m, k) = (a[ra - 2], a[ra - 1]);
        let (k2, n) = (b[rb - 2], b[rb - 1]);
        if k != k2 {
            return Err(Error::shape("matmul", a, b));
        }
        let batch_a = &a[..ra - 2];
        let batch_b = &b[..rb - 2];
        let mut out_shape;
        let plan = if batch_a == batch_b {
            let batch = batch_a.iter().product();
            out_shape = batch_a.to_vec();
            MatmulPlan {
                batch,
                m,
                k,
                n,
                a_bs: m * k,
                b_bs: k * n,
                out_shape: Vec::new(),
            }
        } else if batch_b.is_empty() {
            // a's batch dims fold into its row count.
            out_shape = batch_a.to_vec();
            MatmulPlan {
                batch: 1,
                m: batch_a.iter().product::<usize>() * m,
                k,
                n,
                a_bs: 0,
                b_bs: 0,
                out_shape: Vec::new(),
            }
        } else if batch_a.is_empty() {
            out_shape = batch_b.to_vec();
            MatmulPlan {
                batch: batch_b.iter().product(),
                m,
                k,
                n,
                a_bs: 0,
                b_bs: k * n,
                out_shape: Vec::new(),
            }
        } else {
            return Err(Error::shape("matmul", a, b));
        };
        out_shape.push(m);
        out_shape.push(n);
        Ok(MatmulPlan { out_shape, ..plan })
    }

    /// Rows of the output matrix per batch entry.
    fn c_bs(&self) -> usize {
        self.m * self.n
    }
}

/// Strided batched GEMM. A batch stride of 0 broadcasts that operand; a zero
/// output batch stride accumulates every batch entry into the same matrix.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_batched<T: Scalar>(
    batch: usize,
    (m, k, n): (usize, usize, usize),
    a: &[T],
    a_strides: (isize, isize),
    a_bs: usize,
    b: &[T],
    b_strides: (isize, isize),
    b_bs: usize,
    c: &mut [T],
    c_bs: usize,
    beta: T,
) {
    for i in 0..batch {
        let a_off = i * a_bs;
        let b_off = i * b_bs;
        let c_off = i * c_bs;
        let beta_i = if c_bs == 0 && i > 0 { T::one() } else { beta };
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &a[a_off..],
            a_strides,
            &b[b_off..],
            b_strides,
            beta_i,
            &mut c[c_off..],
            (n as isize, 1),
        );
    }
}

/// Matrix product over the last two axes with leading batch dims that are
/// either equal or absent on one side.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let plan = MatmulPlan::new(a.shape(), b.shape())?;
    let mut out = Tensor::zeros(&plan.out_shape);
    matmul_into(&plan, a.data(), b.data(), out.data_mut());
    Ok(out)
}

pub(crate) fn matmul_into<T: Scalar>(plan: &MatmulPlan, a: &[T], b: &[T], c: &mut [T]) {
    let (m, k, n) = (plan.m, plan.k, plan.n);
    gemm_batched(
        plan.batch,
        (m, k, n),
        a,
        (k as isize, 1),
        plan.a_bs,
        b,
        (n as isize, 1),
        plan.b_bs,
        c,
        plan.c_bs(),
        T::zero(),
    );
}

/// Gradient of `a` given the output gradient `gc`.
pub(crate) fn matmul_grad_a<T: Scalar>(plan: &MatmulPlan, gc: &[T], b: &[T], ga: &mut [T]) {
    let (m, k, n) = (plan.m, plan.k, plan.n);
    // ga[m,k] = gc[m,n] . b^T ; b^T viewed from b[k,n] has strides (1, n).
    let ga_bs = if plan.a_bs == 0 && plan.batch > 1 { 0 } else { m * k };
    gemm_batched(
        plan.batch,
        (m, n, k),
        gc,
        (n as isize, 1),
        plan.c_bs(),
        b,
        (1, n as isize),
        plan.b_bs,
        ga,
        ga_bs,
        T::zero(),
    );
}

/// Gradient of `b` given the output gradient `gc`.
pub(crate) fn matmul_grad_b<T: Scalar>(plan: &MatmulPlan, a: &[T], gc: &[T], gb: &mut [T]) {
    let (m, k, n) = (plan.m, plan.k, plan.n);
    // gb[k,n] = a^T . gc ; a^T viewed from a[m,k] has strides (1, k).
    let gb_bs = if plan.b_bs == 0 && plan.batch > 1 { 0 } else { k * n };
    gemm_batched(
        plan.batch,
        (k, m, n),
        a,
        (1, k as isize),
        plan.a_bs,
        gc,
        (n as isize, 1),
        plan.c_bs(),
        gb,
        gb_bs,
        T::zero(),
    );
}

/// Reorder axes; `perm[i]` names the source axis of output axis `i`.
pub fn permute<T: Scalar>(x: &Tensor<T>, perm: &[usize]) -> Result<Tensor<T>> {
    let shape = x.shape();
    let rank = shape.len();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::shape("permute", shape, perm));
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let src = x.data();
    let mut out = Vec::with_capacity(x.len());
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..x.len() {
        out.push(src[offset]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            offset += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    Tensor::new(&out_shape, out)
}

pub(crate) fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Softmax over the last axis restricted to entries where `mask` is true.
///
/// Masked entries are excluded from the normalization and come out as exact
/// zeros. `mask` has one flag per element of `x`.
pub fn softmax_masked<T: Scalar>(x: &Tensor<T>, mask: &[bool]) -> Result<Tensor<T>> {
    if mask.len() != x.len() {
        return Err(Error::shape("softmax_masked", x.shape(), &[mask.len()]));
    }
    let n = x.last_dim();
    let mut out = vec![T::zero(); x.len()];
    for (row, ((xr, mr), or)) in x
        .data()
        .chunks(n)
        .zip(mask.chunks(n))
        .zip(out.chunks_mut(n))
        .enumerate()
    {
        let mut max = T::neg_infinity();
        let mut any = false;
        for (&v, &m) in xr.iter().zip(mr) {
            if m {
                any = true;
                if v > max {
                    max = v;
                }
            }
        }
        if !any {
            return Err(Error::DegenerateRow {
                op: "softmax_masked",
                row,
            });
        }
        let mut sum = T::zero();
        for ((&v, &m), o) in xr.iter().zip(mr).zip(or.iter_mut()) {
            if m {
                let e = (v - max).exp();
                *o = e;
                sum += e;
            }
        }
        let inv = T::one() / sum;
        for (o, &m) in or.iter_mut().zip(mr) {
            if m {
                *o *= inv;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

/// Per-row normalization statistics saved for the backward pass.
pub(crate) struct LayerNormCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gain: &[T],
    bias: &[T],
    eps: T,
) -> Result<(Tensor<T>, LayerNormCache<T>)> {
    let d = x.last_dim();
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape("layer_norm", x.shape(), &[gain.len(), bias.len()]));
    }
    let rows = x.len() / d.max(1);
    let inv_d = T::one() / T::of(d as f64);
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(rows);
    for ((xr, or), hr) in x
        .data()
        .chunks(d)
        .zip(out.chunks_mut(d))
        .zip(xhat.chunks_mut(d))
    {
        let mean = xr.iter().copied().sum::<T>() * inv_d;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd.push(r);
        for j in 0..d {
            let h = (xr[j] - mean) * r;
            hr[j] = h;
            or[j] = h * gain[j] + bias[j];
        }
    }
    Ok((Tensor::new(x.shape(), out)?, LayerNormCache { xhat, rstd }))
}

/// Numerically stable log-softmax of one row.
pub(crate) fn log_softmax_row<T: Scalar>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// Convolution along axis -2 of `x` viewed as `[groups, n, d]`.
///
/// Rows at or beyond `lens[g]` are treated as zero input. Taps with weight
/// exactly zero are skipped, and the remaining ones are accumulated in
/// increasing tap order.
pub(crate) fn conv_rows<T: Scalar>(x: &[T], n: usize, d: usize, lens: &[usize], kernel: &[T]) -> Vec<T> {
    let center = (kernel.len() / 2) as isize;
    let mut out = vec![T::zero(); x.len()];
    for (g, &len) in lens.iter().enumerate() {
        let base = g * n * d;
        for i in 0..n {
            let orow = &mut out[base + i * d..base + (i + 1) * d];
            for (t, &w) in kernel.iter().enumerate() {
                if w == T::zero() {
                    continue;
                }
                let j = i as isize + t as isize - center;
                if j < 0 || j as usize >= len.min(n) {
                    continue;
                }
                let xrow = &x[base + j as usize * d..base + (j as usize + 1) * d];
                for (o, &v) in orow.iter_mut().zip(xrow) {
                    *o += w * v;
                }
            }
        }
    }
    out
}

/// Row shift along axis -2: output row `i` copies input row `i + offset`,
/// or zeros when that row is outside `[0, lens[g])`.
pub(crate) fn shift_rows<T: Scalar>(x: &[T], n: usize, d: usize, lens: &[usize], offset: isize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (g, &len) in lens.iter().enumerate() {
        let base = g * n * d;
        for i in 0..n {
            let j = i as isize + offset;
            if j < 0 || j as usize >= len.min(n) {
                continue;
            }
            let j = j as usize;
            out[base + i * d..base + (i + 1) * d].copy_from_slice(&x[base + j * d..base + (j + 1) * d]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matmul_identity_and_dot() {
        let i2 = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let b = t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        assert_eq!(matmul(&i2, &b).unwrap().data(), &[3.0, 4.0, 5.0, 6.0]);
        let row = t(&[1, 2], &[1.0, 2.0]);
        let col = t(&[2, 1], &[3.0, 4.0]);
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn batched_and_broadcast_matmul_match_naive() {
        let a = Tensor::<f64>::from_fn(&[2, 3, 4], |i| (i as f64 * 0.37).sin());
        let b = Tensor::<f64>::from_fn(&[2, 4, 5], |i| (i as f64 * 0.11).cos());
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 3, 5]);
        for bi in 0..2 {
            let want = naive_matmul(&a.data()[bi * 12..], &b.data()[bi * 20..], 3, 4, 5);
            for (x, y) in c.data()[bi * 15..(bi + 1) * 15].iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let w = Tensor::<f64>::from_fn(&[4, 5], |i| i as f64 * 0.1);
        let c = matmul(&a, &w).unwrap();
        assert_eq!(c.shape(), &[2, 3, 5]);
        let want = naive_matmul(a.data(), w.data(), 6, 4, 5);
        for (x, y) in c.data().iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn permute_round_trip() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 4], |i| i as f64);
        let p = permute(&x, &[1, 0, 2]).unwrap();
        assert_eq!(p.shape(), &[3, 2, 4]);
        assert_eq!(p.get(&[2, 1, 3]), x.get(&[1, 2, 3]));
        let back = permute(&p, &inverse_perm(&[1, 0, 2])).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn softmax_examples() {
        let x = t(&[3], &[0.0, 0.0, 0.0]);
        let s = softmax_masked(&x, &[true; 3]).unwrap();
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let x = t(&[3], &[10.0, 0.0, -1e9]);
        let s = softmax_masked(&x, &[true, true, false]).unwrap();
        assert_eq!(s.data()[2], 0.0);
        assert!((s.data()[0] + s.data()[1] - 1.0).abs() < 1e-12);

        let x = t(&[3], &[1.0, 2.0, 3.0]);
        let s = softmax_masked(&x, &[true; 3]).unwrap();
        for (v, want) in s.data().iter().zip([0.09003, 0.24473, 0.66524]) {
            assert!((v - want).abs() < 1e-5);
        }
    }

    #[test]
    fn softmax_rejects_fully_masked_row() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let err = softmax_masked(&x, &[true, false, false, false]).unwrap_err();
        assert!(matches!(err, Error::DegenerateRow { row: 1, .. }));
    }

    #[test]
    fn layer_norm_examples() {
        let x = t(&[1, 3], &[2.0, 2.0, 2.0]);
        let (y, _) = layer_norm_forward(&x, &[1.0; 3], &[0.0; 3], 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let x = t(&[1, 2], &[1.0, 3.0]);
        let (y, _) = layer_norm_forward(&x, &[1.0; 2], &[0.0; 2], 1e-300).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conv_and_shift_agree_on_one_hot() {
        let x: Vec<f64> = (0..12).map(|i| i as f64 + 0.5).collect();
        let conv = conv_rows(&x, 4, 3, &[4], &[1.0, 0.0, 0.0]);
        let shift = shift_rows(&x, 4, 3, &[4], -1);
        assert_eq!(conv, shift);
        assert_eq!(&shift[0..3], &[0.0; 3]);
        assert_eq!(&shift[3..6], &x[0..3]);
    }
}
