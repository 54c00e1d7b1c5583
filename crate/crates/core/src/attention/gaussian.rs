//! Input-agnostic Gaussian attention.
//!
//! A hard-coded head attends from query position `i` with weights given by
//! the normal density `N(center, sigma^2)` evaluated at each key position.
//! Weights outside the sentence (or at masked / future keys) are dropped and
//! the row is *not* renormalized.

use crate::attention::spec::{CenterMode, IndexBase, Truncation};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Density of `N(0, sigma^2)` at distance `x`, i.e. `pdf(x / sigma) / sigma`.
pub fn gaussian_weight(x: f64, sigma: f64) -> f64 {
    std_normal_pdf(x / sigma) / sigma
}

/// One row of hard-coded attention weights over the keys.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRow<T> {
    pub weights: Vec<T>,
    pub query_pos: usize,
    pub center: isize,
}

impl<T: Scalar> GaussianRow<T> {
    /// Zero every weight further than `w / 2` positions from the center.
    pub fn windowed(mut self, window: usize) -> Self {
        let radius = (window / 2) as isize;
        for (j, w) in self.weights.iter_mut().enumerate() {
            if (j as isize - self.center).abs() > radius {
                *w = T::zero();
            }
        }
        self
    }

    fn truncated(self, truncation: Truncation) -> Self {
        match truncation {
            Truncation::Full => self,
            Truncation::Window(w) => self.windowed(w),
        }
    }

    /// Index of the largest weight; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        argmax(&self.weights)
    }
}

pub(crate) fn argmax<T: Scalar>(row: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (j, &w) in row.iter().enumerate() {
        match best {
            Some((_, b)) if w <= b => {}
            _ => best = Some((j, w)),
        }
    }
    best.map(|(j, _)| j)
}

/// Gaussian weights of query `query_pos` over `key_len` keys.
///
/// `center` may lie outside `[0, key_len)`; only the tail inside the
/// sentence survives. Keys where `key_mask` is false, and keys after the
/// query when `causal`, get exactly zero.
pub fn gaussian_row<T: Scalar>(
    query_pos: usize,
    key_len: usize,
    center: isize,
    sigma: f64,
    causal: bool,
    key_mask: Option<&[bool]>,
) -> GaussianRow<T> {
    let weights = (0..key_len)
        .map(|j| {
            let masked = key_mask.is_some_and(|m| !m[j]);
            if masked || (causal && j > query_pos) {
                T::zero()
            } else {
                T::of(gaussian_weight(j as f64 - center as f64, sigma))
            }
        })
        .collect();
    GaussianRow {
        weights,
        query_pos,
        center,
    }
}

/// Weight rows of every head of a hard-coded self-attention layer, shaped
/// `[heads, n, n]`.
pub fn hard_self_weights<T: Scalar>(
    n: usize,
    offsets: &[i64],
    sigma: f64,
    truncation: Truncation,
    causal: bool,
    key_mask: Option<&[bool]>,
) -> Result<Tensor<T>> {
    if causal && offsets.iter().any(|&o| o > 0) {
        return Err(Error::config("causal hard-coded attention cannot use offset +1"));
    }
    let mut data = Vec::with_capacity(offsets.len() * n * n);
    for &o in offsets {
        for i in 0..n {
            let row = gaussian_row::<T>(i, n, i as isize + o as isize, sigma, causal, key_mask).truncated(truncation);
            data.extend(row.weights);
        }
    }
    Tensor::new(&[offsets.len(), n, n], data)
}

/// Apply per-head weight rows `[heads, nq, nk]` to values `[nk, d]`; head
/// `k` reads channel slice `k * d / heads ..`. Nonzero weights are
/// accumulated in increasing key order.
fn apply_head_weights<T: Scalar>(weights: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    let (heads, nq, nk) = (weights.shape()[0], weights.shape()[1], weights.shape()[2]);
    if v.rank() != 2 || v.shape()[0] != nk {
        return Err(Error::shape("hard attention", weights.shape(), v.shape()));
    }
    let d = v.shape()[1];
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::config(format!("value width {d} is not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let mut out = vec![T::zero(); nq * d];
    for h in 0..heads {
        for i in 0..nq {
            let row = &weights.data()[(h * nq + i) * nk..(h * nq + i + 1) * nk];
            let orow = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
            for (j, &w) in row.iter().enumerate() {
                if w == T::zero() {
                    continue;
                }
                for (o, &x) in orow.iter_mut().zip(&v.row(j)[h * dh..(h + 1) * dh]) {
                    *o += w * x;
                }
            }
        }
    }
    Tensor::new(&[nq, d], out)
}

/// Hard-coded self-attention over (already projected) values `v: [n, d]`.
///
/// Head `k` uses offset `offsets[k]`: output row `i` of that head is
/// `sum_j gaussian_row(i, n, i + offsets[k])_j * v_j` over its channel slice.
pub fn hard_self_attention<T: Scalar>(
    v: &Tensor<T>,
    offsets: &[i64],
    sigma: f64,
    truncation: Truncation,
    causal: bool,
    key_mask: Option<&[bool]>,
) -> Result<Tensor<T>> {
    if v.rank() != 2 {
        return Err(Error::Rank {
            op: "hard_self_attention",
            expected: 2,
            shape: v.shape().to_vec(),
        });
    }
    let weights = hard_self_weights(v.shape()[0], offsets, sigma, truncation, causal, key_mask)?;
    apply_head_weights(&weights, v)
}

/// The three Gaussian centers `floor(gamma*i - 1)`, `floor(gamma*i)`,
/// `floor(gamma*i + 1)` for target position `i` (0-based), clamped into the
/// source sentence.
pub fn cross_centers(i: usize, gamma: f64, src_len: usize) -> (usize, usize, usize) {
    let c = |o: i64| cross_center(i, gamma, o, src_len, CenterMode::Clamp, IndexBase::Zero) as usize;
    (c(-1), c(0), c(1))
}

/// Center of a cross-attention head with offset `offset` at target `i`,
/// returned as a 0-based source index.
pub fn cross_center(i: usize, gamma: f64, offset: i64, src_len: usize, mode: CenterMode, base: IndexBase) -> isize {
    let raw = match base {
        IndexBase::Zero => (gamma * i as f64 + offset as f64).floor() as isize,
        IndexBase::One => (gamma * (i + 1) as f64 + offset as f64).floor() as isize - 1,
    };
    match mode {
        CenterMode::Clamp => raw.clamp(0, src_len.saturating_sub(1) as isize),
        CenterMode::Truncate => raw,
    }
}

/// Parameters of a hard-coded cross-attention layer with a resolved ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossGeometry<'a> {
    pub offsets: &'a [i64],
    pub sigma: f64,
    pub gamma: f64,
    pub center_mode: CenterMode,
    pub index_base: IndexBase,
}

/// Cross-attention weight rows `[heads, tgt_len, n_src]`. The source length
/// used for clamping is the number of unmasked source positions.
pub fn hard_cross_weights<T: Scalar>(
    geometry: &CrossGeometry<'_>,
    tgt_len: usize,
    n_src: usize,
    src_mask: Option<&[bool]>,
) -> Result<Tensor<T>> {
    let valid = src_mask.map_or(n_src, |m| m.iter().filter(|&&b| b).count());
    if n_src == 0 || valid == 0 {
        return Err(Error::EmptySource);
    }
    let heads = geometry.offsets.len();
    let mut data = Vec::with_capacity(heads * tgt_len * n_src);
    for &o in geometry.offsets {
        for i in 0..tgt_len {
            let center = cross_center(i, geometry.gamma, o, valid, geometry.center_mode, geometry.index_base);
            let row = gaussian_row::<T>(i, n_src, center, geometry.sigma, false, src_mask);
            data.extend(row.weights);
        }
    }
    Tensor::new(&[heads, tgt_len, n_src], data)
}

/// Hard-coded cross attention: every target position attends over the
/// source values `v_src: [n_src, d]` with Gaussians placed by the length
/// ratio. Never causal.
pub fn hard_cross_attention<T: Scalar>(
    v_src: &Tensor<T>,
    tgt_len: usize,
    geometry: &CrossGeometry<'_>,
    src_mask: Option<&[bool]>,
) -> Result<Tensor<T>> {
    if v_src.rank() != 2 {
        return Err(Error::Rank {
            op: "hard_cross_attention",
            expected: 2,
            shape: v_src.shape().to_vec(),
        });
    }
    let weights = hard_cross_weights(geometry, tgt_len, v_src.shape()[0], src_mask)?;
    apply_head_weights(&weights, v_src)
}

/// Offsets of `heads` cross heads assigned round-robin to (left, mid, right).
pub fn round_robin_cross_offsets(heads: usize) -> Vec<i64> {
    [-1, 0, 1].iter().copied().cycle().take(heads).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn centered_row_matches_reference_values() {
        let row = gaussian_row::<f64>(2, 5, 2, 1.0, false, None);
        close(&row.weights, &[0.054, 0.242, 0.399, 0.242, 0.054], 5e-4);
    }

    #[test]
    fn border_row_is_truncated_not_renormalized() {
        let row = gaussian_row::<f64>(0, 3, 0, 1.0, false, None);
        close(&row.weights, &[0.3989, 0.2420, 0.0540], 1e-4);
        assert!(row.weights.iter().sum::<f64>() < 1.0);
    }

    #[test]
    fn causal_row_zeroes_future() {
        let row = gaussian_row::<f64>(1, 4, 1, 1.0, true, None);
        close(&row.weights, &[0.2420, 0.3989, 0.0, 0.0], 1e-4);
        assert_eq!(row.weights[2], 0.0);
        assert_eq!(row.weights[3], 0.0);
    }

    #[test]
    fn sigma_scales_density() {
        let row = gaussian_row::<f64>(0, 1, 0, 2.0, false, None);
        assert!((row.weights[0] - std_normal_pdf(0.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn identity_values_expose_weights() {
        let n = 5;
        let v = Tensor::<f64>::from_fn(&[n, n], |k| if k / n == k % n { 1.0 } else { 0.0 });
        let out = hard_self_attention(&v, &[0], 1.0, Truncation::Full, false, None).unwrap();
        close(out.row(2), &[0.054, 0.242, 0.399, 0.242, 0.054], 5e-4);
    }

    #[test]
    fn left_offset_at_first_row() {
        let w = hard_self_weights::<f64>(3, &[-1], 1.0, Truncation::Full, false, None).unwrap();
        close(&w.data()[0..3], &[0.2420, 0.0540, 0.0044], 1e-4);
    }

    #[test]
    fn weights_do_not_depend_on_values() {
        let a = Tensor::<f64>::from_fn(&[6, 4], |i| (i as f64 * 1.3).sin());
        let b = Tensor::<f64>::from_fn(&[6, 4], |i| (i as f64 * 0.7).cos() * 5.0);
        let wa = hard_self_weights::<f64>(a.shape()[0], &[-1, 1], 1.0, Truncation::Full, false, None).unwrap();
        let wb = hard_self_weights::<f64>(b.shape()[0], &[-1, 1], 1.0, Truncation::Full, false, None).unwrap();
        assert_eq!(wa, wb);
    }

    #[test]
    fn causal_future_offset_is_config_error() {
        let v = Tensor::<f64>::zeros(&[3, 2]);
        assert!(matches!(
            hard_self_attention(&v, &[1], 1.0, Truncation::Full, true, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cross_center_examples() {
        assert_eq!(cross_centers(6, 0.5, 10), (2, 3, 4));
        assert_eq!(cross_centers(0, 1.0, 8), (0, 0, 1));
        assert_eq!(cross_centers(10, 28.5 / 29.6, 40), (8, 9, 10));
        // clamped at the right border
        assert_eq!(cross_centers(9, 1.0, 10), (8, 9, 9));
        assert_eq!(cross_center(0, 1.0, -1, 8, CenterMode::Truncate, IndexBase::Zero), -1);
        assert_eq!(cross_center(0, 1.0, 0, 8, CenterMode::Clamp, IndexBase::One), 0);
        assert_eq!(cross_center(3, 0.5, 0, 8, CenterMode::Clamp, IndexBase::One), 1);
    }

    #[test]
    fn unit_ratio_cross_matches_diagonal_self_attention() {
        let n = 6;
        let geometry = CrossGeometry {
            offsets: &[0],
            sigma: 1.0,
            gamma: 1.0,
            center_mode: CenterMode::Clamp,
            index_base: IndexBase::Zero,
        };
        let cross = hard_cross_weights::<f64>(&geometry, n, n, None).unwrap();
        let own = hard_self_weights::<f64>(n, &[0], 1.0, Truncation::Full, false, None).unwrap();
        assert_eq!(cross, own);
    }

    #[test]
    fn half_ratio_pairs_target_rows() {
        let geometry = CrossGeometry {
            offsets: &[0],
            sigma: 1.0,
            gamma: 0.5,
            center_mode: CenterMode::Clamp,
            index_base: IndexBase::Zero,
        };
        let w = hard_cross_weights::<f64>(&geometry, 8, 4, None).unwrap();
        for i in 0..4 {
            assert_eq!(w.row(2 * i), w.row(2 * i + 1));
            assert_eq!(argmax(w.row(2 * i)), Some(i));
        }
    }

    #[test]
    fn masked_source_gets_zero_weight() {
        let geometry = CrossGeometry {
            offsets: &[-1, 0, 1],
            sigma: 1.0,
            gamma: 1.0,
            center_mode: CenterMode::Clamp,
            index_base: IndexBase::Zero,
        };
        let v = Tensor::<f64>::full(&[5, 3], 1.0);
        let mask = [true, true, true, false, false];
        let w = hard_cross_weights::<f64>(&geometry, 4, 5, Some(&mask)).unwrap();
        for row in w.rows() {
            assert_eq!(row[3], 0.0);
            assert_eq!(row[4], 0.0);
        }
        let out = hard_cross_attention(&v, 4, &geometry, Some(&mask)).unwrap();
        assert_eq!(out.shape(), &[4, 3]);
    }

    #[test]
    fn empty_source_is_error() {
        let geometry = CrossGeometry {
            offsets: &[0],
            sigma: 1.0,
            gamma: 1.0,
            center_mode: CenterMode::Clamp,
            index_base: IndexBase::Zero,
        };
        let v = Tensor::<f64>::zeros(&[0, 2]);
        assert!(matches!(hard_cross_attention(&v, 3, &geometry, None), Err(Error::EmptySource)));
    }

    #[test]
    fn round_robin_assignment() {
        assert_eq!(round_robin_cross_offsets(4), vec![-1, 0, 1, -1]);
        assert_eq!(round_robin_cross_offsets(2), vec![-1, 0]);
    }
}
