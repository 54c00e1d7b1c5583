use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `softmax(q k^T / sqrt(dk)) v` over the last two axes.
///
/// `q: [.., m, dk]`, `k: [.., n, dk]`, `v: [.., n, dv]`. `mask` holds either
/// one `[m, n]` pattern shared by every leading index or one flag per score.
/// Returns the attended values and the attention weights.
pub fn scaled_dot_attention<'t, T: Scalar>(
    q: &Var<'t, T>,
    k: &Var<'t, T>,
    v: &Var<'t, T>,
    mask: &[bool],
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let qs = q.shape();
    let ks = k.shape();
    let r = qs.len();
    if r < 2 || ks.len() != r || qs[r - 1] != ks[r - 1] {
        return Err(Error::shape("scaled_dot_attention", &qs, &ks));
    }
    let dk = qs[r - 1];
    if dk == 0 {
        return Err(Error::shape("scaled_dot_attention", &qs, &ks));
    }
    let mut perm: Vec<usize> = (0..r).collect();
    perm.swap(r - 2, r - 1);
    let kt = k.permute(&perm)?;
    let scores = q.matmul(&kt)?.scale(T::one() / T::of(dk as f64).sqrt());
    let total: usize = scores.shape().iter().product();
    let (m, n) = (qs[r - 2], ks[r - 2]);
    let weights = if mask.len() == total {
        scores.softmax_masked(mask)?
    } else if mask.len() == m * n {
        let full: Vec<bool> = mask.iter().copied().cycle().take(total).collect();
        scores.softmax_masked(&full)?
    } else {
        return Err(Error::shape("scaled_dot_attention mask", &scores.shape(), &[mask.len()]));
    };
    let out = weights.matmul(v)?;
    Ok((out, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::tensor::Tensor;

    #[test]
    fn zero_queries_give_uniform_weights() {
        let tape = Tape::<f64>::new();
        let q = tape.leaf(Tensor::zeros(&[1, 2, 3]), true);
        let k = tape.leaf(Tensor::from_fn(&[1, 4, 3], |i| i as f64), true);
        let v = tape.leaf(Tensor::from_fn(&[1, 4, 2], |i| i as f64), true);
        let mask = [true, true, true, false, true, true, true, false];
        let (_, w) = scaled_dot_attention(&q, &k, &v, &mask).unwrap();
        let w = w.value();
        for row in w.rows() {
            for &x in &row[..3] {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
            assert_eq!(row[3], 0.0);
        }
    }

    #[test]
    fn saturated_query_selects_matching_key() {
        let tape = Tape::<f64>::new();
        // orthonormal keys, query = 1e3 * key 0
        let k = tape.leaf(Tensor::from_f64(&[1, 3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap(), false);
        let q = tape.leaf(Tensor::from_f64(&[1, 1, 3], &[1e3, 0., 0.]).unwrap(), false);
        let v = tape.leaf(Tensor::from_f64(&[1, 3, 1], &[5., 6., 7.]).unwrap(), false);
        let (out, w) = scaled_dot_attention(&q, &k, &v, &[true; 3]).unwrap();
        assert!((w.value().data()[0] - 1.0).abs() < 1e-12);
        assert!((out.value().item() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn fully_masked_row_is_error() {
        let tape = Tape::<f64>::new();
        let q = tape.leaf(Tensor::zeros(&[1, 1, 2]), false);
        let k = tape.leaf(Tensor::zeros(&[1, 2, 2]), false);
        let v = tape.leaf(Tensor::zeros(&[1, 2, 2]), false);
        assert!(matches!(
            scaled_dot_attention(&q, &k, &v, &[false, false]),
            Err(Error::DegenerateRow { .. })
        ));
    }
}
