//! Weight-window and weight-free variants of hard-coded self-attention.

use crate::attention::gaussian::gaussian_weight;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ops::{conv_rows, shift_rows};
use crate::tensor::Tensor;

fn check_values<T: Scalar>(v: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    if v.rank() != 2 {
        return Err(Error::Rank {
            op,
            expected: 2,
            shape: v.shape().to_vec(),
        });
    }
    Ok((v.shape()[0], v.shape()[1]))
}

/// Kernel with taps reaching future positions set to zero.
pub fn causal_kernel(kernel: &[f64]) -> Vec<f64> {
    let center = kernel.len() / 2;
    kernel
        .iter()
        .enumerate()
        .map(|(t, &w)| if t > center { 0.0 } else { w })
        .collect()
}

/// Convolve `v: [n, d]` along the sequence axis with an odd-length kernel
/// shared by all channels. Positions outside the sequence are zero.
pub fn conv_attention<T: Scalar>(v: &Tensor<T>, kernel: &[f64], causal: bool) -> Result<Tensor<T>> {
    let (n, d) = check_values(v, "conv_attention")?;
    if kernel.len().is_multiple_of(2) {
        return Err(Error::config(format!("convolution kernel length {} is even", kernel.len())));
    }
    let k = if causal { causal_kernel(kernel) } else { kernel.to_vec() };
    let k: Vec<T> = k.into_iter().map(T::of).collect();
    Tensor::new(v.shape(), conv_rows(v.data(), n, d, &[n], &k))
}

/// Output row `i` is `v[i + offset]`, or a zero row when out of range.
pub fn index_attention<T: Scalar>(v: &Tensor<T>, offset: i64) -> Result<Tensor<T>> {
    let (n, d) = check_values(v, "index_attention")?;
    Tensor::new(v.shape(), shift_rows(v.data(), n, d, &[n], offset as isize))
}

/// Kernel of length `2 * radius + 1` with a single one at `offset`.
pub fn one_hot_kernel(offset: i64, radius: usize) -> Vec<f64> {
    assert!(offset.unsigned_abs() as usize <= radius, "offset outside kernel");
    let mut k = vec![0.0; 2 * radius + 1];
    k[(radius as i64 + offset) as usize] = 1.0;
    k
}

/// Gaussian kernel of odd width `window` centered on the query.
pub fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let r = (window / 2) as f64;
    (0..window).map(|t| gaussian_weight(t as f64 - r, sigma)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Tensor<f64> {
        Tensor::from_fn(&[n, n], |k| if k / n == k % n { 1.0 } else { 0.0 })
    }

    #[test]
    fn delta_kernel_is_identity() {
        let v = Tensor::<f64>::from_fn(&[4, 3], |i| i as f64 * 0.25 - 1.0);
        assert_eq!(conv_attention(&v, &[0.0, 1.0, 0.0], false).unwrap(), v);
    }

    #[test]
    fn window_kernel_row() {
        let out = conv_attention(&identity(5), &[0.242, 0.399, 0.242], false).unwrap();
        assert_eq!(out.row(2), &[0.0, 0.242, 0.399, 0.242, 0.0]);
    }

    #[test]
    fn left_one_hot_equals_left_index() {
        let v = Tensor::<f64>::from_fn(&[5, 2], |i| (i as f64).sin());
        assert_eq!(conv_attention(&v, &[1.0, 0.0, 0.0], false).unwrap(), index_attention(&v, -1).unwrap());
    }

    #[test]
    fn index_shift_examples() {
        let v = Tensor::<f64>::from_fn(&[3, 2], |i| i as f64 + 1.0);
        assert_eq!(index_attention(&v, 0).unwrap(), v);
        let s = index_attention(&v, -1).unwrap();
        assert_eq!(s.data(), &[0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn even_kernel_rejected() {
        let v = Tensor::<f64>::zeros(&[3, 2]);
        assert!(matches!(conv_attention(&v, &[0.5, 0.5], false), Err(Error::Config(_))));
    }

    #[test]
    fn causal_conv_ignores_future() {
        let v = Tensor::<f64>::from_fn(&[4, 1], |i| i as f64 + 1.0);
        let out = conv_attention(&v, &[1.0, 1.0, 1.0], true).unwrap();
        assert_eq!(out.data(), &[1.0, 3.0, 5.0, 7.0]);
    }
}
