use serde::{Deserialize, Serialize};

use crate::model::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Adam with bias correction; moments are kept per parameter slot.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || (0..params.len()).map(|s| vec![T::zero(); params.tensor(s).len()]).collect();
        Adam {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One update; slots without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Tensor<T>>], lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let c1 = T::of(1.0 - beta1.powi(self.t));
        let c2 = T::of(1.0 - beta2.powi(self.t));
        let (lr, eps) = (T::of(lr), T::of(eps));
        for (slot, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
            let p = params.tensor_mut(slot).data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // bias-corrected first step is lr * g / (|g| + eps)
        let mut store = ParamStore::<f64>::new();
        store.add("w", Tensor::from_f64(&[2], &[1.0, -1.0]).unwrap());
        let mut adam = Adam::new(AdamConfig::default(), &store);
        let g = Tensor::from_f64(&[2], &[0.5, -2.0]).unwrap();
        adam.step(&mut store, &[Some(g)], 0.1);
        let w = store.get("w").unwrap().data();
        assert!((w[0] - 0.9).abs() < 1e-9);
        assert!((w[1] + 0.9).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut store = ParamStore::<f64>::new();
        store.add("x", Tensor::from_f64(&[1], &[3.0]).unwrap());
        let mut adam = Adam::new(AdamConfig::default(), &store);
        for _ in 0..500 {
            let x = store.get("x").unwrap().data()[0];
            let g = Tensor::from_f64(&[1], &[2.0 * x]).unwrap();
            adam.step(&mut store, &[Some(g)], 0.05);
        }
        assert!(store.get("x").unwrap().data()[0].abs() < 1e-2);
    }
}
