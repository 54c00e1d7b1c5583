use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Named model parameters in creation order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Rc<Tensor<T>>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Register a parameter and return its slot.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let slot = self.names.len();
        self.index.insert(name.clone(), slot);
        self.names.push(name);
        self.tensors.push(Rc::new(value));
        slot
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.slot(name).map(|s| self.tensors[s].as_ref())
    }

    pub fn tensor(&self, slot: usize) -> &Tensor<T> {
        &self.tensors[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter().map(|t| t.as_ref()))
    }

    /// Replace a parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self.slot(name).ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        self.set_slot(slot, value)
    }

    pub fn set_slot(&mut self, slot: usize, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.tensors[slot].shape() {
            return Err(Error::shape("set parameter", self.tensors[slot].shape(), value.shape()));
        }
        self.tensors[slot] = Rc::new(value);
        Ok(())
    }

    /// Mutable access for in-place optimizer updates.
    pub fn tensor_mut(&mut self, slot: usize) -> &mut Tensor<T> {
        Rc::make_mut(&mut self.tensors[slot])
    }

    /// Register every parameter on `tape`; they require gradients when the
    /// tape records them.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Vec<Var<'t, T>> {
        self.tensors.iter().map(|t| tape.leaf_rc(Rc::clone(t), true)).collect()
    }
}

/// Xavier-uniform `[fan_in, fan_out]` matrix.
pub fn xavier_uniform<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a);
    Tensor::from_fn(&[fan_in, fan_out], |_| T::of(dist.sample(rng)))
}

/// Embedding table with entries drawn from `N(0, d^-1/2)`.
pub fn embedding_init<T: Scalar>(vocab: usize, d: usize, rng: &mut impl Rng) -> Tensor<T> {
    let dist = Normal::new(0.0, (d as f64).powf(-0.5)).expect("positive std");
    Tensor::from_fn(&[vocab, d], |_| T::of(dist.sample(rng)))
}

/// Sinusoidal position table `[len, d]`.
pub fn sinusoidal_positions<T: Scalar>(len: usize, d: usize) -> Tensor<T> {
    Tensor::from_fn(&[len, d], |k| {
        let (pos, i) = ((k / d) as f64, k % d);
        let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = pos / rate;
        T::of(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn store_roundtrip_and_shape_guard() {
        let mut s = ParamStore::<f64>::new();
        s.add("a", Tensor::zeros(&[2, 3]));
        s.add("b", Tensor::zeros(&[3]));
        assert_eq!(s.numel(), 9);
        s.set("b", Tensor::full(&[3], 1.0)).unwrap();
        assert_eq!(s.get("b").unwrap().data(), &[1.0; 3]);
        assert!(s.set("b", Tensor::zeros(&[4])).is_err());
        assert!(matches!(s.set("c", Tensor::zeros(&[1])), Err(Error::UnknownParam(_))));
    }

    #[test]
    fn xavier_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w: Tensor<f64> = xavier_uniform(10, 20, &mut rng);
        let a = (6.0f64 / 30.0).sqrt();
        assert!(w.data().iter().all(|x| x.abs() <= a));
    }

    #[test]
    fn positions_start_with_sin_cos() {
        let pe: Tensor<f64> = sinusoidal_positions(3, 4);
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe.row(1)[0] - 1f64.sin()).abs() < 1e-15);
        assert!((pe.row(1)[3] - (0.01f64).cos()).abs() < 1e-15);
    }
}
