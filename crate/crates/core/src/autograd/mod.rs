//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation on a [`Var`] appends a node holding its output value and
//! enough saved state to apply the chain rule. Nodes are appended in
//! execution order, so the tape is always topologically sorted and the
//! backward pass is a single reverse sweep.

mod gradcheck;

pub use gradcheck::{grad_check, GradCheckReport};

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ops::{self, LayerNormCache, MatmulPlan};
use crate::tensor::Tensor;

type NodeId = usize;

enum Op<T> {
    Leaf,
    MatMul { a: NodeId, b: NodeId, plan: MatmulPlan },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, factor: T },
    Relu { a: NodeId },
    Reshape { a: NodeId },
    Permute { a: NodeId, perm: Vec<usize> },
    Softmax { a: NodeId },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, cache: LayerNormCache<T> },
    CrossEntropy { logits: NodeId, grad: Vec<T> },
    Embedding { table: NodeId, ids: Vec<usize> },
    Sum { a: NodeId },
    Conv { a: NodeId, kernel: Vec<T>, n: usize, d: usize, lens: Vec<usize> },
    Shift { a: NodeId, offset: isize, n: usize, d: usize, lens: Vec<usize> },
    Dropout { a: NodeId, mask: Vec<T> },
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    leaf_grads: RefCell<HashMap<NodeId, Tensor<T>>>,
    grad_enabled: bool,
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: NodeId,
}

impl<T: Scalar> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Scalar> Copy for Var<'_, T> {}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    /// A tape that records backward rules.
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            leaf_grads: RefCell::new(HashMap::new()),
            grad_enabled: true,
        }
    }

    /// A tape that only evaluates; nothing requires a gradient.
    pub fn inference() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop every recorded node and accumulated gradient.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.leaf_grads.get_mut().clear();
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.leaf_rc(Rc::new(value), requires_grad)
    }

    /// Register a shared tensor (e.g. a model parameter) without copying it.
    pub fn leaf_rc(&self, value: Rc<Tensor<T>>, requires_grad: bool) -> Var<'_, T> {
        self.push(value, Op::Leaf, requires_grad && self.grad_enabled)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    fn push(&self, value: Rc<Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: NodeId) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Discard accumulated leaf gradients.
    pub fn zero_grads(&self) {
        self.leaf_grads.borrow_mut().clear();
    }

    /// Propagate gradients from a scalar `loss` to every leaf that requires
    /// them. Leaf gradients accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&self, loss: Var<'_, T>) -> Result<()> {
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.len() != 1 {
            return Err(Error::Rank {
                op: "backward",
                expected: 0,
                shape: loss_node.value.shape().to_vec(),
            });
        }
        if !loss_node.requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(loss.id + 1, || None);
        grads[loss.id] = Some(Tensor::full(loss_node.value.shape(), T::one()));

        let mut leaf_grads = self.leaf_grads.borrow_mut();
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            backward_node(&nodes, node, g, &mut grads, &mut leaf_grads, id)?;
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) -> Result<()> {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn backward_node<T: Scalar>(
    nodes: &[Node<T>],
    node: &Node<T>,
    g: Tensor<T>,
    grads: &mut [Option<Tensor<T>>],
    leaf_grads: &mut HashMap<NodeId, Tensor<T>>,
    id: NodeId,
) -> Result<()> {
    let needs = |i: NodeId| nodes[i].requires_grad;
    let val = |i: NodeId| &nodes[i].value;
    match &node.op {
        Op::Leaf => match leaf_grads.get_mut(&id) {
            Some(existing) => existing.add_assign(&g)?,
            None => {
                leaf_grads.insert(id, g);
            }
        },
        Op::MatMul { a, b, plan } => {
            if needs(*a) {
                let mut ga = Tensor::zeros(val(*a).shape());
                ops::matmul_grad_a(plan, g.data(), val(*b).data(), ga.data_mut());
                accumulate(grads, *a, ga)?;
            }
            if needs(*b) {
                let mut gb = Tensor::zeros(val(*b).shape());
                ops::matmul_grad_b(plan, val(*a).data(), g.data(), gb.data_mut());
                accumulate(grads, *b, gb)?;
            }
        }
        Op::Add { a, b } => {
            if needs(*b) {
                let bs = val(*b).shape().to_vec();
                let gb = if bs == g.shape() {
                    g.clone()
                } else {
                    let width = val(*b).len();
                    let mut acc = vec![T::zero(); width];
                    for chunk in g.data().chunks(width) {
                        for (s, &v) in acc.iter_mut().zip(chunk) {
                            *s += v;
                        }
                    }
                    Tensor::new(&bs, acc)?
                };
                accumulate(grads, *b, gb)?;
            }
            if needs(*a) {
                accumulate(grads, *a, g)?;
            }
        }
        Op::Mul { a, b } => {
            let (va, vb) = (val(*a), val(*b));
            if needs(*a) {
                let ga = Tensor::from_fn(g.shape(), |i| g.data()[i] * vb.data()[i]);
                accumulate(grads, *a, ga)?;
            }
            if needs(*b) {
                let gb = Tensor::from_fn(g.shape(), |i| g.data()[i] * va.data()[i]);
                accumulate(grads, *b, gb)?;
            }
        }
        Op::Scale { a, factor } => {
            let f = *factor;
            accumulate(grads, *a, g.map(|v| v * f))?;
        }
        Op::Relu { a } => {
            let x = val(*a);
            let ga = Tensor::from_fn(g.shape(), |i| {
                if x.data()[i] > T::zero() {
                    g.data()[i]
                } else {
                    T::zero()
                }
            });
            accumulate(grads, *a, ga)?;
        }
        Op::Reshape { a } => {
            let shape = val(*a).shape().to_vec();
            accumulate(grads, *a, g.reshape(&shape)?)?;
        }
        Op::Permute { a, perm } => {
            let ga = ops::permute(&g, &ops::inverse_perm(perm))?;
            accumulate(grads, *a, ga)?;
        }
        Op::Softmax { a } => {
            let y = &node.value;
            let n = y.last_dim();
            let mut ga = vec![T::zero(); y.len()];
            for ((yr, gr), out) in y.data().chunks(n).zip(g.data().chunks(n)).zip(ga.chunks_mut(n)) {
                let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                for j in 0..n {
                    out[j] = yr[j] * (gr[j] - dot);
                }
            }
            accumulate(grads, *a, Tensor::new(y.shape(), ga)?)?;
        }
        Op::LayerNorm { x, gain, bias, cache } => {
            let d = node.value.last_dim();
            let gain_v = val(*gain);
            if needs(*x) {
                let inv_d = T::one() / T::of(d as f64);
                let mut gx = vec![T::zero(); g.len()];
                for (r, ((gr, hr), out)) in g
                    .data()
                    .chunks(d)
                    .zip(cache.xhat.chunks(d))
                    .zip(gx.chunks_mut(d))
                    .enumerate()
                {
                    let mut sum_g = T::zero();
                    let mut sum_gh = T::zero();
                    for j in 0..d {
                        let gh = gr[j] * gain_v.data()[j];
                        sum_g += gh;
                        sum_gh += gh * hr[j];
                    }
                    let rstd = cache.rstd[r];
                    for j in 0..d {
                        let gh = gr[j] * gain_v.data()[j];
                        out[j] = rstd * (gh - (sum_g + hr[j] * sum_gh) * inv_d);
                    }
                }
                accumulate(grads, *x, Tensor::new(g.shape(), gx)?)?;
            }
            if needs(*gain) {
                let mut gg = vec![T::zero(); d];
                for (gr, hr) in g.data().chunks(d).zip(cache.xhat.chunks(d)) {
                    for j in 0..d {
                        gg[j] += gr[j] * hr[j];
                    }
                }
                accumulate(grads, *gain, Tensor::new(gain_v.shape(), gg)?)?;
            }
            if needs(*bias) {
                let mut gb = vec![T::zero(); d];
                for gr in g.data().chunks(d) {
                    for j in 0..d {
                        gb[j] += gr[j];
                    }
                }
                accumulate(grads, *bias, Tensor::new(val(*bias).shape(), gb)?)?;
            }
        }
        Op::CrossEntropy { logits, grad } => {
            let scale = g.item();
            let gl = Tensor::new(val(*logits).shape(), grad.iter().map(|&v| v * scale).collect())?;
            accumulate(grads, *logits, gl)?;
        }
        Op::Embedding { table, ids } => {
            let tv = val(*table);
            let d = tv.last_dim();
            let mut gt = Tensor::zeros(tv.shape());
            let data = gt.data_mut();
            for (row, &id) in ids.iter().enumerate() {
                for j in 0..d {
                    data[id * d + j] += g.data()[row * d + j];
                }
            }
            accumulate(grads, *table, gt)?;
        }
        Op::Sum { a } => {
            let s = g.item();
            accumulate(grads, *a, Tensor::full(val(*a).shape(), s))?;
        }
        Op::Conv { a, kernel, n, d, lens } => {
            // The adjoint of a centered odd-length convolution is the
            // convolution with the reversed kernel.
            let reversed: Vec<T> = kernel.iter().rev().copied().collect();
            let full_lens: Vec<usize> = vec![*n; lens.len()];
            let mut ga = ops::conv_rows(g.data(), *n, *d, &full_lens, &reversed);
            zero_rows_beyond(&mut ga, *n, *d, lens);
            accumulate(grads, *a, Tensor::new(val(*a).shape(), ga)?)?;
        }
        Op::Shift { a, offset, n, d, lens } => {
            let full_lens: Vec<usize> = vec![*n; lens.len()];
            let mut ga = ops::shift_rows(g.data(), *n, *d, &full_lens, -*offset);
            zero_rows_beyond(&mut ga, *n, *d, lens);
            accumulate(grads, *a, Tensor::new(val(*a).shape(), ga)?)?;
        }
        Op::Dropout { a, mask } => {
            let ga = Tensor::from_fn(g.shape(), |i| g.data()[i] * mask[i]);
            accumulate(grads, *a, ga)?;
        }
    }
    Ok(())
}

/// Rows treated as zero input in the forward pass receive no gradient.
fn zero_rows_beyond<T: Scalar>(x: &mut [T], n: usize, d: usize, lens: &[usize]) {
    for (g, &len) in lens.iter().enumerate() {
        for i in len.min(n)..n {
            let start = (g * n + i) * d;
            x[start..start + d].fill(T::zero());
        }
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires(self.id)
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self) -> Option<Tensor<T>> {
        self.tape.leaf_grads.borrow().get(&self.id).cloned()
    }

    pub fn backward(&self) -> Result<()> {
        self.tape.backward(*self)
    }

    fn unary(&self, value: Tensor<T>, op: Op<T>) -> Var<'t, T> {
        let rg = self.requires_grad();
        self.tape.push(Rc::new(value), op, rg)
    }

    fn binary(&self, other: &Var<'t, T>, value: Tensor<T>, op: Op<T>) -> Var<'t, T> {
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.push(Rc::new(value), op, rg)
    }

    /// Matrix product over the last two axes.
    pub fn matmul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        let plan = MatmulPlan::new(a.shape(), b.shape())?;
        let mut out = Tensor::zeros(&plan.out_shape);
        ops::matmul_into(&plan, a.data(), b.data(), out.data_mut());
        Ok(self.binary(
            other,
            out,
            Op::MatMul {
                a: self.id,
                b: other.id,
                plan,
            },
        ))
    }

    /// Elementwise sum; `other` may broadcast over leading axes when its
    /// shape is a suffix of `self`'s shape.
    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::shape("add", sa, sb));
        }
        let w = b.len();
        let out = Tensor::from_fn(sa, |i| a.data()[i] + b.data()[i % w]);
        Ok(self.binary(other, out, Op::Add { a: self.id, b: other.id }))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(Error::shape("mul", a.shape(), b.shape()));
        }
        let out = Tensor::from_fn(a.shape(), |i| a.data()[i] * b.data()[i]);
        Ok(self.binary(other, out, Op::Mul { a: self.id, b: other.id }))
    }

    pub fn scale(&self, factor: T) -> Var<'t, T> {
        let out = self.value().map(|v| v * factor);
        self.unary(out, Op::Scale { a: self.id, factor })
    }

    pub fn relu(&self) -> Var<'t, T> {
        let out = self.value().map(|v| if v > T::zero() { v } else { T::zero() });
        self.unary(out, Op::Relu { a: self.id })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        let out = (*self.value()).clone().reshape(shape)?;
        Ok(self.unary(out, Op::Reshape { a: self.id }))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Var<'t, T>> {
        let out = ops::permute(&self.value(), perm)?;
        Ok(self.unary(
            out,
            Op::Permute {
                a: self.id,
                perm: perm.to_vec(),
            },
        ))
    }

    /// Softmax over the last axis with masked entries excluded (exact zeros).
    pub fn softmax_masked(&self, mask: &[bool]) -> Result<Var<'t, T>> {
        let out = ops::softmax_masked(&self.value(), mask)?;
        Ok(self.unary(out, Op::Softmax { a: self.id }))
    }

    pub fn layer_norm(&self, gain: &Var<'t, T>, bias: &Var<'t, T>, eps: T) -> Result<Var<'t, T>> {
        let (out, cache) = ops::layer_norm_forward(&self.value(), gain.value().data(), bias.value().data(), eps)?;
        let rg = self.requires_grad() || gain.requires_grad() || bias.requires_grad();
        Ok(self.tape.push(
            Rc::new(out),
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                cache,
            },
            rg,
        ))
    }

    /// Mean token-level cross entropy (natural log) of rows of `self`
    /// (`[.., V]`) against `targets`, skipping positions equal to `ignore_id`.
    ///
    /// Returns the scalar loss and the per-position losses (zero at ignored
    /// positions). With `smoothing > 0` the target distribution is mixed with
    /// a uniform one.
    pub fn cross_entropy(&self, targets: &[usize], ignore_id: usize, smoothing: T) -> Result<(Var<'t, T>, Vec<T>)> {
        let logits = self.value();
        let v = logits.last_dim();
        let rows = logits.len() / v.max(1);
        if targets.len() != rows {
            return Err(Error::shape("cross_entropy", logits.shape(), &[targets.len()]));
        }
        let count = targets.iter().filter(|&&t| t != ignore_id).count();
        if count == 0 {
            return Err(Error::EmptyLoss);
        }
        let inv_count = T::one() / T::of(count as f64);
        let uniform = smoothing / T::of(v as f64);
        let mut per_position = vec![T::zero(); rows];
        let mut grad = vec![T::zero(); logits.len()];
        let mut logp = vec![T::zero(); v];
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t == ignore_id {
                continue;
            }
            if t >= v {
                return Err(Error::TokenRange { id: t, vocab: v });
            }
            ops::log_softmax_row(logits.row(r), &mut logp);
            let mut loss = -(T::one() - smoothing) * logp[t];
            if smoothing > T::zero() {
                loss -= uniform * logp.iter().copied().sum::<T>();
            }
            per_position[r] = loss;
            total += loss;
            let gr = &mut grad[r * v..(r + 1) * v];
            for j in 0..v {
                let target_mass = if j == t { T::one() - smoothing } else { T::zero() } + uniform;
                gr[j] = (logp[j].exp() - target_mass) * inv_count;
            }
        }
        let out = Tensor::scalar(total * inv_count);
        let var = self.unary(out, Op::CrossEntropy { logits: self.id, grad });
        Ok((var, per_position))
    }

    /// Gather rows `ids` of a `[V, d]` table into `[ids.len(), d]`.
    pub fn embedding(&self, ids: &[usize]) -> Result<Var<'t, T>> {
        let table = self.value();
        if table.rank() != 2 {
            return Err(Error::Rank {
                op: "embedding",
                expected: 2,
                shape: table.shape().to_vec(),
            });
        }
        let (rows, d) = (table.shape()[0], table.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::TokenRange { id, vocab: rows });
            }
            out.extend_from_slice(table.row(id));
        }
        let out = Tensor::new(&[ids.len(), d], out)?;
        Ok(self.unary(
            out,
            Op::Embedding {
                table: self.id,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn sum(&self) -> Var<'t, T> {
        let s = self.value().data().iter().copied().sum();
        self.unary(Tensor::scalar(s), Op::Sum { a: self.id })
    }

    /// Convolve along axis -2 (sequence axis) of a `[.., n, d]` tensor with
    /// one odd-length kernel shared by all channels. `lens[g]` is the valid
    /// prefix of group `g`; rows beyond it are treated as zero padding.
    pub fn conv_seq(&self, kernel: &[T], lens: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, d) = seq_dims(&x, lens, "conv_seq")?;
        if kernel.len().is_multiple_of(2) {
            return Err(Error::config(format!("convolution kernel length {} is even", kernel.len())));
        }
        let out = Tensor::new(x.shape(), ops::conv_rows(x.data(), n, d, lens, kernel))?;
        Ok(self.unary(
            out,
            Op::Conv {
                a: self.id,
                kernel: kernel.to_vec(),
                n,
                d,
                lens: lens.to_vec(),
            },
        ))
    }

    /// Output row `i` takes input row `i + offset` along axis -2, zero when
    /// out of range.
    pub fn shift_seq(&self, offset: isize, lens: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, d) = seq_dims(&x, lens, "shift_seq")?;
        let out = Tensor::new(x.shape(), ops::shift_rows(x.data(), n, d, lens, offset))?;
        Ok(self.unary(
            out,
            Op::Shift {
                a: self.id,
                offset,
                n,
                d,
                lens: lens.to_vec(),
            },
        ))
    }

    /// Inverted dropout. A rate of zero records nothing.
    pub fn dropout(&self, rate: f64, rng: &mut impl Rng) -> Var<'t, T> {
        if rate <= 0.0 {
            return *self;
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let x = self.value();
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let out = Tensor::from_fn(x.shape(), |i| x.data()[i] * mask[i]);
        self.unary(out, Op::Dropout { a: self.id, mask })
    }
}

fn seq_dims<T: Scalar>(x: &Tensor<T>, lens: &[usize], op: &'static str) -> Result<(usize, usize)> {
    if x.rank() < 2 {
        return Err(Error::Rank {
            op,
            expected: 2,
            shape: x.shape().to_vec(),
        });
    }
    let r = x.rank();
    let (n, d) = (x.shape()[r - 2], x.shape()[r - 1]);
    let groups = x.len() / (n * d).max(1);
    if groups != lens.len() {
        return Err(Error::shape(op, x.shape(), &[lens.len()]));
    }
    Ok((n, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]), true);
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn quadratic_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[2], &[2.0, -1.0]), true);
        let loss = x.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[4.0, -2.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[2], &[2.0, -1.0]), true);
        let loss = x.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[8.0, -4.0]);
        tape.zero_grads();
        assert!(x.grad().is_none());
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[2], &[2.0, -1.0]), true);
        assert!(matches!(tape.backward(x), Err(Error::Rank { .. })));
    }

    #[test]
    fn inference_tape_records_no_gradients() {
        let tape = Tape::inference();
        let x = tape.leaf(t(&[2], &[2.0, -1.0]), true);
        assert!(!x.requires_grad());
        x.sum().backward().unwrap();
        assert!(x.grad().is_none());
    }

    #[test]
    fn cross_entropy_examples() {
        let tape = Tape::new();
        let logits = tape.leaf(t(&[1, 3], &[1e3, 0.0, 0.0]), true);
        let (loss, _) = logits.cross_entropy(&[0], usize::MAX, 0.0).unwrap();
        assert!(loss.value().item().abs() < 1e-12);

        let logits = tape.leaf(Tensor::zeros(&[1, 4]), true);
        let (loss, _) = logits.cross_entropy(&[2], usize::MAX, 0.0).unwrap();
        assert!((loss.value().item() - 4f64.ln()).abs() < 1e-12);

        let logits = tape.leaf(t(&[2, 3], &[0.5, 1.0, -1.0, 2.0, 0.0, 0.0]), true);
        let (loss, per) = logits.cross_entropy(&[1, 0], 0, 0.0).unwrap();
        // position 1 targets the ignore id 0
        let (first, _) = tape.leaf(t(&[1, 3], &[0.5, 1.0, -1.0]), false).cross_entropy(&[1], 0, 0.0).unwrap();
        assert_eq!(loss.value().item(), first.value().item());
        assert_eq!(per[1], 0.0);
    }

    #[test]
    fn cross_entropy_all_ignored_is_error() {
        let tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(&[2, 4]), true);
        assert!(matches!(logits.cross_entropy(&[0, 0], 0, 0.0), Err(Error::EmptyLoss)));
    }

    #[test]
    fn broadcast_add_sums_bias_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[3, 2]), true);
        let b = tape.leaf(t(&[2], &[1.0, 2.0]), true);
        x.add(&b).unwrap().sum().backward().unwrap();
        assert_eq!(b.grad().unwrap().data(), &[3.0, 3.0]);
        assert_eq!(x.grad().unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn replay_gives_identical_loss() {
        let run = |tape: &Tape<f64>| {
            let x = tape.leaf(Tensor::from_fn(&[3, 4], |i| (i as f64).sin()), true);
            let w = tape.leaf(Tensor::from_fn(&[4, 2], |i| (i as f64).cos()), true);
            let y = x.matmul(&w).unwrap().relu();
            let l = y.mul(&y).unwrap().sum();
            l.backward().unwrap();
            (l.value().item(), w.grad().unwrap())
        };
        let mut tape = Tape::new();
        let first = run(&tape);
        tape.clear();
        let second = run(&tape);
        assert_eq!(first.0.to_bits(), second.0.to_bits());
        assert_eq!(first.1, second.1);
    }
}
