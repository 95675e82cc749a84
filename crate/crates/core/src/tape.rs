//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation applied to its variables in creation
//! order, so node inputs always precede the node. [`Tape::backward`] walks the
//! tape in reverse and accumulates adjoints; a leaf used several times receives
//! the sum of its contributions. Tapes are cheap and meant to be rebuilt for
//! every forward pass.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{bcast, matmul_into, sigmoid, ElementwiseOp, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Elementwise(ElementwiseOp, Var, Option<Var>),
    Affine { input: Var, scale: f64 },
    MatMul(Var, Var),
    Sum(Var),
    Slice { input: Var, start: usize },
    PrependOnes(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Pick { input: Var, indices: Vec<usize> },
    /// Elementwise map whose local derivative was computed by the caller.
    Custom { input: Var, local_grad: Tensor },
}

/// One recorded operation: its tag, inputs (inside `op`) and forward value.
#[derive(Debug, Clone)]
pub struct TapeNode {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

/// Gradients of a scalar root with respect to every leaf on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_leaf: HashMap<Var, Tensor>,
}

impl Gradients {
    /// Gradient for `leaf`; `None` if `leaf` is not a leaf of the tape.
    pub fn wrt(&self, leaf: Var) -> Option<&Tensor> {
        self.by_leaf.get(&leaf)
    }

    pub fn take(&mut self, leaf: Var) -> Option<Tensor> {
        self.by_leaf.remove(&leaf)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(TapeNode {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        let value = Tensor::elementwise(op, self.value(a), b.map(|b| self.value(b)))?;
        let needs = self.needs(a) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Op::Elementwise(op, a, b), value, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Add, a, Some(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Sub, a, Some(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Mul, a, Some(b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Div, a, Some(b))
    }

    pub fn unary(&mut self, op: ElementwiseOp, a: Var) -> Result<Var> {
        self.elementwise(op, a, None)
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let value = self
            .value(a)
            .map(|v| scale * v + shift)
            .ensure_finite("affine")?;
        let needs = self.needs(a);
        Ok(self.push(Op::Affine { input: a, scale }, value, needs))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), value, needs))
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum()).ensure_finite("sum")?;
        let needs = self.needs(a);
        Ok(self.push(Op::Sum(a), value, needs))
    }

    /// Contiguous range of the flattened input, reshaped to `shape`.
    pub fn slice(&mut self, a: Var, start: usize, shape: Vec<usize>) -> Result<Var> {
        let len: usize = shape.iter().product();
        let src = self.value(a);
        if start + len > src.len() {
            return Err(Error::ShapeMismatch {
                op: "slice",
                left: src.shape().to_vec(),
                right: vec![start, start + len],
            });
        }
        let value = Tensor::new(shape, src.data()[start..start + len].to_vec())?;
        let needs = self.needs(a);
        Ok(self.push(Op::Slice { input: a, start }, value, needs))
    }

    /// Prepend a column of ones to a 2-D tensor: `[b, d] -> [b, d + 1]`.
    pub fn prepend_ones(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        if src.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "prepend_ones",
                left: src.shape().to_vec(),
                right: vec![0, 0],
            });
        }
        let (b, d) = (src.shape()[0], src.shape()[1]);
        let mut data = Vec::with_capacity(b * (d + 1));
        for i in 0..b {
            data.push(1.0);
            data.extend_from_slice(src.row(i));
        }
        let value = Tensor::new(vec![b, d + 1], data)?;
        let needs = self.needs(a);
        Ok(self.push(Op::PrependOnes(a), value, needs))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = softmax_rows(self.value(a))?;
        let needs = self.needs(a);
        Ok(self.push(Op::SoftmaxRows(a), value, needs))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = log_softmax_rows(self.value(a))?;
        let needs = self.needs(a);
        Ok(self.push(Op::LogSoftmaxRows(a), value, needs))
    }

    /// Pick `a[i, indices[i]]` from every row of a 2-D tensor.
    pub fn pick(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let cols = src.cols();
        if src.shape().len() != 2 || src.rows() != indices.len() {
            return Err(Error::ShapeMismatch {
                op: "pick",
                left: src.shape().to_vec(),
                right: vec![indices.len()],
            });
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= cols) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} out of range for {cols} columns"
            )));
        }
        let data = indices
            .iter()
            .enumerate()
            .map(|(i, &j)| src.data()[i * cols + j])
            .collect();
        let value = Tensor::new(vec![indices.len()], data)?;
        let needs = self.needs(a);
        Ok(self.push(
            Op::Pick {
                input: a,
                indices: indices.to_vec(),
            },
            value,
            needs,
        ))
    }

    /// Record an elementwise map computed outside the tape. `local_grad` holds
    /// the derivative of each output entry with respect to its input entry.
    pub fn custom_unary(&mut self, a: Var, value: Tensor, local_grad: Tensor) -> Result<Var> {
        let shape = self.value(a).shape();
        if value.shape() != shape || local_grad.shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "custom_unary",
                left: shape.to_vec(),
                right: value.shape().to_vec(),
            });
        }
        let value = value.ensure_finite("custom_unary")?;
        let needs = self.needs(a);
        Ok(self.push(
            Op::Custom {
                input: a,
                local_grad,
            },
            value,
            needs,
        ))
    }

    /// Reverse-mode gradients of the scalar `root` with respect to every leaf.
    /// Leaves that `root` does not depend on receive zero tensors.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: root_value.shape().to_vec(),
                right: vec![1],
            });
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adjoints[root.0] = Some(Tensor::full(root_value.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(grad) = adjoints[idx].take() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                adjoints[idx] = Some(grad);
                continue;
            }
            self.propagate(node, &grad, &mut adjoints);
        }

        let mut by_leaf = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) {
                let g = adjoints
                    .get_mut(idx)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                by_leaf.insert(Var(idx), g);
            }
        }
        Ok(Gradients { by_leaf })
    }

    fn propagate(&self, node: &TapeNode, grad: &Tensor, adj: &mut [Option<Tensor>]) {
        let g = grad.data();
        let n_out = node.value.len();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Elementwise(op, a, b) => {
                let av = self.value(*a);
                let y = node.value.data();
                match (op, b) {
                    (ElementwiseOp::Add, Some(b)) => {
                        self.accumulate_bcast(*a, n_out, adj, |i| g[i]);
                        self.accumulate_bcast(*b, n_out, adj, |i| g[i]);
                    }
                    (ElementwiseOp::Sub, Some(b)) => {
                        self.accumulate_bcast(*a, n_out, adj, |i| g[i]);
                        self.accumulate_bcast(*b, n_out, adj, |i| -g[i]);
                    }
                    (ElementwiseOp::Mul, Some(b)) => {
                        let bv = self.value(*b);
                        self.accumulate_bcast(*a, n_out, adj, |i| g[i] * bcast(bv, i));
                        self.accumulate_bcast(*b, n_out, adj, |i| g[i] * bcast(av, i));
                    }
                    (ElementwiseOp::Div, Some(b)) => {
                        let bv = self.value(*b);
                        self.accumulate_bcast(*a, n_out, adj, |i| g[i] / bcast(bv, i));
                        self.accumulate_bcast(*b, n_out, adj, |i| {
                            let d = bcast(bv, i);
                            -g[i] * bcast(av, i) / (d * d)
                        });
                    }
                    (ElementwiseOp::Exp, None) => self.accumulate_bcast(*a, n_out, adj, |i| g[i] * y[i]),
                    (ElementwiseOp::Ln, None) => {
                        self.accumulate_bcast(*a, n_out, adj, |i| g[i] / av.data()[i])
                    }
                    (ElementwiseOp::Tanh, None) => {
                        self.accumulate_bcast(*a, n_out, adj, |i| g[i] * (1.0 - y[i] * y[i]))
                    }
                    (ElementwiseOp::Square, None) => {
                        self.accumulate_bcast(*a, n_out, adj, |i| 2.0 * g[i] * av.data()[i])
                    }
                    (ElementwiseOp::Softplus, None) => {
                        self.accumulate_bcast(*a, n_out, adj, |i| g[i] * sigmoid(av.data()[i]))
                    }
                    (ElementwiseOp::Abs, None) => {
                        self.accumulate_bcast(*a, n_out, adj, |i| g[i] * sign(av.data()[i]))
                    }
                    (ElementwiseOp::Neg, None) => self.accumulate_bcast(*a, n_out, adj, |i| -g[i]),
                    _ => unreachable!("arity checked at record time"),
                }
            }
            Op::Affine { input, scale } => {
                let s = *scale;
                self.accumulate_bcast(*input, n_out, adj, |i| s * g[i]);
            }
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.needs(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let g_row = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let b_row = &bv.data()[p * n..(p + 1) * n];
                            da[i * k + p] = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
                        }
                    }
                    self.accumulate(*a, adj, da);
                }
                if self.needs(*b) {
                    // dB = Aᵀ · G
                    let at = av.transpose().expect("matmul input is 2-D");
                    let mut db = vec![0.0; k * n];
                    matmul_into(at.data(), g, &mut db, k, m, n);
                    self.accumulate(*b, adj, db);
                }
            }
            Op::Sum(a) => {
                let d = vec![g[0]; self.value(*a).len()];
                self.accumulate(*a, adj, d);
            }
            Op::Slice { input, start } => {
                if self.needs(*input) {
                    let mut d = vec![0.0; self.value(*input).len()];
                    d[*start..*start + g.len()].copy_from_slice(g);
                    self.accumulate(*input, adj, d);
                }
            }
            Op::PrependOnes(a) => {
                let cols = node.value.cols();
                let d: Vec<f64> = g
                    .chunks(cols)
                    .flat_map(|row| row[1..].iter().copied())
                    .collect();
                self.accumulate(*a, adj, d);
            }
            Op::SoftmaxRows(a) => {
                let cols = node.value.cols();
                let y = node.value.data();
                let mut d = vec![0.0; y.len()];
                for r in 0..y.len() / cols {
                    let ys = &y[r * cols..(r + 1) * cols];
                    let gs = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        d[r * cols + j] = ys[j] * (gs[j] - dot);
                    }
                }
                self.accumulate(*a, adj, d);
            }
            Op::LogSoftmaxRows(a) => {
                let cols = node.value.cols();
                let y = node.value.data();
                let mut d = vec![0.0; y.len()];
                for r in 0..y.len() / cols {
                    let gs = &g[r * cols..(r + 1) * cols];
                    let total: f64 = gs.iter().sum();
                    for j in 0..cols {
                        d[r * cols + j] = gs[j] - y[r * cols + j].exp() * total;
                    }
                }
                self.accumulate(*a, adj, d);
            }
            Op::Pick { input, indices } => {
                if self.needs(*input) {
                    let src = self.value(*input);
                    let cols = src.cols();
                    let mut d = vec![0.0; src.len()];
                    for (i, &j) in indices.iter().enumerate() {
                        d[i * cols + j] = g[i];
                    }
                    self.accumulate(*input, adj, d);
                }
            }
            Op::Custom { input, local_grad } => {
                let lg = local_grad.data();
                self.accumulate_bcast(*input, n_out, adj, |i| g[i] * lg[i]);
            }
        }
    }

    /// Add `f(i)` over the output index space into the adjoint of `target`,
    /// summing when `target` is a broadcast scalar.
    fn accumulate_bcast(
        &self,
        target: Var,
        out_len: usize,
        adj: &mut [Option<Tensor>],
        f: impl Fn(usize) -> f64,
    ) {
        if !self.needs(target) {
            return;
        }
        let tv = self.value(target);
        let contrib: Vec<f64> = if tv.len() == out_len {
            (0..out_len).map(&f).collect()
        } else {
            vec![(0..out_len).map(&f).sum()]
        };
        self.accumulate(target, adj, contrib);
    }

    fn accumulate(&self, target: Var, adj: &mut [Option<Tensor>], contrib: Vec<f64>) {
        if !self.needs(target) {
            return;
        }
        match &mut adj[target.0] {
            Some(existing) => {
                for (e, c) in existing.data_mut().iter_mut().zip(&contrib) {
                    *e += c;
                }
            }
            slot @ None => {
                let shape = self.value(target).shape().to_vec();
                *slot = Some(Tensor::new(shape, contrib).expect("adjoint matches value shape"));
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Row-wise softmax with max shift.
pub fn softmax_rows(z: &Tensor) -> Result<Tensor> {
    let cols = z.cols();
    let mut out = z.data().to_vec();
    for row in out.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(z.shape().to_vec(), out)?.ensure_finite("softmax_rows")
}

/// Row-wise log-softmax with max shift.
pub fn log_softmax_rows(z: &Tensor) -> Result<Tensor> {
    let cols = z.cols();
    let mut out = z.data().to_vec();
    for row in out.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Tensor::new(z.shape().to_vec(), out)?.ensure_finite("log_softmax_rows")
}

/// Compare [`Tape::backward`] against central finite differences.
///
/// `f` builds a scalar objective on a fresh tape from the leaf holding `x`.
/// Returns the maximum over coordinates of `|a - n| / max(1, |a|, |n|)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let root = f(&mut tape, leaf)?;
    let grads = tape.backward(root)?;
    let analytic = grads.wrt(leaf).expect("leaf registered").clone();

    let eval = |point: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(point);
        let root = f(&mut tape, leaf)?;
        tape.value(root).item()
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
