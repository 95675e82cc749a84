//! Dense row-major tensors of `f64`.
//!
//! A [`Tensor`] is an immutable-by-convention value: every operation returns a
//! fresh tensor. Binary elementwise operations accept either equal shapes or a
//! single-element operand, which is broadcast. No other broadcasting exists.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

/// Elementwise operation tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    Ln,
    Tanh,
    Square,
    Softplus,
    Abs,
    Neg,
}

impl ElementwiseOp {
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            ElementwiseOp::Add | ElementwiseOp::Sub | ElementwiseOp::Mul | ElementwiseOp::Div
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementwiseOp::Add => "add",
            ElementwiseOp::Sub => "sub",
            ElementwiseOp::Mul => "mul",
            ElementwiseOp::Div => "div",
            ElementwiseOp::Exp => "exp",
            ElementwiseOp::Ln => "ln",
            ElementwiseOp::Tanh => "tanh",
            ElementwiseOp::Square => "square",
            ElementwiseOp::Softplus => "softplus",
            ElementwiseOp::Abs => "abs",
            ElementwiseOp::Neg => "neg",
        }
    }
}

/// `ln(1 + exp(x))` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                op: "new",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// One-dimensional tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector must be nonempty");
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        assert!(n > 0, "tensor dimensions must be positive");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::full(shape, 1.0)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::ShapeMismatch {
                op: "item",
                left: self.shape.clone(),
                right: vec![1],
            })
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a 2-D tensor (1 for vectors).
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NumericOverflow { op })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Gather rows of a 2-D tensor (or entries of a vector) in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor { shape, data }
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose",
                left: self.shape.clone(),
                right: vec![0, 0],
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data,
        })
    }

    /// Matrix product of two 2-D tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Tensor {
            shape: vec![m, n],
            data: out,
        }
        .ensure_finite("matmul")
    }

    /// Apply an elementwise operation. Binary tags require `b`; unary tags reject it.
    pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
        let out = match (op.is_binary(), b) {
            (true, Some(b)) => binary(op, a, b)?,
            (true, None) => {
                return Err(Error::InvalidArgument(format!(
                    "{} requires two operands",
                    op.name()
                )))
            }
            (false, None) => unary(op, a)?,
            (false, Some(_)) => {
                return Err(Error::InvalidArgument(format!(
                    "{} takes a single operand",
                    op.name()
                )))
            }
        };
        out.ensure_finite(op.name())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::elementwise(ElementwiseOp::Add, self, Some(other))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::elementwise(ElementwiseOp::Sub, self, Some(other))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::elementwise(ElementwiseOp::Mul, self, Some(other))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

pub(crate) fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape == b.shape || b.is_scalar() {
        Ok(a.shape.clone())
    } else if a.is_scalar() {
        Ok(b.shape.clone())
    } else {
        Err(Error::ShapeMismatch {
            op,
            left: a.shape.clone(),
            right: b.shape.clone(),
        })
    }
}

#[inline]
pub(crate) fn bcast(t: &Tensor, i: usize) -> f64 {
    if t.data.len() == 1 {
        t.data[0]
    } else {
        t.data[i]
    }
}

fn binary(op: ElementwiseOp, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let shape = broadcast_shape(op.name(), a, b)?;
    let n: usize = shape.iter().product();
    let f: fn(f64, f64) -> f64 = match op {
        ElementwiseOp::Add => |x, y| x + y,
        ElementwiseOp::Sub => |x, y| x - y,
        ElementwiseOp::Mul => |x, y| x * y,
        ElementwiseOp::Div => |x, y| x / y,
        _ => unreachable!("unary op routed to binary kernel"),
    };
    let data = (0..n).map(|i| f(bcast(a, i), bcast(b, i))).collect();
    Ok(Tensor { shape, data })
}

fn unary(op: ElementwiseOp, a: &Tensor) -> Result<Tensor> {
    let out = match op {
        ElementwiseOp::Exp => a.map(f64::exp),
        ElementwiseOp::Ln => {
            if let Some(bad) = a.data.iter().find(|&&v| v <= 0.0 || v.is_nan()) {
                return Err(Error::Domain {
                    op: "ln",
                    detail: format!("non-positive input {bad}"),
                });
            }
            a.map(f64::ln)
        }
        ElementwiseOp::Tanh => a.map(f64::tanh),
        ElementwiseOp::Square => a.map(|v| v * v),
        ElementwiseOp::Softplus => a.map(softplus),
        ElementwiseOp::Abs => a.map(f64::abs),
        ElementwiseOp::Neg => a.map(|v| -v),
        _ => unreachable!("binary op routed to unary kernel"),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matmul_identity() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_product() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let err = a.matmul(&a).unwrap_err();
        assert_eq!(
            err,
            Error::ShapeMismatch {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("[2, 3] vs [2, 3]"));
    }

    #[test]
    fn elementwise_examples() {
        let t = Tensor::elementwise(ElementwiseOp::Tanh, &Tensor::scalar(0.0), None).unwrap();
        assert_eq!(t.data(), &[0.0]);
        let e = Tensor::elementwise(ElementwiseOp::Exp, &Tensor::vector(vec![0.0, 1.0]), None)
            .unwrap();
        assert_eq!(e.data(), &[1.0, std::f64::consts::E]);
        let err = Tensor::elementwise(ElementwiseOp::Ln, &Tensor::scalar(-1.0), None).unwrap_err();
        assert!(matches!(err, Error::Domain { op: "ln", .. }));
    }

    #[test]
    fn elementwise_rejects_mismatch_and_overflow() {
        let a = Tensor::zeros(&[2]);
        let b = Tensor::zeros(&[3]);
        assert!(matches!(
            a.add(&b),
            Err(Error::ShapeMismatch { op: "add", .. })
        ));
        let big = Tensor::scalar(1000.0);
        assert_eq!(
            Tensor::elementwise(ElementwiseOp::Exp, &big, None),
            Err(Error::NumericOverflow { op: "exp" })
        );
        assert!(Tensor::elementwise(ElementwiseOp::Exp, &big, Some(&big)).is_err());
        assert!(Tensor::elementwise(ElementwiseOp::Add, &big, None).is_err());
    }

    #[test]
    fn scalar_broadcast() {
        let a = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let s = Tensor::scalar(2.0);
        assert_eq!(a.mul(&s).unwrap().data(), &[2.0, 4.0, 6.0]);
        assert_eq!(s.sub(&a).unwrap().data(), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn softplus_round_trip() {
        for &y in &[1e-6, 0.05, 1.0, 5.0, 40.0] {
            let x = softplus_inv(y);
            assert!((softplus(x) - y).abs() <= 1e-12 * y.max(1.0), "y={y}");
        }
        assert_eq!(softplus(-1000.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
    }

    #[test]
    fn new_validates_length() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    fn matrix_strategy(r: usize, c: usize) -> impl Strategy<Value = Tensor> {
        prop::collection::vec(-2.0f64..2.0, r * c)
            .prop_map(move |d| Tensor::matrix(r, c, d).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(
            a in matrix_strategy(3, 4),
            b in matrix_strategy(4, 2),
            c in matrix_strategy(2, 5),
        ) {
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (l, r) in left.data().iter().zip(right.data()) {
                prop_assert!((l - r).abs() <= 1e-12 * scale);
            }
        }
    }
}
