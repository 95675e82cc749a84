//! Feedforward networks with the bias folded into each weight block.
//!
//! Layer `i` maps a `[batch, d_{i-1}]` input to `[batch, d_i]` by prepending a
//! constant-one column and multiplying by a `(d_{i-1} + 1) x d_i` block whose
//! first row is the bias. All blocks live back to back in one flat parameter
//! vector, so a prior over the flat vector covers weights and biases alike.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{ElementwiseOp, Tensor};

pub use crate::tape::softmax_rows;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
    /// Row-wise softmax; only valid on the final layer.
    Softmax,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation '{other}'"
            ))),
        }
    }
}

/// Placement of one layer's block inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerBlock {
    pub offset: usize,
    /// Input width plus one (the bias row, stored first).
    pub rows: usize,
    pub cols: usize,
}

impl LayerBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat range of the bias row.
    pub fn bias_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.cols
    }

    /// Flat range of the weight rows (everything but the bias row).
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset + self.cols..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl NetworkSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be positive, got {widths:?}"
            )));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} layers need {} activations, got {}",
                widths.len() - 1,
                widths.len() - 1,
                activations.len()
            )));
        }
        let last = activations.len() - 1;
        if activations[..last].contains(&Activation::Softmax) {
            return Err(Error::InvalidArgument(
                "softmax is only allowed on the final layer".into(),
            ));
        }
        Ok(NetworkSpec {
            widths,
            activations,
        })
    }

    /// Tanh hidden layers with the given output activation.
    pub fn tanh_hidden(widths: Vec<usize>, output: Activation) -> Result<Self> {
        let layers = widths.len().saturating_sub(1);
        let mut acts = vec![Activation::Tanh; layers.saturating_sub(1)];
        acts.push(output);
        NetworkSpec::new(widths, acts)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated nonempty")
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn blocks(&self) -> Vec<LayerBlock> {
        let mut offset = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let block = LayerBlock {
                    offset,
                    rows: w[0] + 1,
                    cols: w[1],
                };
                offset += block.len();
                block
            })
            .collect()
    }

    pub fn has_softmax_output(&self) -> bool {
        self.activations.last() == Some(&Activation::Softmax)
    }

    /// Record the forward pass on `tape`. Returns the network output.
    pub fn forward_on_tape(&self, tape: &mut Tape, params: Var, x: Var) -> Result<Var> {
        let (pre, act) = self.pre_activation_on_tape(tape, params, x)?;
        apply_activation(tape, pre, act)
    }

    /// Record the forward pass up to (but not including) the final activation.
    pub fn pre_activation_on_tape(
        &self,
        tape: &mut Tape,
        params: Var,
        x: Var,
    ) -> Result<(Var, Activation)> {
        self.check_params(tape.value(params))?;
        let xv = tape.value(x);
        if xv.shape().len() != 2 || xv.shape()[1] != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: xv.shape().to_vec(),
                right: vec![xv.rows(), self.input_dim()],
            });
        }
        let blocks = self.blocks();
        let last = blocks.len() - 1;
        let mut h = x;
        for (i, (block, &act)) in blocks.iter().zip(&self.activations).enumerate() {
            let w = tape.slice(params, block.offset, vec![block.rows, block.cols])?;
            let augmented = tape.prepend_ones(h)?;
            let z = tape.matmul(augmented, w)?;
            if i == last {
                return Ok((z, act));
            }
            h = apply_activation(tape, z, act)?;
        }
        unreachable!("network has at least one layer")
    }

    fn check_params(&self, params: &Tensor) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: params.shape().to_vec(),
                right: vec![self.param_count()],
            });
        }
        Ok(())
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        write!(f, "[{}]", widths.join(","))
    }
}

fn apply_activation(tape: &mut Tape, z: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Tanh => tape.unary(ElementwiseOp::Tanh, z),
        Activation::Identity => Ok(z),
        Activation::Softmax => tape.softmax_rows(z),
    }
}

/// The flat parameter vector for a particular [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams(Tensor);

impl FlatParams {
    pub fn new(spec: &NetworkSpec, flat: Tensor) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::ShapeMismatch {
                op: "params",
                left: flat.shape().to_vec(),
                right: vec![spec.param_count()],
            });
        }
        let n = flat.len();
        Ok(FlatParams(flat.reshape(vec![n])?))
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        FlatParams(Tensor::zeros(&[spec.param_count()]))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// The slice of one layer's block as a `rows x cols` matrix.
    pub fn layer(&self, block: &LayerBlock) -> Tensor {
        let data = self.0.data()[block.offset..block.offset + block.len()].to_vec();
        Tensor::matrix(block.rows, block.cols, data).expect("block shape is consistent")
    }
}

/// Deterministic forward evaluation `x: [batch, d_0] -> [batch, d_K]`.
pub fn forward(spec: &NetworkSpec, params: &FlatParams, x: &Tensor) -> Result<Tensor> {
    forward_flat(spec, params.tensor(), x)
}

pub(crate) fn forward_flat(spec: &NetworkSpec, params: &Tensor, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let p = tape.constant(params.clone());
    let xv = tape.constant(x.clone());
    let out = spec.forward_on_tape(&mut tape, p, xv)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::finite_diff_check;
    use proptest::prelude::*;

    #[test]
    fn param_counts() {
        let reg = NetworkSpec::tanh_hidden(vec![1, 20, 1], Activation::Identity).unwrap();
        assert_eq!(reg.param_count(), 61);
        let cls = NetworkSpec::tanh_hidden(vec![2, 5, 5, 2], Activation::Softmax).unwrap();
        assert_eq!(cls.param_count(), 57);
        let lin = NetworkSpec::new(vec![1, 1], vec![Activation::Identity]).unwrap();
        assert_eq!(lin.param_count(), 2);
    }

    #[test]
    fn blocks_tile_the_flat_vector() {
        let spec = NetworkSpec::tanh_hidden(vec![2, 5, 5, 2], Activation::Softmax).unwrap();
        let blocks = spec.blocks();
        let mut next = 0;
        for b in &blocks {
            assert_eq!(b.offset, next);
            next += b.len();
        }
        assert_eq!(next, spec.param_count());
        assert_eq!(blocks[0].bias_range(), 0..5);
        assert_eq!(blocks[0].weight_range(), 5..15);
    }

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec::new(vec![1], vec![]).is_err());
        assert!(NetworkSpec::new(vec![1, 0, 1], vec![Activation::Tanh; 2]).is_err());
        assert!(NetworkSpec::new(
            vec![2, 3, 2],
            vec![Activation::Softmax, Activation::Identity]
        )
        .is_err());
        assert!(NetworkSpec::new(vec![2, 3], vec![Activation::Tanh; 2]).is_err());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = NetworkSpec::tanh_hidden(vec![1, 20, 1], Activation::Identity).unwrap();
        let x = Tensor::matrix(3, 1, vec![-1.0, 0.5, 7.0]).unwrap();
        let y = forward(&spec, &FlatParams::zeros(&spec), &x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_identity_layer_is_affine() {
        let spec = NetworkSpec::new(vec![2, 1], vec![Activation::Identity]).unwrap();
        // bias 0.5, weights (2, -3)
        let p = FlatParams::new(&spec, Tensor::vector(vec![0.5, 2.0, -3.0])).unwrap();
        let x = Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 2.0]).unwrap();
        let y = forward(&spec, &p, &x).unwrap();
        assert_eq!(y.data(), &[0.5 + 2.0 - 3.0, 0.5 - 6.0]);
    }

    #[test]
    fn softmax_layer_with_zero_weights_is_uniform() {
        let spec = NetworkSpec::new(vec![2, 2], vec![Activation::Softmax]).unwrap();
        let x = Tensor::matrix(2, 2, vec![1.0, -4.0, 3.0, 0.2]).unwrap();
        let y = forward(&spec, &FlatParams::zeros(&spec), &x).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_examples() {
        let p = softmax_rows(&Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        let p = softmax_rows(&Tensor::matrix(1, 2, vec![2f64.ln(), 0.0]).unwrap()).unwrap();
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax_rows(&Tensor::matrix(1, 2, vec![1000.0, 0.0]).unwrap()).unwrap();
        assert!(p.is_finite());
        assert!((p.data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_shape_errors() {
        let spec = NetworkSpec::tanh_hidden(vec![2, 3, 1], Activation::Identity).unwrap();
        let p = FlatParams::zeros(&spec);
        let bad_x = Tensor::matrix(4, 3, vec![0.0; 12]).unwrap();
        assert!(matches!(
            forward(&spec, &p, &bad_x),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(FlatParams::new(&spec, Tensor::zeros(&[3])).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(row in prop::collection::vec(-1000.0f64..1000.0, 2..6)) {
            let n = row.len();
            let p = softmax_rows(&Tensor::matrix(1, n, row).unwrap()).unwrap();
            prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn forward_is_deterministic_and_differentiable(
            params in prop::collection::vec(-2.0f64..2.0, 23),
            xs in prop::collection::vec(-2.0f64..2.0, 6),
        ) {
            let spec = NetworkSpec::tanh_hidden(vec![2, 3, 2, 1], Activation::Identity).unwrap();
            prop_assert_eq!(spec.param_count(), 9 + 8 + 3);
            let p = Tensor::vector(params[..spec.param_count()].to_vec());
            let x = Tensor::matrix(3, 2, xs).unwrap();
            let fp = FlatParams::new(&spec, p.clone()).unwrap();
            let a = forward(&spec, &fp, &x).unwrap();
            let b = forward(&spec, &fp, &x).unwrap();
            prop_assert_eq!(a.data(), b.data());

            let f = |t: &mut Tape, w: Var| {
                let xv = t.constant(x.clone());
                let y = spec.forward_on_tape(t, w, xv)?;
                t.sum(y)
            };
            prop_assert!(finite_diff_check(f, &p, 1e-5).unwrap() <= 1e-5);
        }

        #[test]
        fn softmax_network_gradient(params in prop::collection::vec(-2.0f64..2.0, 57)) {
            let spec = NetworkSpec::tanh_hidden(vec![2, 5, 5, 2], Activation::Softmax).unwrap();
            let x = Tensor::matrix(2, 2, vec![0.3, -1.0, 1.5, 0.2]).unwrap();
            let f = |t: &mut Tape, w: Var| {
                let xv = t.constant(x.clone());
                let y = spec.forward_on_tape(t, w, xv)?;
                let c = t.constant(Tensor::matrix(2, 2, vec![1.0, -2.0, 0.5, 3.0])?);
                let yc = t.mul(y, c)?;
                t.sum(yc)
            };
            prop_assert!(finite_diff_check(f, &Tensor::vector(params), 1e-5).unwrap() <= 1e-5);
        }
    }
}
