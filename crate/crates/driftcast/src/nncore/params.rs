//! Tagged parameter tensors.

use rand::Rng;

use crate::nncore::{NncoreError, Tensor};

/// Structural kind of a parameter. The kind fixes both the tensor shape
/// and the arity of the multiplicative scales that may be applied to it:
/// weights take an input-side and an output-side scale, biases take an
/// output-side scale only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Weight of an affine map, stored d_in × d_out (output = Wᵀ·input).
    Linear { d_in: usize, d_out: usize },
    Bias { d_out: usize },
    /// Causal 1-D convolution filter, stored d_in × d_out × d_k.
    ConvFilter {
        d_in: usize,
        d_out: usize,
        d_k: usize,
    },
}

impl ParamKind {
    pub fn shape(&self) -> Vec<usize> {
        match *self {
            ParamKind::Linear { d_in, d_out } => vec![d_in, d_out],
            ParamKind::Bias { d_out } => vec![d_out],
            ParamKind::ConvFilter { d_in, d_out, d_k } => vec![d_in, d_out, d_k],
        }
    }

    /// (input-scale arity, output-scale arity); 0 means no scale on that
    /// side. Biases are output-side only.
    pub fn scale_arity(&self) -> (usize, usize) {
        match *self {
            ParamKind::Linear { d_in, d_out } => (d_in, d_out),
            ParamKind::Bias { d_out } => (0, d_out),
            ParamKind::ConvFilter { d_in, d_out, .. } => (d_in, d_out),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            ParamKind::Linear { d_in, .. } => d_in.max(1),
            ParamKind::Bias { .. } => 1,
            ParamKind::ConvFilter { d_in, d_k, .. } => (d_in * d_k).max(1),
        }
    }
}

/// A named parameter tensor with its gradient accumulator and the dense
/// layer-type id that groups layers sharing one coefficient generator.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub kind: ParamKind,
    pub layer_type_id: usize,
    pub values: Tensor,
    pub grad: Tensor,
}

impl ParamTensor {
    pub fn new(
        name: impl Into<String>,
        kind: ParamKind,
        values: Tensor,
    ) -> Result<Self, NncoreError> {
        let expected = kind.shape();
        if values.shape() != expected.as_slice() {
            return Err(NncoreError::ShapeMismatch {
                context: "ParamTensor::new",
                expected,
                got: values.shape().to_vec(),
            });
        }
        let grad = Tensor::zeros(values.shape());
        Ok(ParamTensor {
            name: name.into(),
            kind,
            layer_type_id: 0,
            values,
            grad,
        })
    }

    pub fn zeros(name: impl Into<String>, kind: ParamKind) -> Self {
        let values = Tensor::zeros(&kind.shape());
        ParamTensor::new(name, kind, values).expect("shape built from kind")
    }

    /// Uniform init on ±1/√fan_in, the usual dense-layer default.
    pub fn init_uniform<R: Rng>(name: impl Into<String>, kind: ParamKind, rng: &mut R) -> Self {
        let bound = 1.0 / (kind.fan_in() as f64).sqrt();
        let mut values = Tensor::zeros(&kind.shape());
        for v in values.as_mut_slice() {
            *v = rng.gen_range(-bound..bound);
        }
        ParamTensor::new(name, kind, values).expect("shape built from kind")
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
