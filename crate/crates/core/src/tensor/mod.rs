//! Dense tensor arithmetic with reverse-mode gradients.
//!
//! Everything the model computes runs through this module: plain-value ops
//! for inference (no recording overhead) and a [`Tape`] that records the
//! same ops for training. Reductions use a fixed summation order so that
//! repeated runs are bit-identical.
//!
//! Precision is chosen per call site through the [`Scalar`] parameter:
//! training runs in `f32`, gradient verification in `f64`.

mod gradcheck;
pub mod ops;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Grads, Tape, TensorId};

use std::fmt;
use std::sync::Arc;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use thiserror::Error;

/// Scalar element of a [`Tensor`]; implemented for `f32` and `f64`.
pub trait Scalar:
    Float + NumAssignOps + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn from_f64_c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }
    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Errors produced by tensor ops. Shape errors name both offending shapes.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: data length {got} does not match shape {shape:?} (expected {expected})")]
    DataLength {
        op: &'static str,
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
    #[error("cross_entropy: target {target} out of range for vocab {vocab}")]
    TargetOutOfRange { target: usize, vocab: usize },
    #[error("{op}: invalid axis {axis} for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("{op}: index {index} out of bounds {bound}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("tape: {0}")]
    Tape(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// A dense row-major tensor. Data is shared (`Arc`) so clones are cheap and
/// read-sharing across threads is safe; all ops produce fresh tensors.
#[derive(Clone)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
    requires_grad: bool,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(data: Vec<S>, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                op: "Tensor::new",
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
            requires_grad: false,
        })
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: vec![],
            data: Arc::new(vec![value]),
            requires_grad: false,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: Arc::new(vec![S::zero(); n]),
            requires_grad: false,
        }
    }

    pub fn filled(value: S, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: Arc::new(vec![value; n]),
            requires_grad: false,
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> S) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(&mut f).collect();
        Self {
            shape,
            data: Arc::new(data),
            requires_grad: false,
        }
    }

    /// Marks the tensor as a gradient leaf for tape recording.
    pub fn requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn grad_required(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Extracts the single value of a scalar (rank-0 or one-element) tensor.
    pub fn item(&self) -> S {
        debug_assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[S] {
        debug_assert_eq!(self.rank(), 2);
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Clones the underlying buffer for mutation; used by hook edits.
    pub fn to_vec(&self) -> Vec<S> {
        self.data.as_ref().clone()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality of shape and every element (no tolerance).
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_f64_c().to_bits() == b.to_f64_c().to_bits())
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 8 {
            write!(f, " {:?}", &self.data[..])
        } else {
            write!(f, " [{} elems]", self.numel())
        }
    }
}

/// Largest relative difference between two same-shape tensors, with a floor
/// of 1.0 in the denominator so near-zero values compare absolutely.
pub fn max_rel_err<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_rel_err shape mismatch");
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| {
            let (x, y) = (x.to_f64_c(), y.to_f64_c());
            (x - y).abs() / x.abs().max(y.abs()).max(1.0)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_length() {
        let err = Tensor::<f64>::new(vec![1.0, 2.0, 3.0], vec![2, 2]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { expected: 4, got: 3, .. }));
    }

    #[test]
    fn shape_product_matches_len() {
        let t = Tensor::<f32>::zeros(vec![3, 4, 2]);
        assert_eq!(t.numel(), 24);
        assert_eq!(t.shape(), &[3, 4, 2]);
    }

    #[test]
    fn bit_eq_detects_sign_of_zero() {
        let a = Tensor::<f64>::new(vec![0.0], vec![1]).unwrap();
        let b = Tensor::<f64>::new(vec![-0.0], vec![1]).unwrap();
        assert!(!a.bit_eq(&b));
        assert!(a.bit_eq(&a.clone()));
    }
}
