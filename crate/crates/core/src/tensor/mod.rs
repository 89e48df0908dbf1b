//! Dense float tensors and reverse-mode automatic differentiation.
//!
//! The engine is a gradient tape: forward ops run eagerly on [`Tensor`]
//! values and append one node each to a [`Tape`]; [`Tape::backward`] walks
//! the nodes once in reverse, accumulating gradients. Every op the
//! transformer needs — matrix products, layer norm, rotary position mixing,
//! causal softmax, GELU, embedding lookup, token cross-entropy — has a
//! hand-derived backward rule next to its forward code.
//!
//! Design points:
//! - Tensors are row-major, contiguous, and cheap to clone (shared buffers).
//! - Everything is generic over [`Scalar`], so tests can rerun any
//!   computation in f64 to tell algorithmic bugs from f32 rounding.
//! - Any op that produces a non-finite value poisons the tape; the error
//!   surfaces (with the op name and node index) at the next health check or
//!   backward call instead of corrupting a training run silently.

mod scalar;
mod tape;

pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};

use std::sync::Arc;

/// Token-id slot in target vectors that the loss skips.
pub const IGNORE_TOKEN: u32 = u32::MAX;

#[derive(Debug, Clone, thiserror::Error)]
pub enum TensorError {
    #[error("non-finite value produced by {op} (tape node {node}, first at flat index {index})")]
    NonFinite {
        op: &'static str,
        node: usize,
        index: usize,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

/// A dense row-major tensor. The buffer is shared on clone, so passing
/// tensors around is cheap; mutation always goes through fresh buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    /// Build from a shape and exactly matching element count.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Self {
        let len: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            len,
            "tensor data has {} elements but shape {:?} needs {}",
            data.len(),
            shape,
            len
        );
        Self {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![S::ZERO; len])
    }

    pub fn full(shape: Vec<usize>, value: S) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![value; len])
    }

    pub fn scalar(value: S) -> Self {
        Self::new(vec![1], vec![value])
    }

    pub fn from_f64_slice(shape: Vec<usize>, values: &[f64]) -> Self {
        Self::new(shape, values.iter().map(|&x| S::from_f64(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Same buffer under a different shape with the same element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Self {
        let len: usize = shape.iter().product();
        assert_eq!(
            len,
            self.data.len(),
            "cannot view {:?} as {:?}",
            self.shape,
            shape
        );
        Self {
            shape,
            data: Arc::clone(&self.data),
        }
    }

    /// Convert elements to another scalar type (used by f64 shadow tests and
    /// checkpoint round-trips).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            self.shape.clone(),
            self.data.iter().map(|&x| T::from_f64(x.to_f64())).collect(),
        )
    }

    /// Flat index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|x| !x.is_finite())
    }
}
