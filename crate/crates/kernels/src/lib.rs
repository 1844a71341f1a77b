//! Float64 reference kernels for the text-embedding side of the segmentation
//! model: per-task embedding enhancement (coordinate fusion, single-query
//! attention, multi-query attention with global aggregation) and slot-memory
//! fusion. These are oracle implementations — plain `ndarray` math, no
//! training, no low-precision tricks — plus finite-difference gradient
//! checks that validate the analytic Jacobian-vector products.

use ndarray::Array2;
use thiserror::Error;

pub mod enhance;
pub mod gradcheck;
pub mod memory;

pub use enhance::{
    fuse_coordinates, multi_query_enhance, select_task_embedding, single_query_attention,
    Affine, EnhanceParams, LayerNormParams, TaskVariants,
};
pub use gradcheck::{finite_diff_check, GradCheckReport, KernelKind};
pub use memory::{memory_fuse, MemoryBank};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("matrix must be at least 1x1, got {0}x{1}")]
    EmptyMatrix(usize, usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("coordinate vector of length {got} exceeds the projection input {max}")]
    TooManyCoords { got: usize, max: usize },
    #[error("at least one query is required")]
    NoQueries,
    #[error("no {0} variant was produced for this batch")]
    MissingVariant(&'static str),
    #[error("dropout rate must lie in [0, 1), got {0}")]
    BadDropoutRate(f64),
}

/// Dense L×d matrix of 64-bit reals standing in for token embeddings or
/// hidden states. Construction rejects empty or non-finite data.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f64>);

impl EmbeddingMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, KernelError> {
        let (l, d) = values.dim();
        if l == 0 || d == 0 {
            return Err(KernelError::EmptyMatrix(l, d));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite("embedding matrix"));
        }
        Ok(Self(values))
    }

    pub fn tokens(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }
}

/// Numerically stable softmax over a slice, in place. The result is
/// non-negative and sums to 1.
pub(crate) fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn ensure_finite(values: &Array2<f64>, what: &'static str) -> Result<(), KernelError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite(what));
    }
    Ok(())
}
