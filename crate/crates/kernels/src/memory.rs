//! Slot-memory fusion over hidden states.
//!
//! Each hidden-state row attends over a bank of learnable memory slots
//! (softmax across the slot axis, so the retrieved vector is a convex
//! combination of slots) and blends the result back with weight lambda.

use ndarray::{Array2, Axis};

use crate::{ensure_finite, softmax_inplace, EmbeddingMatrix, KernelError};

/// Bank of N learnable memory slots plus the blend weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    /// N×d slot matrix.
    pub slots: Array2<f64>,
    /// Blend weight in [0, 1]; 0 bypasses the memory entirely.
    pub lambda: f64,
    /// Optional 1/√d score temperature. The retrieval scores carry no
    /// scaling by default; enable this to experiment with scaled scores.
    pub scale_scores: bool,
}

impl MemoryBank {
    pub fn new(slots: Array2<f64>, lambda: f64) -> Result<Self, KernelError> {
        let (n, d) = slots.dim();
        if n == 0 || d == 0 {
            return Err(KernelError::EmptyMatrix(n, d));
        }
        ensure_finite(&slots, "memory slots")?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(KernelError::ShapeMismatch(format!("lambda {lambda} outside [0, 1]")));
        }
        Ok(Self { slots, lambda, scale_scores: false })
    }

    pub fn slot_count(&self) -> usize {
        self.slots.nrows()
    }
}

/// Per-row softmax retrieval weights over the slots: L×N.
pub fn retrieval_weights(hidden: &EmbeddingMatrix, bank: &MemoryBank) -> Result<Array2<f64>, KernelError> {
    if bank.slots.ncols() != hidden.dim() {
        return Err(KernelError::ShapeMismatch(format!(
            "slots have dim {}, hidden states {}",
            bank.slots.ncols(),
            hidden.dim()
        )));
    }
    let mut scores = hidden.array().dot(&bank.slots.t());
    if bank.scale_scores {
        scores /= (hidden.dim() as f64).sqrt();
    }
    for mut row in scores.axis_iter_mut(Axis(0)) {
        softmax_inplace(row.as_slice_mut().expect("contiguous"));
    }
    Ok(scores)
}

/// Retrieve latent knowledge from the bank and blend it with the hidden
/// states: `out = (1-λ)·H + λ·Z` where each row of Z is the softmax-weighted
/// combination of slots for that row.
pub fn memory_fuse(hidden: &EmbeddingMatrix, bank: &MemoryBank) -> Result<EmbeddingMatrix, KernelError> {
    let weights = retrieval_weights(hidden, bank)?;
    let retrieved = weights.dot(&bank.slots);
    let out = hidden.array() * (1.0 - bank.lambda) + retrieved * bank.lambda;
    ensure_finite(&out, "fused hidden states")?;
    EmbeddingMatrix::new(out)
}
