//! Progressive task sampling for multi-task training.
//!
//! The interactive share decays linearly to a final multiplier of its base
//! share over the course of training; the mass it releases moves to the
//! reasoning task while the referring share stays put.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::Task;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("base shares must contain all three tasks with positive weights")]
    MissingShares,
    #[error("base shares sum to {0}, expected 1")]
    SharesNotNormalized(f64),
    #[error("final multiplier must lie in (0, 1], got {0}")]
    BadMultiplier(f64),
    #[error("total_steps must be >= 1")]
    NoSteps,
    #[error("step {step} is outside [0, {total}]")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("weights are malformed: {0}")]
    BadWeights(String),
}

/// Per-task sampling probabilities as a function of training progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    pub base_shares: BTreeMap<Task, f64>,
    pub interactive_final_multiplier: f64,
    pub total_steps: u64,
}

impl SamplingSchedule {
    pub fn new(
        base_shares: BTreeMap<Task, f64>,
        interactive_final_multiplier: f64,
        total_steps: u64,
    ) -> Result<Self, ScheduleError> {
        if Task::ALL.iter().any(|t| base_shares.get(t).copied().unwrap_or(0.0) <= 0.0) {
            return Err(ScheduleError::MissingShares);
        }
        let sum: f64 = base_shares.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ScheduleError::SharesNotNormalized(sum));
        }
        if !(interactive_final_multiplier > 0.0 && interactive_final_multiplier <= 1.0) {
            return Err(ScheduleError::BadMultiplier(interactive_final_multiplier));
        }
        if total_steps == 0 {
            return Err(ScheduleError::NoSteps);
        }
        Ok(Self { base_shares, interactive_final_multiplier, total_steps })
    }

    /// Data-proportional shares from raw per-task sample counts.
    pub fn from_counts(
        counts: &BTreeMap<Task, u64>,
        interactive_final_multiplier: f64,
        total_steps: u64,
    ) -> Result<Self, ScheduleError> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(ScheduleError::MissingShares);
        }
        let shares = counts.iter().map(|(&t, &c)| (t, c as f64 / total as f64)).collect();
        Self::new(shares, interactive_final_multiplier, total_steps)
    }

    /// Linear decay multiplier: 1 at step 0, the final multiplier at the end.
    pub fn multiplier_at(&self, step: u64) -> Result<f64, ScheduleError> {
        if step > self.total_steps {
            return Err(ScheduleError::StepOutOfRange { step, total: self.total_steps });
        }
        let progress = step as f64 / self.total_steps as f64;
        Ok(1.0 - (1.0 - self.interactive_final_multiplier) * progress)
    }

    /// Sampling weights at a step. The interactive base share is scaled by
    /// the decay multiplier and the released mass is handed to reasoning.
    pub fn weights_at(&self, step: u64) -> Result<BTreeMap<Task, f64>, ScheduleError> {
        let m = self.multiplier_at(step)?;
        let base_int = self.base_shares[&Task::Interactive];
        let mut weights = self.base_shares.clone();
        weights.insert(Task::Interactive, base_int * m);
        *weights.get_mut(&Task::Reasoning).unwrap() += base_int * (1.0 - m);
        Ok(weights)
    }
}

/// Seeded categorical draw over task weights (inverse CDF in task order).
pub fn draw_task(weights: &BTreeMap<Task, f64>, rng: &mut impl Rng) -> Result<Task, ScheduleError> {
    if weights.is_empty() {
        return Err(ScheduleError::BadWeights("no weights".into()));
    }
    let mut sum = 0.0;
    for (&t, &w) in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(ScheduleError::BadWeights(format!("weight for {t} is {w}")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(ScheduleError::BadWeights(format!("weights sum to {sum}")));
    }
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    let mut last = None;
    for (&t, &w) in weights {
        acc += w;
        last = Some(t);
        if u < acc {
            return Ok(t);
        }
    }
    Ok(last.expect("non-empty weights"))
}
