//! Reasoning eligibility: semantic-diversity selection of images and the
//! per-category reasoning type rule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use segforge_core::instance::InstanceRegion;

use crate::InstructError;

/// Keep the images whose distinct-category count reaches the top `quantile`
/// of the empirical distribution, ties at the cut value included.
pub fn diversity_filter(
    per_image_category_counts: &BTreeMap<String, usize>,
    quantile: f64,
) -> Result<BTreeSet<String>, InstructError> {
    if per_image_category_counts.is_empty() {
        return Err(InstructError::EmptyCorpus);
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(InstructError::BadQuantile(quantile));
    }
    let n = per_image_category_counts.len();
    let mut counts: Vec<usize> = per_image_category_counts.values().copied().collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let keep = ((quantile * n as f64).ceil() as usize).clamp(1, n);
    let cut = counts[keep - 1];
    Ok(per_image_category_counts
        .iter()
        .filter(|(_, &c)| c >= cut)
        .map(|(img, _)| img.clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReasoningKind {
    Attribute,
    Contextual,
    Ineligible,
}

/// Reasoning assignment for one category of a patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningAssignment {
    pub category: u16,
    pub same_category_count: usize,
    pub kind: ReasoningKind,
}

/// Classify a category by its surviving (post-filter) region count: a lone
/// instance asks about attributes, two or three ask about context, more are
/// too ambiguous to use.
pub fn assign_reasoning_type(
    surviving_regions: &[InstanceRegion],
    category: u16,
) -> Result<ReasoningAssignment, InstructError> {
    let count = surviving_regions.iter().filter(|r| r.category == category).count();
    if count == 0 {
        return Err(InstructError::CategoryAbsent(category));
    }
    let kind = match count {
        1 => ReasoningKind::Attribute,
        2 | 3 => ReasoningKind::Contextual,
        _ => ReasoningKind::Ineligible,
    };
    Ok(ReasoningAssignment { category, same_category_count: count, kind })
}
