//! Two-stage mask filtering: deterministic geometric rules, then a random
//! per-category cap. The model-backed gate that follows lives upstream with
//! the gateway wiring; this module also renders the outline visualization the
//! gate consumes and parses its decision token.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{within_distance, InstanceRegion};
use crate::raster::RasterImage;

/// Thresholds for the rule stage and the cap stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Minimum region area as a fraction of patch area (inclusive).
    pub area_min: f64,
    /// Maximum region area as a fraction of patch area (inclusive).
    pub area_max: f64,
    /// A region is disqualified when its category has more regions than this
    /// in the patch.
    pub max_siblings: usize,
    /// Regions with a same-category neighbor at or within this Euclidean
    /// distance (pixels) are rejected, both members of the pair.
    pub proximity_px: f64,
    /// Maximum surviving regions per category per patch.
    pub cap_per_category: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            area_min: 0.005,
            area_max: 0.70,
            max_siblings: 6,
            proximity_px: 15.0,
            cap_per_category: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterStage {
    Rule,
    Cap,
    ModelGate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    TooSmall,
    TooLarge,
    TooManySiblings,
    TooClose,
    CapSampledOut,
    GateReject,
    GateUnparsable,
}

/// One keep/reject decision for one region at one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub region_id: String,
    pub kept: bool,
    pub stage: FilterStage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_rationale: Option<String>,
}

impl FilterVerdict {
    pub fn kept(region_id: &str, stage: FilterStage) -> Self {
        Self { region_id: region_id.into(), kept: true, stage, reason: None, gate_rationale: None }
    }

    pub fn rejected(region_id: &str, stage: FilterStage, reason: RejectReason) -> Self {
        Self {
            region_id: region_id.into(),
            kept: false,
            stage,
            reason: Some(reason),
            gate_rationale: None,
        }
    }
}

/// Apply the geometric rules to all regions of one patch. Every region gets
/// exactly one verdict; the first failing rule (size, then sibling count,
/// then proximity) is the recorded reason.
pub fn rule_filter(
    regions: &[InstanceRegion],
    patch_area: u64,
    cfg: &FilterConfig,
) -> Vec<FilterVerdict> {
    assert!(patch_area > 0, "patch_area must be positive");
    let mut siblings: BTreeMap<u16, usize> = BTreeMap::new();
    for r in regions {
        *siblings.entry(r.category).or_default() += 1;
    }
    // proximity is mutual: both members of a ≤ radius pair go
    let mut too_close = vec![false; regions.len()];
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            if regions[i].category == regions[j].category
                && !(too_close[i] && too_close[j])
                && within_distance(&regions[i], &regions[j], cfg.proximity_px)
            {
                too_close[i] = true;
                too_close[j] = true;
            }
        }
    }

    regions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let fraction = r.area as f64 / patch_area as f64;
            if fraction < cfg.area_min {
                FilterVerdict::rejected(&r.region_id, FilterStage::Rule, RejectReason::TooSmall)
            } else if fraction > cfg.area_max {
                FilterVerdict::rejected(&r.region_id, FilterStage::Rule, RejectReason::TooLarge)
            } else if siblings[&r.category] > cfg.max_siblings {
                FilterVerdict::rejected(
                    &r.region_id,
                    FilterStage::Rule,
                    RejectReason::TooManySiblings,
                )
            } else if too_close[i] {
                FilterVerdict::rejected(&r.region_id, FilterStage::Rule, RejectReason::TooClose)
            } else {
                FilterVerdict::kept(&r.region_id, FilterStage::Rule)
            }
        })
        .collect()
}

/// Randomly keep at most `cap_per_category` regions per category, uniformly
/// without replacement. Input regions must already have passed the rules.
pub fn cap_per_category(
    kept: &[InstanceRegion],
    cap: usize,
    rng: &mut impl Rng,
) -> Vec<FilterVerdict> {
    let mut by_cat: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, r) in kept.iter().enumerate() {
        by_cat.entry(r.category).or_default().push(i);
    }
    let mut survives = vec![false; kept.len()];
    for (_, indices) in by_cat {
        if indices.len() <= cap {
            for i in indices {
                survives[i] = true;
            }
            continue;
        }
        // partial Fisher-Yates: the first `cap` slots are a uniform sample
        let mut pool = indices;
        for slot in 0..cap {
            let j = rng.gen_range(slot..pool.len());
            pool.swap(slot, j);
            survives[pool[slot]] = true;
        }
    }
    kept.iter()
        .zip(&survives)
        .map(|(r, &s)| {
            if s {
                FilterVerdict::kept(&r.region_id, FilterStage::Cap)
            } else {
                FilterVerdict::rejected(&r.region_id, FilterStage::Cap, RejectReason::CapSampledOut)
            }
        })
        .collect()
}

/// Pixels of the region with a non-region 8-neighbor, dilated to the given
/// stroke thickness (Chebyshev radius (thickness-1)/2).
pub fn contour_pixels(region: &InstanceRegion, thickness: u32) -> Vec<(u32, u32)> {
    let boundary = region.boundary_pixels();
    if thickness <= 1 {
        return boundary;
    }
    let r = ((thickness - 1) / 2) as i64;
    let mut out = std::collections::BTreeSet::new();
    for (x, y) in boundary {
        for dy in -r..=r {
            for dx in -r..=r {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx >= 0 && ny >= 0 {
                    out.insert((nx as u32, ny as u32));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Copy of `image` with the region contour recolored; all other pixels stay
/// bit-identical. Color components beyond the image's channel count are
/// dropped (alpha is never touched).
pub fn render_outline(
    image: &RasterImage,
    region: &InstanceRegion,
    thickness: u32,
    color: [u8; 3],
) -> RasterImage {
    let mut out = image.clone();
    for (x, y) in contour_pixels(region, thickness) {
        if x >= out.width || y >= out.height {
            continue;
        }
        let px = out.pixel_mut(x, y);
        let n = px.len().min(3);
        px[..n].copy_from_slice(&color[..n]);
    }
    out
}

/// Outcome of parsing a gate transcript's final decision token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Keep,
    Discard,
    Unparsable,
}

/// The gate contract demands a final line `DECISION: KEEP` or
/// `DECISION: DISCARD`; the last occurrence wins, anything else is
/// unparsable (and rejected, flagged for audit).
pub fn parse_gate_decision(response: &str) -> GateDecision {
    let Some(pos) = response.rfind("DECISION:") else {
        return GateDecision::Unparsable;
    };
    let tail = response[pos + "DECISION:".len()..].trim();
    let token = tail.split_whitespace().next().unwrap_or("");
    match token.trim_end_matches(['.', ',', '!']) {
        "KEEP" => GateDecision::Keep,
        "DISCARD" => GateDecision::Discard,
        _ => GateDecision::Unparsable,
    }
}
