//! Instruction generation for the three segmentation task families.
//!
//! Interactive instructions (point and box prompts) are generated entirely
//! from mask geometry and a seed. Referring and reasoning instructions go
//! through chat models via the gateway, with marker-based parsing, a
//! model-backed quality gate on outline renderings, and dual-evaluator
//! scoring against per-dimension thresholds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use segforge_core::metrics::NormBox;
use segforge_core::Task;

pub mod diversity;
pub mod gate;
pub mod generate;
pub mod markers;
pub mod points;
pub mod prompts;
pub mod score;

pub use diversity::{assign_reasoning_type, diversity_filter, ReasoningAssignment, ReasoningKind};
pub use gate::model_gate;
pub use generate::{gen_attribute_question, gen_context_question, gen_referring, ContextQuestion};
pub use points::{box_instruction, point_instruction, sample_points, PointRule};
pub use score::{score_triplet, ScoreThresholds, REASONING_DIMENSIONS, REFERRING_DIMENSIONS};

#[derive(Debug, Error)]
pub enum InstructError {
    #[error("region has no pixels")]
    EmptyRegion,
    #[error("point prompts carry 1-3 points, got {0}")]
    BadPointCount(usize),
    #[error("cannot draw {k} distinct pixels from a region of area {area}")]
    PointCountExceedsArea { k: usize, area: u64 },
    #[error("response lacks the '{0}' marker")]
    MissingMarker(&'static str),
    #[error("unparsable score block: {0}")]
    BadScoreBlock(String),
    #[error("empty image corpus")]
    EmptyCorpus,
    #[error("quantile must lie in (0, 1], got {0}")]
    BadQuantile(f64),
    #[error("category {0} has no surviving region in this patch")]
    CategoryAbsent(u16),
    #[error("contextual generation needs 2-3 regions, got {0}")]
    WrongRegionCount(usize),
    #[error("contextual regions must share one category")]
    MixedCategories,
    #[error("the two evaluator handles must be distinct")]
    DistinctEvaluatorsRequired,
    #[error("{0} records are not model-scored")]
    NotScorable(Task),
    #[error("context generation failed at step {stage}: {source}")]
    StageFailed { stage: u8, source: Box<InstructError> },
    #[error(transparent)]
    Gateway(#[from] segforge_gateway::GatewayError),
    #[error(transparent)]
    Raster(#[from] segforge_core::raster::RasterError),
}

/// Interactive prompt flavor or reasoning flavor of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSubtype {
    Point,
    Box,
    Attribute,
    Contextual,
}

impl TaskSubtype {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskSubtype::Point => "point",
            TaskSubtype::Box => "box",
            TaskSubtype::Attribute => "attribute",
            TaskSubtype::Contextual => "contextual",
        }
    }
}

/// Per-evaluator, per-dimension integer scores (1-10).
pub type ScoreMap = BTreeMap<String, BTreeMap<String, u8>>;

/// One image-mask-instruction triplet: the dataset's atomic unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub record_id: String,
    pub patch_id: String,
    pub region_ids: Vec<String>,
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subtype: Option<TaskSubtype>,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_explanation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_points: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_box: Option<NormBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreMap>,
    pub accepted: bool,
}

impl InstructionRecord {
    /// Check the structural invariants; scored acceptance is re-checked
    /// against the thresholds when scores are present.
    pub fn validate(&self, thresholds: &ScoreThresholds) -> Result<(), String> {
        match self.task {
            Task::Interactive => {
                let points = self.prompt_points.is_some();
                let boxed = self.prompt_box.is_some();
                if points == boxed {
                    return Err(format!(
                        "interactive record {} must carry exactly one of points/box",
                        self.record_id
                    ));
                }
            }
            Task::Reasoning => {
                let expect = match self.subtype {
                    Some(TaskSubtype::Contextual) => (2..=3).contains(&self.region_ids.len()),
                    _ => self.region_ids.len() == 1,
                };
                if !expect {
                    return Err(format!(
                        "reasoning record {} has {} region ids for subtype {:?}",
                        self.record_id,
                        self.region_ids.len(),
                        self.subtype
                    ));
                }
            }
            Task::Referring => {
                if self.region_ids.len() != 1 {
                    return Err(format!(
                        "referring record {} must reference exactly one region",
                        self.record_id
                    ));
                }
            }
        }
        for (x, y) in self.prompt_points.iter().flatten() {
            if !((0.0..=1.0).contains(x) && (0.0..=1.0).contains(y)) {
                return Err(format!("record {} has a point outside [0,1]", self.record_id));
            }
        }
        if let Some(b) = &self.prompt_box {
            for v in [b.x_min, b.y_min, b.x_max, b.y_max] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("record {} has a box edge outside [0,1]", self.record_id));
                }
            }
        }
        if self.accepted {
            if let Some(scores) = &self.scores {
                for (evaluator, dims) in scores {
                    for (dim, &s) in dims {
                        if s < thresholds.for_dimension(dim) {
                            return Err(format!(
                                "record {} is accepted but {evaluator}/{dim}={s} is below threshold",
                                self.record_id
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
