//! Dual-evaluator quality scoring of generated instructions.
//!
//! Two distinct judge models score every referring/reasoning record along
//! task-specific dimensions (integers 1-10). A record is accepted only when
//! every score from both evaluators reaches its per-dimension threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use segforge_core::Task;
use segforge_gateway::{ChatRequest, Gateway, Message};

use crate::markers::extract_scores;
use crate::prompts;
use crate::{InstructError, InstructionRecord, ScoreMap};

pub const REASONING_DIMENSIONS: [&str; 6] =
    ["complexity", "consistency", "uniqueness", "mask_quality", "clarity", "conciseness"];
pub const REFERRING_DIMENSIONS: [&str; 4] = ["clarity", "grounding", "consistency", "uniqueness"];

/// Per-dimension acceptance thresholds (>= semantics) on the 1-10 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreThresholds {
    pub default: u8,
    #[serde(default)]
    pub overrides: BTreeMap<String, u8>,
}

impl Default for ScoreThresholds {
    fn default() -> Self {
        Self { default: 7, overrides: BTreeMap::new() }
    }
}

impl ScoreThresholds {
    pub fn for_dimension(&self, dimension: &str) -> u8 {
        self.overrides.get(dimension).copied().unwrap_or(self.default)
    }
}

/// One evaluator handle: the model name the gateway should address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluatorHandle {
    pub name: String,
}

pub fn dimensions_for(task: Task) -> Result<&'static [&'static str], InstructError> {
    match task {
        Task::Reasoning => Ok(&REASONING_DIMENSIONS),
        Task::Referring => Ok(&REFERRING_DIMENSIONS),
        Task::Interactive => Err(InstructError::NotScorable(task)),
    }
}

/// Outcome of scoring one record.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    pub scores: Option<ScoreMap>,
    pub accepted: bool,
    /// Set when an evaluator's score block could not be parsed; the record
    /// is rejected and flagged for audit.
    pub unparsable: Option<String>,
}

/// Score a record with both evaluators and apply the thresholds. The
/// returned record carries the score map and the acceptance flag; an
/// unparsable score block rejects the record and names the evaluator.
pub fn score_triplet(
    mut record: InstructionRecord,
    rendered_png: &[u8],
    gateway: &Gateway,
    evaluators: &[EvaluatorHandle; 2],
    thresholds: &ScoreThresholds,
) -> Result<(InstructionRecord, ScoreOutcome), InstructError> {
    if evaluators[0].name == evaluators[1].name {
        return Err(InstructError::DistinctEvaluatorsRequired);
    }
    let dimensions = dimensions_for(record.task)?;
    let prompt = match record.task {
        Task::Reasoning => {
            prompts::score_reasoning_prompt(&record.text, record.answer_explanation.as_deref())
        }
        Task::Referring => prompts::score_referring_prompt(&record.text),
        Task::Interactive => unreachable!("dimensions_for rejected interactive"),
    };

    let mut all: ScoreMap = BTreeMap::new();
    for evaluator in evaluators {
        let req = ChatRequest::new(
            evaluator.name.clone(),
            vec![Message::user(prompt.clone()).with_png(rendered_png)],
        )
        .with_temperature(prompts::JUDGE_TEMPERATURE)
        .with_request_id(format!("{}:score:{}", record.record_id, evaluator.name));
        let response = gateway.chat(&req)?;
        match extract_scores(&response, dimensions) {
            Ok(scores) => {
                all.insert(evaluator.name.clone(), scores);
            }
            Err(_) => {
                record.scores = None;
                record.accepted = false;
                let outcome = ScoreOutcome {
                    scores: None,
                    accepted: false,
                    unparsable: Some(evaluator.name.clone()),
                };
                return Ok((record, outcome));
            }
        }
    }

    let accepted = all
        .values()
        .all(|dims| dims.iter().all(|(d, &s)| s >= thresholds.for_dimension(d)));
    record.scores = Some(all.clone());
    record.accepted = accepted;
    let outcome = ScoreOutcome { scores: Some(all), accepted, unparsable: None };
    Ok((record, outcome))
}
