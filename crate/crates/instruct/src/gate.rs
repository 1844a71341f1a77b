//! Model-backed quality gate over outline-rendered candidates.

use segforge_core::filter::{parse_gate_decision, FilterStage, FilterVerdict, GateDecision, RejectReason};
use segforge_core::instance::InstanceRegion;
use segforge_core::raster::RasterImage;
use segforge_gateway::{ChatRequest, Gateway, Message};

use crate::generate::render_region_png;
use crate::prompts;
use crate::InstructError;

/// Ask the judge model whether an outlined candidate region is a sound
/// standalone segmentation target. Transport failures propagate as errors
/// (never a silent drop); an off-contract response rejects the region with
/// the unparsable flag.
pub fn model_gate(
    image: &RasterImage,
    region: &InstanceRegion,
    category_name: &str,
    gateway: &Gateway,
    model: &str,
) -> Result<FilterVerdict, InstructError> {
    let png = render_region_png(image, region)?;
    let prompt = prompts::mask_filter_prompt(category_name);
    let req = ChatRequest::new(model, vec![Message::user(prompt).with_png(&png)])
        .with_temperature(prompts::JUDGE_TEMPERATURE)
        .with_request_id(format!("{}:gate", region.region_id));
    let response = gateway.chat(&req)?;

    let mut verdict = match parse_gate_decision(&response) {
        GateDecision::Keep => FilterVerdict::kept(&region.region_id, FilterStage::ModelGate),
        GateDecision::Discard => FilterVerdict::rejected(
            &region.region_id,
            FilterStage::ModelGate,
            RejectReason::GateReject,
        ),
        GateDecision::Unparsable => FilterVerdict::rejected(
            &region.region_id,
            FilterStage::ModelGate,
            RejectReason::GateUnparsable,
        ),
    };
    verdict.gate_rationale = Some(response.trim().to_string());
    Ok(verdict)
}
