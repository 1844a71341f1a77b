//! Model-backed generation of referring and reasoning instructions.
//!
//! Each call renders the relevant region(s) onto the patch image, sends the
//! appropriate prompt through the gateway, and parses the labeled markers
//! out of the response.

use segforge_core::filter::render_outline;
use segforge_core::instance::InstanceRegion;
use segforge_core::raster::{encode_image_png, RasterImage};
use segforge_gateway::{ChatRequest, Gateway, Message};

use crate::markers::{extract_cues, extract_line_after};
use crate::prompts;
use crate::InstructError;

/// Contour styling for single-region prompt renderings.
pub const GATE_CONTOUR_COLOR: [u8; 3] = [255, 0, 0];
pub const GATE_CONTOUR_THICKNESS: u32 = 3;

/// Outline one region for a prompt attachment.
pub fn render_region_png(image: &RasterImage, region: &InstanceRegion) -> Result<Vec<u8>, InstructError> {
    let rendered = render_outline(image, region, GATE_CONTOUR_THICKNESS, GATE_CONTOUR_COLOR);
    Ok(encode_image_png(&rendered)?)
}

/// Outline 2-3 regions in distinct palette colors (bbox order) on one image.
pub fn render_context_png(
    image: &RasterImage,
    regions: &[&InstanceRegion],
) -> Result<Vec<u8>, InstructError> {
    let mut rendered = image.clone();
    for (i, region) in regions.iter().enumerate() {
        rendered = render_outline(
            &rendered,
            region,
            GATE_CONTOUR_THICKNESS,
            prompts::CONTEXT_PALETTE[i.min(2)],
        );
    }
    Ok(encode_image_png(&rendered)?)
}

fn generation_request(model: &str, prompt: String, png: &[u8], request_id: &str) -> ChatRequest {
    ChatRequest::new(model, vec![Message::user(prompt).with_png(png)])
        .with_temperature(prompts::GENERATION_TEMPERATURE)
        .with_request_id(request_id)
}

/// Generate one referring expression for an outlined region. The text after
/// the first "Question:" marker is the expression.
pub fn gen_referring(
    image: &RasterImage,
    region: &InstanceRegion,
    category_name: &str,
    gateway: &Gateway,
    model: &str,
) -> Result<String, InstructError> {
    let png = render_region_png(image, region)?;
    let prompt = prompts::referring_prompt(category_name);
    let req = generation_request(model, prompt, &png, &region.region_id);
    let response = gateway.chat(&req)?;
    extract_line_after(&response, "Question:")
}

/// Generate one attribute-reasoning question; the patch's category list is
/// embedded verbatim in the prompt.
pub fn gen_attribute_question(
    image: &RasterImage,
    region: &InstanceRegion,
    patch_categories: &[String],
    gateway: &Gateway,
    model: &str,
) -> Result<String, InstructError> {
    let png = render_region_png(image, region)?;
    let prompt = prompts::attribute_prompt(patch_categories);
    let req = generation_request(model, prompt, &png, &region.region_id);
    let response = gateway.chat(&req)?;
    extract_line_after(&response, "Question:")
}

/// A contextual-reasoning question assembled from the two-step exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextQuestion {
    pub cues: Vec<String>,
    pub question: String,
    pub explanation: String,
}

/// Two-step contextual generation: step 1 shows all same-category regions in
/// distinct contour colors and asks for distinguishing cues; step 2 feeds
/// the cues with the original image and asks for the question and a concise
/// explanation. A parse failure carries the step it happened in.
pub fn gen_context_question(
    image: &RasterImage,
    regions: &[&InstanceRegion],
    gateway: &Gateway,
    model: &str,
) -> Result<ContextQuestion, InstructError> {
    if !(2..=3).contains(&regions.len()) {
        return Err(InstructError::WrongRegionCount(regions.len()));
    }
    if regions.iter().any(|r| r.category != regions[0].category) {
        return Err(InstructError::MixedCategories);
    }

    let stage = |n: u8| move |e: InstructError| InstructError::StageFailed { stage: n, source: Box::new(e) };

    let step1_png = render_context_png(image, regions)?;
    let step1_req = generation_request(
        model,
        prompts::context_step1_prompt(regions.len()),
        &step1_png,
        &format!("{}:ctx1", regions[0].region_id),
    );
    let step1_response = gateway.chat(&step1_req).map_err(InstructError::from).map_err(stage(1))?;
    let cues = extract_cues(&step1_response).map_err(stage(1))?;

    let original_png = encode_image_png(image)?;
    let step2_req = generation_request(
        model,
        prompts::context_step2_prompt(&cues),
        &original_png,
        &format!("{}:ctx2", regions[0].region_id),
    );
    let step2_response = gateway.chat(&step2_req).map_err(InstructError::from).map_err(stage(2))?;
    let question = extract_line_after(&step2_response, "Question:").map_err(stage(2))?;
    let explanation = extract_line_after(&step2_response, "Explanation:").map_err(stage(2))?;

    Ok(ContextQuestion { cues, question, explanation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use segforge_core::instance::region_stats;
    use segforge_gateway::{GatewayConfig, MockResponder};

    fn region(category: u16, x0: u32, y0: u32, w: u32, h: u32, id: &str) -> InstanceRegion {
        let pixels: Vec<(u32, u32)> =
            (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| (x, y))).collect();
        let (area, bbox, centroid) = region_stats(&pixels).unwrap();
        InstanceRegion { category, pixels, area, bbox, centroid, region_id: id.into() }
    }

    fn mock_gateway(mock: MockResponder) -> Gateway {
        Gateway::with_backend(&GatewayConfig::default(), Box::new(mock)).unwrap()
    }

    fn image() -> RasterImage {
        RasterImage::filled(32, 32, 3, 90, "src")
    }

    #[test]
    fn referring_extracts_after_the_marker() {
        let gateway = mock_gateway(
            MockResponder::new().with_rule("referring expression", "Question: the pond left of the road"),
        );
        let r = region(23, 4, 4, 8, 8, "r0");
        let text = gen_referring(&image(), &r, "Pond", &gateway, "generator").unwrap();
        assert_eq!(text, "the pond left of the road");
    }

    #[test]
    fn referring_without_marker_is_a_format_error() {
        let gateway = mock_gateway(MockResponder::new().with_fallback("no marker at all"));
        let r = region(23, 4, 4, 8, 8, "r0");
        assert!(matches!(
            gen_referring(&image(), &r, "Pond", &gateway, "generator"),
            Err(InstructError::MissingMarker("Question:"))
        ));
    }

    #[test]
    fn attribute_prompt_embeds_category_list() {
        // fixture keyed on content hash: the category list must land in the
        // prompt verbatim for the fixture to hit
        let r = region(63, 4, 4, 8, 8, "r0");
        let png = render_region_png(&image(), &r).unwrap();
        let expected_prompt =
            prompts::attribute_prompt(&["Car".to_string(), "Tree".to_string()]);
        assert!(expected_prompt.contains("Car, Tree"));
        let req = generation_request("generator", expected_prompt, &png, "r0");
        let gateway =
            mock_gateway(MockResponder::new().strict().with_fixture_for(&req, "Question: what moves here?"));
        let out = gen_attribute_question(
            &image(),
            &r,
            &["Car".to_string(), "Tree".to_string()],
            &gateway,
            "generator",
        )
        .unwrap();
        assert_eq!(out, "what moves here?");
    }

    #[test]
    fn context_two_step_assembles_all_parts() {
        let gateway = mock_gateway(
            MockResponder::new()
                .with_rule("distinct contour color", "Cues:\n- the left one borders the road\n- the right one is larger")
                .with_rule("contextual reasoning question", "Question: which pond feeds the canal?\nExplanation: the left pond touches the canal inlet."),
        );
        let a = region(5, 2, 2, 6, 6, "ra");
        let b = region(5, 20, 2, 6, 6, "rb");
        let out = gen_context_question(&image(), &[&a, &b], &gateway, "generator").unwrap();
        assert_eq!(out.cues.len(), 2);
        assert_eq!(out.question, "which pond feeds the canal?");
        assert_eq!(out.explanation, "the left pond touches the canal inlet.");
    }

    #[test]
    fn context_step2_failure_is_tagged_stage_two() {
        let gateway = mock_gateway(
            MockResponder::new()
                .with_rule("distinct contour color", "Cues:\n- a cue\n- another cue")
                .with_rule("contextual reasoning question", "free prose, no markers"),
        );
        let a = region(5, 2, 2, 6, 6, "ra");
        let b = region(5, 20, 2, 6, 6, "rb");
        match gen_context_question(&image(), &[&a, &b], &gateway, "generator") {
            Err(InstructError::StageFailed { stage: 2, .. }) => {}
            other => panic!("expected stage-2 failure, got {other:?}"),
        }
    }

    #[test]
    fn context_rejects_bad_region_sets() {
        let gateway = mock_gateway(MockResponder::new().with_fallback("x"));
        let a = region(5, 2, 2, 6, 6, "ra");
        assert!(matches!(
            gen_context_question(&image(), &[&a], &gateway, "generator"),
            Err(InstructError::WrongRegionCount(1))
        ));
        let b = region(6, 20, 2, 6, 6, "rb");
        assert!(matches!(
            gen_context_question(&image(), &[&a, &b], &gateway, "generator"),
            Err(InstructError::MixedCategories)
        ));
    }

    #[test]
    fn context_rendering_uses_palette_in_region_order() {
        let a = region(5, 2, 2, 6, 6, "ra");
        let b = region(5, 20, 2, 6, 6, "rb");
        let mut rendered = image();
        for (i, r) in [&a, &b].iter().enumerate() {
            rendered = render_outline(&rendered, r, GATE_CONTOUR_THICKNESS, prompts::CONTEXT_PALETTE[i]);
        }
        // first region wears red, second green
        assert_eq!(rendered.pixel(2, 2), [255, 0, 0]);
        assert_eq!(rendered.pixel(20, 2), [0, 255, 0]);
        // deterministic bytes
        let x = render_context_png(&image(), &[&a, &b]).unwrap();
        let y = render_context_png(&image(), &[&a, &b]).unwrap();
        assert_eq!(x, y);
    }
}
