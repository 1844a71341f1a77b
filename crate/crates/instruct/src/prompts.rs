//! Versioned prompt template assets and their substitution helpers.

/// Version tag of the shipped template set.
pub const PROMPT_VERSION: &str = "v1";

pub const MASK_FILTER_TEMPLATE: &str = include_str!("../assets/v1/mask_filter.txt");
pub const REFERRING_TEMPLATE: &str = include_str!("../assets/v1/referring.txt");
pub const ATTRIBUTE_TEMPLATE: &str = include_str!("../assets/v1/attribute.txt");
pub const CONTEXT_STEP1_TEMPLATE: &str = include_str!("../assets/v1/context_step1.txt");
pub const CONTEXT_STEP2_TEMPLATE: &str = include_str!("../assets/v1/context_step2.txt");
pub const SCORE_REASONING_TEMPLATE: &str = include_str!("../assets/v1/score_reasoning.txt");
pub const SCORE_REFERRING_TEMPLATE: &str = include_str!("../assets/v1/score_referring.txt");

/// Temperature for gate and scoring calls.
pub const JUDGE_TEMPERATURE: f64 = 0.2;
/// Temperature for creative generation calls.
pub const GENERATION_TEMPERATURE: f64 = 0.7;

/// Contextual contour palette, applied in region bbox order.
pub const CONTEXT_PALETTE: [[u8; 3]; 3] = [[255, 0, 0], [0, 255, 0], [0, 0, 255]];

pub fn palette_names(n: usize) -> String {
    ["red", "green", "blue"][..n.min(3)].join(", ")
}

pub fn mask_filter_prompt(category: &str) -> String {
    MASK_FILTER_TEMPLATE.replace("{category}", category)
}

pub fn referring_prompt(category: &str) -> String {
    REFERRING_TEMPLATE.replace("{category}", category)
}

pub fn attribute_prompt(categories: &[String]) -> String {
    ATTRIBUTE_TEMPLATE.replace("{categories}", &categories.join(", "))
}

pub fn context_step1_prompt(region_count: usize) -> String {
    CONTEXT_STEP1_TEMPLATE.replace("{palette}", &palette_names(region_count))
}

pub fn context_step2_prompt(cues: &[String]) -> String {
    let rendered: Vec<String> = cues.iter().map(|c| format!("- {c}")).collect();
    CONTEXT_STEP2_TEMPLATE.replace("{cues}", &rendered.join("\n"))
}

pub fn score_reasoning_prompt(question: &str, explanation: Option<&str>) -> String {
    let block = match explanation {
        Some(e) => format!("Explanation under review:\n{e}\n"),
        None => String::new(),
    };
    SCORE_REASONING_TEMPLATE
        .replace("{question}", question)
        .replace("{explanation_block}", &block)
}

pub fn score_referring_prompt(expression: &str) -> String {
    SCORE_REFERRING_TEMPLATE.replace("{question}", expression)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution_embeds_inputs_verbatim() {
        let p = mask_filter_prompt("Car");
        assert!(p.contains("Stated category: Car"));
        assert!(p.contains("DECISION: KEEP"));
        assert!(p.contains("DECISION: DISCARD"));

        let cats = vec!["Car".to_string(), "Tree".to_string(), "Road".to_string()];
        let a = attribute_prompt(&cats);
        assert!(a.contains("Car, Tree, Road"));
        assert!(a.contains("Question:"));

        let s1 = context_step1_prompt(2);
        assert!(s1.contains("red, green"));
        assert!(!s1.contains("blue"));

        let s2 = context_step2_prompt(&["near the road".into(), "larger".into()]);
        assert!(s2.contains("- near the road\n- larger"));
        assert!(s2.contains("Explanation:"));
    }

    #[test]
    fn templates_carry_their_markers() {
        assert!(REFERRING_TEMPLATE.contains("Question:"));
        assert!(SCORE_REASONING_TEMPLATE.contains("SCORES:"));
        assert!(SCORE_REFERRING_TEMPLATE.contains("SCORES:"));
        assert!(CONTEXT_STEP1_TEMPLATE.contains("Cues:"));
    }
}
