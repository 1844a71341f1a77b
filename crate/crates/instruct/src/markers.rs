//! Marker-based extraction from model responses.
//!
//! Model output is free text; the templates demand labeled markers
//! ("Question:", "Cues:", "Explanation:", "SCORES:") and this module turns
//! them into values with first-occurrence semantics.

use std::collections::BTreeMap;

use crate::InstructError;

/// Text after the first occurrence of `marker`, up to the end of that line,
/// trimmed. An absent marker or an empty remainder is a format error.
pub fn extract_line_after(text: &str, marker: &'static str) -> Result<String, InstructError> {
    let pos = text.find(marker).ok_or(InstructError::MissingMarker(marker))?;
    let rest = &text[pos + marker.len()..];
    let line = rest.lines().next().unwrap_or("").trim();
    if line.is_empty() {
        return Err(InstructError::MissingMarker(marker));
    }
    Ok(line.to_string())
}

/// Cue list after the first "Cues:" marker: subsequent non-empty lines with
/// any "-", "*", or "<n>." prefix stripped, stopping at a blank line or
/// another marker. At most three cues are taken.
pub fn extract_cues(text: &str) -> Result<Vec<String>, InstructError> {
    let pos = text.find("Cues:").ok_or(InstructError::MissingMarker("Cues:"))?;
    let rest = &text[pos + "Cues:".len()..];
    let mut cues = Vec::new();
    for line in rest.lines() {
        let line = line.trim();
        if line.is_empty() {
            if cues.is_empty() {
                continue; // allow the marker to sit on its own line
            }
            break;
        }
        if line.ends_with(':') {
            break; // another labeled section starts
        }
        let stripped = line
            .trim_start_matches(|c: char| c == '-' || c == '*' || c.is_ascii_digit() || c == '.')
            .trim();
        if !stripped.is_empty() {
            cues.push(stripped.to_string());
        }
        if cues.len() == 3 {
            break;
        }
    }
    if cues.is_empty() {
        return Err(InstructError::MissingMarker("Cues:"));
    }
    Ok(cues)
}

/// Integer score block after the first "SCORES:" marker. Every expected
/// dimension must appear exactly once with a value in 1..=10.
pub fn extract_scores(
    text: &str,
    dimensions: &[&str],
) -> Result<BTreeMap<String, u8>, InstructError> {
    let pos = text.find("SCORES:").ok_or(InstructError::MissingMarker("SCORES:"))?;
    let rest = &text[pos + "SCORES:".len()..];
    let mut scores = BTreeMap::new();
    for line in rest.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((name, value)) = line.split_once(':') else { continue };
        let name = name.trim().to_lowercase();
        if !dimensions.contains(&name.as_str()) {
            continue;
        }
        let value: i64 = value
            .trim()
            .parse()
            .map_err(|_| InstructError::BadScoreBlock(format!("'{line}' is not an integer")))?;
        if !(1..=10).contains(&value) {
            return Err(InstructError::BadScoreBlock(format!("{name}={value} outside 1..=10")));
        }
        if scores.insert(name.clone(), value as u8).is_some() {
            return Err(InstructError::BadScoreBlock(format!("duplicate dimension {name}")));
        }
    }
    for d in dimensions {
        if !scores.contains_key(*d) {
            return Err(InstructError::BadScoreBlock(format!("missing dimension {d}")));
        }
    }
    Ok(scores)
}
