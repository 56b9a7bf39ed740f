//! Formatting and parsing of lookahead completions: the best next action, the
//! observed successor, and the successor's reflection, followed by the value.

use super::scale::{append_value_phrase, parse_value, strip_value_phrase, MalformedRationale, ValueScale};

pub const PREAMBLE: &str = "I will evaluate the best successor state from the current state:";
pub const ACTION_LABEL: &str = "Best Next Action:";
pub const OBSERVATION_LABEL: &str = "Observation of Best Successor State:";
pub const REFLECTION_LABEL: &str = "Reflection of the Best Successor State:";

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLookahead {
    pub action: String,
    pub observation: String,
    pub rationale: String,
    pub value: f64,
}

/// Renders `action ∥ observation ∥ rationale` under the section labels and
/// closes with the value phrase for `value`.
pub fn format_lookahead(
    action: &str,
    observation: &str,
    rationale: &str,
    value: f64,
    scale: ValueScale,
) -> Result<String, MalformedRationale> {
    let reflection = append_value_phrase(rationale, value, scale)?;
    Ok(format!(
        "{PREAMBLE}\n\n{ACTION_LABEL} {action}\n\n{OBSERVATION_LABEL} {observation}\n\n{REFLECTION_LABEL} {reflection}"
    ))
}

/// Splits a lookahead completion back into its segments. Segments must appear
/// in order: action, observation, reflection.
pub fn parse_simulated_lookahead(text: &str, scale: ValueScale) -> Result<SimulatedLookahead, MalformedRationale> {
    let a = text.find(ACTION_LABEL).ok_or(MalformedRationale::SegmentMissing(ACTION_LABEL))?;
    let a_end = a + ACTION_LABEL.len();
    let o = text[a_end..]
        .find(OBSERVATION_LABEL)
        .map(|i| a_end + i)
        .ok_or(MalformedRationale::SegmentMissing(OBSERVATION_LABEL))?;
    let o_end = o + OBSERVATION_LABEL.len();
    let r = text[o_end..]
        .find(REFLECTION_LABEL)
        .map(|i| o_end + i)
        .ok_or(MalformedRationale::SegmentMissing(REFLECTION_LABEL))?;
    let tail = &text[r + REFLECTION_LABEL.len()..];
    let value = parse_value(tail, scale)?;
    let rationale = strip_value_phrase(tail, scale)?.trim().to_string();
    Ok(SimulatedLookahead {
        action: text[a_end..o].trim().to_string(),
        observation: text[o_end..r].trim().to_string(),
        rationale,
        value,
    })
}
