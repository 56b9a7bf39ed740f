//! Value scales and the scaffolding phrase that carries a value in rationale text.
//!
//! Likert-style scales accept two surface forms after the phrase
//! `Thus the correctness score is` (a comma after "Thus" is allowed):
//!
//! * base form `... is 6` – the number must be in the scale's admissible set;
//! * lookahead form `... is 6.00 / 10.00` – the number must lie within the
//!   scale bounds, since lookahead targets are aggregated and discounted.
//!
//! The Game-of-24 scale carries its value as a label on the final line:
//! `sure` (20), `likely` (1) or `impossible` (0.001).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCORE_PHRASE: &str = "Thus, the correctness score is";
const PHRASE_VARIANTS: [&str; 2] = ["thus the correctness score is", "thus, the correctness score is"];
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueScale {
    /// {1, 2, 4, 6, 8, 10}
    Likert10,
    /// {1, 3, 5, 7, 10}
    Likert10Odd,
    /// {1, 2, 3, 4}, mapped to offsets {-2, -1, +1, +2}
    Attribute4,
    /// {0.001, 1, 20}
    Game24,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MalformedRationale {
    #[error("value scaffolding phrase missing")]
    ScaffoldingMissing,
    #[error("no number after the scaffolding phrase")]
    NumberMissing,
    #[error("value {0} is outside the admissible set")]
    OutOfScale(f64),
    #[error("conflicting terminal labels")]
    ConflictingLabels,
    #[error("segment `{0}` missing or out of order")]
    SegmentMissing(&'static str),
    #[error("value {0} cannot be rendered on this scale")]
    Unformattable(f64),
}

impl ValueScale {
    pub fn admissible(self) -> &'static [f64] {
        match self {
            ValueScale::Likert10 => &[1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            ValueScale::Likert10Odd => &[1.0, 3.0, 5.0, 7.0, 10.0],
            ValueScale::Attribute4 => &[1.0, 2.0, 3.0, 4.0],
            ValueScale::Game24 => &[0.001, 1.0, 20.0],
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            ValueScale::Likert10 | ValueScale::Likert10Odd => (1.0, 10.0),
            ValueScale::Attribute4 => (1.0, 4.0),
            ValueScale::Game24 => (0.001, 20.0),
        }
    }

    pub fn upper(self) -> f64 {
        self.bounds().1
    }

    pub fn contains(self, value: f64) -> bool {
        let (lo, hi) = self.bounds();
        value >= lo - EPS && value <= hi + EPS
    }

    pub fn is_admissible(self, value: f64) -> bool {
        self.admissible().iter().any(|a| (a - value).abs() < EPS)
    }

    /// Proxy reward in [0, 1]: the value divided by the scale's upper bound.
    pub fn normalize(self, value: f64) -> f64 {
        value / self.upper()
    }

    fn separator(self) -> &'static str {
        match self {
            ValueScale::Game24 => "\n",
            _ => " ",
        }
    }
}

impl fmt::Display for ValueScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueScale::Likert10 => "likert10",
            ValueScale::Likert10Odd => "likert10-odd",
            ValueScale::Attribute4 => "attribute4",
            ValueScale::Game24 => "game24",
        })
    }
}

impl FromStr for ValueScale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "likert10" => Ok(ValueScale::Likert10),
            "likert10-odd" => Ok(ValueScale::Likert10Odd),
            "attribute4" => Ok(ValueScale::Attribute4),
            "game24" => Ok(ValueScale::Game24),
            other => Err(format!("unknown value scale `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Sure,
    Likely,
    Impossible,
}

impl Label {
    fn value(self) -> f64 {
        match self {
            Label::Sure => 20.0,
            Label::Likely => 1.0,
            Label::Impossible => 0.001,
        }
    }

    fn word(self) -> &'static str {
        match self {
            Label::Sure => "sure",
            Label::Likely => "likely",
            Label::Impossible => "impossible",
        }
    }

    fn from_value(value: f64) -> Option<Self> {
        [Label::Sure, Label::Likely, Label::Impossible].into_iter().find(|l| (l.value() - value).abs() < EPS)
    }
}

fn labels_in(line: &str) -> Vec<Label> {
    let mut found = Vec::new();
    for token in line.split(|c: char| !c.is_ascii_alphabetic()) {
        let label = match token.to_ascii_lowercase().as_str() {
            "sure" => Label::Sure,
            "likely" => Label::Likely,
            "impossible" => Label::Impossible,
            _ => continue,
        };
        if !found.contains(&label) {
            found.push(label);
        }
    }
    found
}

/// Byte range of the final non-empty line.
fn last_line(text: &str) -> Option<(usize, &str)> {
    let trimmed = text.trim_end();
    if trimmed.trim().is_empty() {
        return None;
    }
    let start = trimmed.rfind('\n').map(|i| i + 1).unwrap_or(0);
    Some((start, &trimmed[start..]))
}

/// Start offsets of every scaffolding phrase, with the phrase length.
fn phrase_positions(text: &str) -> Vec<(usize, usize)> {
    let lower = text.to_ascii_lowercase();
    let mut hits = Vec::new();
    for variant in PHRASE_VARIANTS {
        let mut from = 0;
        while let Some(i) = lower[from..].find(variant) {
            hits.push((from + i, variant.len()));
            from += i + variant.len();
        }
    }
    hits.sort();
    hits
}

fn parse_number_prefix(text: &str) -> Option<(f64, usize)> {
    let bytes = text.as_bytes();
    let mut end = 0;
    while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.' || (end == 0 && bytes[end] == b'-')) {
        end += 1;
    }
    // A sentence-final period is not part of the number.
    let mut number_end = end;
    while number_end > 0 && bytes[number_end - 1] == b'.' {
        number_end -= 1;
    }
    text[..number_end].parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| (v, number_end))
}

/// Extracts the value carried by a rationale on the given scale.
pub fn parse_value(text: &str, scale: ValueScale) -> Result<f64, MalformedRationale> {
    if scale == ValueScale::Game24 {
        let (_, line) = last_line(text).ok_or(MalformedRationale::ScaffoldingMissing)?;
        let labels = labels_in(line);
        return match labels.as_slice() {
            [] => Err(MalformedRationale::ScaffoldingMissing),
            [label] => Ok(label.value()),
            _ => Err(MalformedRationale::ConflictingLabels),
        };
    }
    let (start, len) = *phrase_positions(text).last().ok_or(MalformedRationale::ScaffoldingMissing)?;
    let rest = text[start + len..].trim_start();
    let (value, used) = parse_number_prefix(rest).ok_or(MalformedRationale::NumberMissing)?;
    let after = rest[used..].trim_start();
    if let Some(denominator) = after.strip_prefix('/') {
        let (denominator, _) = parse_number_prefix(denominator.trim_start()).ok_or(MalformedRationale::NumberMissing)?;
        if (denominator - scale.upper()).abs() > EPS || !scale.contains(value) {
            return Err(MalformedRationale::OutOfScale(value));
        }
        Ok(value)
    } else if scale.is_admissible(value) {
        Ok(value)
    } else {
        Err(MalformedRationale::OutOfScale(value))
    }
}

/// Renders a value as the terminal scaffolding phrase for the scale.
///
/// Likert scales use at least two decimals (`6.00 / 10.00`) and more only when
/// needed to round-trip the value exactly.
pub fn format_value(value: f64, scale: ValueScale) -> Result<String, MalformedRationale> {
    if scale == ValueScale::Game24 {
        return Label::from_value(value).map(|l| l.word().to_string()).ok_or(MalformedRationale::Unformattable(value));
    }
    if !value.is_finite() || !scale.contains(value) {
        return Err(MalformedRationale::Unformattable(value));
    }
    Ok(format!("{SCORE_PHRASE} {} / {}.", fixed_min2(value), fixed_min2(scale.upper())))
}

fn fixed_min2(value: f64) -> String {
    let two = format!("{value:.2}");
    if two.parse::<f64>().ok() == Some(value) {
        two
    } else {
        value.to_string()
    }
}

/// The rationale with its terminal value phrase removed (trailing whitespace trimmed).
pub fn strip_value_phrase(text: &str, scale: ValueScale) -> Result<String, MalformedRationale> {
    parse_value(text, scale)?;
    let cut = if scale == ValueScale::Game24 {
        last_line(text).map(|(start, _)| start).ok_or(MalformedRationale::ScaffoldingMissing)?
    } else {
        phrase_positions(text).last().map(|&(start, _)| start).ok_or(MalformedRationale::ScaffoldingMissing)?
    };
    Ok(text[..cut].trim_end().to_string())
}

/// Appends the formatted value phrase to a rationale body.
pub fn append_value_phrase(body: &str, value: f64, scale: ValueScale) -> Result<String, MalformedRationale> {
    let phrase = format_value(value, scale)?;
    Ok(if body.is_empty() { phrase } else { format!("{body}{}{phrase}", scale.separator()) })
}

/// Number of value phrases in `text`: phrase occurrences for Likert scales,
/// label-bearing lines for Game-of-24.
pub fn count_value_phrases(text: &str, scale: ValueScale) -> usize {
    if scale == ValueScale::Game24 {
        text.lines().filter(|l| !labels_in(l).is_empty()).count()
    } else {
        phrase_positions(text).len()
    }
}
