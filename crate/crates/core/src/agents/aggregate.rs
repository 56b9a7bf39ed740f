use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

/// One value-model judgment: the chosen rationale, the aggregated value and
/// the raw per-sample values it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub rationale: String,
    pub value: f64,
    pub samples: Vec<f64>,
    pub aggregation: Aggregation,
}

impl ValueEstimate {
    /// A deterministic estimate repeated `n` times (oracles, memorised models).
    pub fn fixed(rationale: impl Into<String>, value: f64, n: usize, aggregation: Aggregation) -> Self {
        Self { rationale: rationale.into(), value, samples: vec![value; n.max(1)], aggregation }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Aggregates parsed samples. The rationale is taken from the sample whose
/// value is nearest the median, first in sample order on ties.
pub fn aggregate_estimate(samples: &[(String, f64)], aggregation: Aggregation) -> Result<ValueEstimate, AgentError> {
    if samples.is_empty() {
        return Err(AgentError::NoSamples);
    }
    let values: Vec<f64> = samples.iter().map(|(_, v)| *v).collect();
    let med = median(&values);
    let value = match aggregation {
        Aggregation::Mean => mean(&values),
        Aggregation::Median => med,
    };
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - med).abs() < (values[best] - med).abs() {
            best = i;
        }
    }
    Ok(ValueEstimate { rationale: samples[best].0.clone(), value, samples: values, aggregation })
}

/// Adds the attribute offset {1→−2, 2→−1, 3→+1, 4→+2} to the value of the
/// preceding product-selection state, clamped to [1, 10].
pub fn attribute_adjust(prior_value: f64, attribute_score: u8) -> Result<f64, AgentError> {
    let offset = match attribute_score {
        1 => -2.0,
        2 => -1.0,
        3 => 1.0,
        4 => 2.0,
        other => return Err(AgentError::InvalidAttributeScore(other)),
    };
    Ok((prior_value + offset).clamp(1.0, 10.0))
}
