use std::sync::Arc;

use serde::Serialize;

use crate::agents::{format_lookahead, strip_value_phrase, MalformedRationale, ValueEstimate, ValueScale};
use crate::domain::{Action, State};

/// One step of real lookahead from `state`: its best evaluated successor and
/// the discounted target `gamma * value(best_successor)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LookaheadRecord {
    #[serde(skip)]
    pub state: Arc<State>,
    pub best_action: Action,
    #[serde(skip)]
    pub best_successor: Arc<State>,
    pub successor_rationale: String,
    pub successor_value: f64,
    pub target: f64,
    pub gamma: f64,
}

/// Picks the highest-valued successor (first on ties) and discounts its value.
/// `None` when there are no successors.
pub fn lookahead_target(
    state: &Arc<State>,
    successors: &[(Action, Arc<State>, ValueEstimate)],
    gamma: f64,
) -> Option<LookaheadRecord> {
    let mut best = successors.first()?;
    for entry in &successors[1..] {
        if entry.2.value > best.2.value {
            best = entry;
        }
    }
    let (action, successor, estimate) = best;
    Some(LookaheadRecord {
        state: Arc::clone(state),
        best_action: action.clone(),
        best_successor: Arc::clone(successor),
        successor_rationale: estimate.rationale.clone(),
        successor_value: estimate.value,
        target: gamma * estimate.value,
        gamma,
    })
}

/// The training completion: best action, its observed successor and the
/// successor's rationale under the section labels, closed by the target value.
pub fn build_action_outcome(record: &LookaheadRecord, scale: ValueScale) -> Result<String, MalformedRationale> {
    let body = strip_value_phrase(&record.successor_rationale, scale)?;
    format_lookahead(record.best_action.text(), &record.best_successor.observation, &body, record.target, scale)
}
