//! Policies and value models.
//!
//! A [`Policy`] proposes up to `B` distinct candidate actions for the state at
//! the end of a trajectory. A [`ValueModel`] judges that state and returns a
//! [`ValueEstimate`]: a rationale plus a value on the model's [`ValueScale`].
//! Every value produced from model text goes through [`parse_value`].

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Action, Trajectory};
use crate::envs::EnvError;

pub mod aggregate;
pub mod lookahead;
pub mod policy;
pub mod prompts;
pub mod scale;
pub mod transport;
pub mod value;

pub use aggregate::{aggregate_estimate, attribute_adjust, Aggregation, ValueEstimate};
pub use lookahead::{format_lookahead, parse_simulated_lookahead, SimulatedLookahead};
pub use policy::{exhaustive_game24_proposals, ActionFormat, ExhaustivePolicy, RemotePolicy, ScriptedPolicy};
pub use scale::{
    append_value_phrase, count_value_phrases, format_value, parse_value, strip_value_phrase, MalformedRationale, ValueScale,
};
pub use value::{AttributeAdjusted, DepthRouter, OracleValueModel, RemoteValueModel, ScriptedValueModel};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("malformed rationale: {0}")]
    Malformed(#[from] MalformedRationale),
    #[error("no parseable samples")]
    NoSamples,
    #[error("attribute score {0} is outside 1..=4")]
    InvalidAttributeScore(u8),
    #[error("transport failed: {0}")]
    Transport(#[from] transport::TransportError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("no value scripted for state `{0}`")]
    Unscripted(String),
    #[error("{0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub samples: usize,
    pub aggregation: Aggregation,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { samples: 1, aggregation: Aggregation::Mean }
    }
}

impl Sampling {
    /// Five samples averaged, as used for the web-shopping value prompts.
    pub fn mean_of_five() -> Self {
        Self { samples: 5, aggregation: Aggregation::Mean }
    }

    /// Three samples, median.
    pub fn median_of_three() -> Self {
        Self { samples: 3, aggregation: Aggregation::Median }
    }
}

pub struct ValueRequest<'a> {
    pub trajectory: &'a Trajectory,
    /// Candidate next actions for the evaluated state, when the environment
    /// feeds them to the value model.
    pub candidates: Option<&'a [Action]>,
    pub sampling: Sampling,
    pub seed: u64,
}

pub trait ValueModel: Send + Sync {
    fn name(&self) -> &str;
    fn scale(&self) -> ValueScale;
    fn evaluate(&self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError>;
}

pub struct ProposeRequest<'a> {
    pub trajectory: &'a Trajectory,
    pub branching: usize,
    pub disallowed: &'a BTreeSet<String>,
    /// The environment's legal actions when it can enumerate them.
    pub allowed: Option<&'a [Action]>,
    pub seed: u64,
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;
    fn propose(&self, request: &ProposeRequest<'_>) -> Result<Vec<Action>, AgentError>;
}

impl<V: ValueModel + ?Sized> ValueModel for Arc<V> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn scale(&self) -> ValueScale {
        (**self).scale()
    }
    fn evaluate(&self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError> {
        (**self).evaluate(request)
    }
}

impl<P: Policy + ?Sized> Policy for Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn propose(&self, request: &ProposeRequest<'_>) -> Result<Vec<Action>, AgentError> {
        (**self).propose(request)
    }
}

/// Serializing gate for implementations that cannot take concurrent calls.
pub struct Serialized<T> {
    name: String,
    inner: Mutex<T>,
}

/// Sequential value models, driven through `&mut self`.
pub trait SequentialValueModel: Send {
    fn scale(&self) -> ValueScale;
    fn evaluate(&mut self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError>;
}

impl<T> Serialized<T> {
    pub fn new(name: impl Into<String>, inner: T) -> Self {
        Self { name: name.into(), inner: Mutex::new(inner) }
    }
}

impl<T: SequentialValueModel> ValueModel for Serialized<T> {
    fn name(&self) -> &str {
        &self.name
    }
    fn scale(&self) -> ValueScale {
        self.inner.lock().expect("gate poisoned").scale()
    }
    fn evaluate(&self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError> {
        self.inner.lock().expect("gate poisoned").evaluate(request)
    }
}

/// Drops proposals that are disallowed or repeated, keeping policy order.
pub(crate) fn dedup_proposals(actions: impl IntoIterator<Item = Action>, disallowed: &BTreeSet<String>, limit: usize) -> Vec<Action> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for action in actions {
        if out.len() >= limit {
            break;
        }
        if disallowed.contains(action.text()) || !seen.insert(action.text().to_string()) {
            continue;
        }
        out.push(action);
    }
    out
}
