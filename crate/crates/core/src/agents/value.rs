use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::aggregate::{aggregate_estimate, attribute_adjust, mean, median, Aggregation, ValueEstimate};
use super::prompts::{PromptRole, PromptSet};
use super::scale::{append_value_phrase, parse_value, strip_value_phrase, ValueScale};
use super::transport::{ChatClient, ChatMessage};
use super::{AgentError, ValueModel, ValueRequest};
use crate::domain::{render_context, Trajectory};
use crate::envs::{Game24Env, Game24Oracle, ScriptedEnvironment, Verdict};

/// Exact Game-of-24 evaluator: 20 when 24 is still reachable, else 0.001.
#[derive(Debug, Default)]
pub struct OracleValueModel {
    oracle: Game24Oracle,
}

impl OracleValueModel {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ValueModel for OracleValueModel {
    fn name(&self) -> &str {
        "oracle"
    }

    fn scale(&self) -> ValueScale {
        ValueScale::Game24
    }

    fn evaluate(&self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError> {
        let state = Game24Env::decode(request.trajectory.last_state())?;
        let verdict = self.oracle.verdict(&state.numbers)?;
        let numbers = state.numbers_text();
        let (rationale, value) = match verdict {
            Verdict::Sure => (format!("{numbers}: an exact sequence of combinations reaches 24\nsure"), 20.0),
            Verdict::Impossible => (format!("{numbers}: no sequence of combinations reaches 24\nimpossible"), 0.001),
        };
        Ok(ValueEstimate::fixed(rationale, value, request.sampling.samples, request.sampling.aggregation))
    }
}

/// Combines a prior (product-selection) estimate with an attribute-scale
/// estimate: each attribute sample becomes `prior + offset`, clamped to [1, 10].
pub fn adjust_with_prior(prior: &ValueEstimate, attribute: &ValueEstimate, base: ValueScale) -> Result<ValueEstimate, AgentError> {
    let samples = attribute
        .samples
        .iter()
        .map(|s| attribute_adjust(prior.value, s.round() as u8))
        .collect::<Result<Vec<_>, _>>()?;
    let value = match attribute.aggregation {
        Aggregation::Mean => mean(&samples),
        Aggregation::Median => median(&samples),
    };
    let body = strip_value_phrase(&attribute.rationale, ValueScale::Attribute4)?;
    let rationale = append_value_phrase(&body, value, base)?;
    Ok(ValueEstimate { rationale, value, samples, aggregation: attribute.aggregation })
}

/// The trajectory cut back to the last state that is not an attribute selection.
fn prior_trajectory(trajectory: &Trajectory, is_attribute: &dyn Fn(&Trajectory) -> bool) -> Result<Trajectory, AgentError> {
    let mut len = trajectory.steps.len();
    while len > 0 && is_attribute(&trajectory.prefix(len)) {
        len -= 1;
    }
    if len == 0 {
        return Err(AgentError::Precondition("attribute selection without a prior product state".into()));
    }
    Ok(trajectory.prefix(len))
}

/// Routes attribute-selection states to a 4-point attribute model and adds
/// its offset to the base model's value of the preceding product state.
pub struct AttributeAdjusted {
    base: Arc<dyn ValueModel>,
    attribute: Arc<dyn ValueModel>,
    is_attribute: Box<dyn Fn(&Trajectory) -> bool + Send + Sync>,
}

impl AttributeAdjusted {
    pub fn new(
        base: Arc<dyn ValueModel>,
        attribute: Arc<dyn ValueModel>,
        is_attribute: impl Fn(&Trajectory) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self { base, attribute, is_attribute: Box::new(is_attribute) }
    }
}

impl ValueModel for AttributeAdjusted {
    fn name(&self) -> &str {
        self.base.name()
    }

    fn scale(&self) -> ValueScale {
        self.base.scale()
    }

    fn evaluate(&self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError> {
        if !(self.is_attribute)(request.trajectory) {
            return self.base.evaluate(request);
        }
        let prior_trajectory = prior_trajectory(request.trajectory, &*self.is_attribute)?;
        let prior = self.base.evaluate(&ValueRequest { trajectory: &prior_trajectory, ..*request })?;
        let attribute = self.attribute.evaluate(request)?;
        adjust_with_prior(&prior, &attribute, self.base.scale())
    }
}

/// Replays rationales stored on fixture nodes. Sample `i` reads rationale
/// `i mod len`; a sample that fails to parse is re-drawn at most twice.
/// Nodes flagged `attribute` are read on the 4-point scale and adjusted
/// against the preceding product state.
pub struct ScriptedValueModel {
    env: Arc<ScriptedEnvironment>,
    scale: ValueScale,
    malformed: AtomicU64,
}

impl ScriptedValueModel {
    pub fn new(env: Arc<ScriptedEnvironment>) -> Result<Self, AgentError> {
        let scale = match env.value_scale() {
            Some(s) => s.parse().map_err(AgentError::Precondition)?,
            None => ValueScale::Likert10,
        };
        Ok(Self { env, scale, malformed: AtomicU64::new(0) })
    }

    pub fn malformed_count(&self) -> u64 {
        self.malformed.load(Ordering::SeqCst)
    }

    fn is_attribute(&self, trajectory: &Trajectory) -> bool {
        self.env.node(&trajectory.last_state().id).is_some_and(|n| n.attribute)
    }

    fn sample(&self, trajectory: &Trajectory, scale: ValueScale, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError> {
        let id = &trajectory.last_state().id;
        let node = self.env.node(id).ok_or_else(|| AgentError::Unscripted(id.clone()))?;
        if node.rationales.is_empty() {
            return Err(AgentError::Unscripted(id.clone()));
        }
        let mut parsed = Vec::new();
        let mut cursor = 0;
        for _ in 0..request.sampling.samples.max(1) {
            for _attempt in 0..3 {
                let text = &node.rationales[cursor % node.rationales.len()];
                cursor += 1;
                match parse_value(text, scale) {
                    Ok(v) => {
                        parsed.push((text.clone(), v));
                        break;
                    }
                    Err(_) => {
                        self.malformed.fetch_add(1, Ordering::SeqCst);
                    }
                }
            }
        }
        aggregate_estimate(&parsed, request.sampling.aggregation)
    }
}

impl ValueModel for ScriptedValueModel {
    fn name(&self) -> &str {
        "scripted"
    }

    fn scale(&self) -> ValueScale {
        self.scale
    }

    fn evaluate(&self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError> {
        if !self.is_attribute(request.trajectory) {
            return self.sample(request.trajectory, self.scale, request);
        }
        let check = |t: &Trajectory| self.is_attribute(t);
        let prior_trajectory = prior_trajectory(request.trajectory, &check)?;
        let prior = self.sample(&prior_trajectory, self.scale, request)?;
        let attribute = self.sample(request.trajectory, ValueScale::Attribute4, request)?;
        adjust_with_prior(&prior, &attribute, self.scale)
    }
}

/// Prompts a remote model for each sample, parses the value, and aggregates.
pub struct RemoteValueModel {
    client: ChatClient,
    prompts: PromptSet,
    role: PromptRole,
    scale: ValueScale,
    feed_candidates: bool,
    malformed: AtomicU64,
}

impl RemoteValueModel {
    pub fn new(client: ChatClient, prompts: PromptSet, scale: ValueScale) -> Self {
        Self { client, prompts, role: PromptRole::Value, scale, feed_candidates: false, malformed: AtomicU64::new(0) }
    }

    /// Uses the attribute prompt and the 4-point scale.
    pub fn attribute(client: ChatClient, prompts: PromptSet) -> Self {
        Self { role: PromptRole::Attribute, ..Self::new(client, prompts, ValueScale::Attribute4) }
    }

    pub fn feeding_candidates(mut self, feed: bool) -> Self {
        self.feed_candidates = feed;
        self
    }

    pub fn malformed_count(&self) -> u64 {
        self.malformed.load(Ordering::SeqCst)
    }

    fn prompt(&self, request: &ValueRequest<'_>) -> Result<String, AgentError> {
        let template = self
            .prompts
            .template(self.role)
            .ok_or_else(|| AgentError::Precondition(format!("no value prompt for {}", self.prompts.family)))?;
        let trajectory = request.trajectory;
        let last_action = match trajectory.steps.last() {
            Some((a, s)) => format!("Action: {}\nObservation: {}", a.text(), s.observation),
            None => String::new(),
        };
        let candidates = match (self.feed_candidates, request.candidates) {
            (true, Some(list)) if !list.is_empty() => {
                let lines: Vec<&str> = list.iter().map(|a| a.text()).collect();
                format!("Possible next actions:\n{}", lines.join("\n"))
            }
            _ => String::new(),
        };
        let mut values = BTreeMap::new();
        values.insert("few_shot", self.prompts.few_shot.clone());
        values.insert("task", trajectory.task.instruction.clone());
        values.insert("input", render_context(trajectory));
        values.insert("trajectory", render_context(trajectory));
        values.insert("last_action", last_action);
        values.insert("candidate_actions", candidates);
        Ok(template.render(&values))
    }
}

impl ValueModel for RemoteValueModel {
    fn name(&self) -> &str {
        &self.client.model
    }

    fn scale(&self) -> ValueScale {
        self.scale
    }

    fn evaluate(&self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError> {
        let prompt = self.prompt(request)?;
        let task_id = &request.trajectory.task.id;
        let mut parsed = Vec::new();
        let mut draw = 0u64;
        for _ in 0..request.sampling.samples.max(1) {
            for _attempt in 0..3 {
                let seed = crate::seed::derive(request.seed, "value-draw", draw);
                draw += 1;
                let content = self.client.complete(task_id, vec![ChatMessage::user(prompt.clone())], Some(seed))?;
                match parse_value(&content, self.scale) {
                    Ok(v) => {
                        parsed.push((content, v));
                        break;
                    }
                    Err(err) => {
                        log::debug!("malformed value sample: {err}");
                        self.malformed.fetch_add(1, Ordering::SeqCst);
                    }
                }
            }
        }
        aggregate_estimate(&parsed, request.sampling.aggregation)
    }
}

/// Per-depth value models with a fallback for unmapped depths.
#[derive(Clone)]
pub struct DepthRouter {
    by_depth: BTreeMap<usize, Arc<dyn ValueModel>>,
    fallback: Arc<dyn ValueModel>,
}

impl DepthRouter {
    pub fn new(fallback: Arc<dyn ValueModel>) -> Self {
        Self { by_depth: BTreeMap::new(), fallback }
    }

    pub fn with_depth(mut self, depth: usize, model: Arc<dyn ValueModel>) -> Self {
        self.by_depth.insert(depth, model);
        self
    }

    pub fn insert(&mut self, depth: usize, model: Arc<dyn ValueModel>) {
        self.by_depth.insert(depth, model);
    }

    pub fn route(&self, depth: usize) -> &Arc<dyn ValueModel> {
        self.by_depth.get(&depth).unwrap_or(&self.fallback)
    }

    pub fn fallback(&self) -> &Arc<dyn ValueModel> {
        &self.fallback
    }

    pub fn mapped_depths(&self) -> Vec<usize> {
        self.by_depth.keys().copied().collect()
    }
}

impl ValueModel for DepthRouter {
    fn name(&self) -> &str {
        "router"
    }

    fn scale(&self) -> ValueScale {
        self.fallback.scale()
    }

    fn evaluate(&self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError> {
        self.route(request.trajectory.depth()).evaluate(request)
    }
}
