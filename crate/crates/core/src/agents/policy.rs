use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use super::prompts::{PromptRole, PromptSet};
use super::transport::{ChatClient, ChatMessage};
use super::{dedup_proposals, AgentError, Policy, ProposeRequest};
use crate::domain::{render_context, Action};
use crate::envs::{Game24Env, Game24State};

/// Proposes the environment's enumerable actions in enumeration order.
#[derive(Debug, Default, Clone)]
pub struct ExhaustivePolicy;

impl Policy for ExhaustivePolicy {
    fn name(&self) -> &str {
        "exhaustive"
    }

    fn propose(&self, request: &ProposeRequest<'_>) -> Result<Vec<Action>, AgentError> {
        let allowed = request
            .allowed
            .ok_or_else(|| AgentError::Precondition("exhaustive policy needs an enumerable environment".into()))?;
        Ok(dedup_proposals(allowed.iter().cloned(), request.disallowed, request.branching))
    }
}

/// Game-of-24 proposals in documented order: pairs by sorted index, then
/// `+`, `-`, `*`, `/`, commutative duplicates removed.
pub fn exhaustive_game24_proposals(
    state: &Game24State,
    branching: usize,
    disallowed: &BTreeSet<String>,
) -> Result<Vec<Action>, AgentError> {
    if state.is_terminal() {
        return Err(AgentError::Precondition("cannot propose from a terminal state".into()));
    }
    let actions = state
        .legal_moves()
        .into_iter()
        .map(|(i, j, op)| Game24Env::combine_action(state, i, j, op))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(dedup_proposals(actions, disallowed, branching))
}

/// Fixed per-state proposal lists, falling back to the environment's actions.
#[derive(Debug, Default, Clone)]
pub struct ScriptedPolicy {
    proposals: BTreeMap<String, Vec<String>>,
}

impl ScriptedPolicy {
    pub fn new(proposals: BTreeMap<String, Vec<String>>) -> Self {
        Self { proposals }
    }

    /// Loads a JSON object mapping state ids to ordered action lists.
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::Precondition(format!("reading {}: {e}", path.display())))?;
        let proposals = serde_json::from_str(&text)
            .map_err(|e| AgentError::Precondition(format!("parsing {}: {e}", path.display())))?;
        Ok(Self { proposals })
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        "scripted"
    }

    fn propose(&self, request: &ProposeRequest<'_>) -> Result<Vec<Action>, AgentError> {
        let state = request.trajectory.last_state();
        match self.proposals.get(&state.id) {
            Some(list) => Ok(dedup_proposals(list.iter().filter_map(|a| Action::new(a)), request.disallowed, request.branching)),
            None => ExhaustivePolicy.propose(request),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionFormat {
    /// `Action: <action>` lines.
    React,
    /// `a op b = c (left: ...)` lines.
    Game24,
}

/// Extracts every action in a completion, in order of appearance.
pub fn parse_actions(content: &str, format: ActionFormat) -> Vec<Action> {
    content
        .lines()
        .filter_map(|line| {
            let line = line.trim();
            let line = ["- ", "* ", "• "].iter().find_map(|m| line.strip_prefix(m)).unwrap_or(line);
            match format {
                ActionFormat::React => {
                    let lower = line.to_ascii_lowercase();
                    if !lower.starts_with("action") {
                        return None;
                    }
                    let (_, rest) = line.split_once(':')?;
                    Action::new(rest)
                }
                ActionFormat::Game24 => {
                    let expr = line.split(" (left").next()?.trim();
                    let tokens: Vec<&str> = expr.split_whitespace().collect();
                    let ok = tokens.len() == 5 && tokens[3] == "=" && crate::envs::Op::parse(tokens[1]).is_some();
                    if ok {
                        Action::new(expr)
                    } else {
                        None
                    }
                }
            }
        })
        .collect()
}

/// Harvests up to `B` distinct actions from repeated remote calls. Each call
/// sees the growing not-allowed list; echoed actions outside the environment's
/// allowed set are rejected.
pub struct RemotePolicy {
    client: ChatClient,
    prompts: PromptSet,
    format: ActionFormat,
    max_calls: usize,
    malformed: AtomicU64,
    rejected: AtomicU64,
}

impl RemotePolicy {
    pub fn new(client: ChatClient, prompts: PromptSet, format: ActionFormat, max_calls: usize) -> Self {
        Self { client, prompts, format, max_calls, malformed: AtomicU64::new(0), rejected: AtomicU64::new(0) }
    }

    pub fn malformed_count(&self) -> u64 {
        self.malformed.load(Ordering::SeqCst)
    }

    pub fn rejected_count(&self) -> u64 {
        self.rejected.load(Ordering::SeqCst)
    }

    fn prompt(&self, request: &ProposeRequest<'_>, not_allowed: &BTreeSet<String>) -> Result<String, AgentError> {
        let template = self
            .prompts
            .template(PromptRole::Policy)
            .ok_or_else(|| AgentError::Precondition(format!("no policy prompt for {}", self.prompts.family)))?;
        let list = |items: Vec<&str>| if items.is_empty() { "None".to_string() } else { items.join("\n") };
        let possible = match request.allowed {
            Some(allowed) => list(allowed.iter().map(Action::text).filter(|a| !not_allowed.contains(*a)).collect()),
            None => "Any valid action".to_string(),
        };
        let mut values = BTreeMap::new();
        values.insert("few_shot", self.prompts.few_shot.clone());
        values.insert("task", request.trajectory.task.instruction.clone());
        values.insert("trajectory", render_context(request.trajectory));
        values.insert("not_allowed_actions", list(not_allowed.iter().map(String::as_str).collect()));
        values.insert("possible_actions", possible);
        Ok(template.render(&values))
    }
}

impl Policy for RemotePolicy {
    fn name(&self) -> &str {
        &self.client.model
    }

    fn propose(&self, request: &ProposeRequest<'_>) -> Result<Vec<Action>, AgentError> {
        let mut not_allowed = request.disallowed.clone();
        let allowed: Option<BTreeSet<&str>> = request.allowed.map(|a| a.iter().map(Action::text).collect());
        let mut proposals = Vec::new();
        for call in 0..self.max_calls {
            if proposals.len() >= request.branching {
                break;
            }
            let prompt = self.prompt(request, &not_allowed)?;
            let seed = crate::seed::derive(request.seed, "policy-call", call as u64);
            let content = self.client.complete(&request.trajectory.task.id, vec![ChatMessage::user(prompt)], Some(seed))?;
            let parsed = parse_actions(&content, self.format);
            if parsed.is_empty() {
                self.malformed.fetch_add(1, Ordering::SeqCst);
                continue;
            }
            for action in parsed {
                if proposals.len() >= request.branching {
                    break;
                }
                if not_allowed.contains(action.text()) {
                    continue;
                }
                if allowed.as_ref().is_some_and(|set| !set.contains(action.text())) {
                    self.rejected.fetch_add(1, Ordering::SeqCst);
                    continue;
                }
                not_allowed.insert(action.text().to_string());
                proposals.push(action);
            }
        }
        Ok(proposals)
    }
}
