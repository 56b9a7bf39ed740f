//! Shared domain types: tasks, actions, states, trajectories and training examples.
//!
//! All types are immutable once built. States link to their parents through
//! [`Arc`], so a leaf state carries its full lineage back to the task's
//! initial state and can be shared freely across rollouts.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Rollout,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    #[serde(default)]
    pub split: Split,
}

impl Task {
    /// Builds a task; returns `None` when the instruction is blank.
    pub fn new(id: impl Into<String>, instruction: impl Into<String>, split: Split) -> Option<Self> {
        let instruction = instruction.into();
        if instruction.trim().is_empty() {
            return None;
        }
        Some(Self { id: id.into(), instruction, split })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    SearchLike,
    ClickLike,
    Combine,
    Finish,
    Other,
}

/// A canonicalised action string.
///
/// Canonicalisation trims the text and collapses internal whitespace runs to a
/// single space. Case is preserved: product codes are case-significant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    text: String,
    kind: ActionKind,
}

impl Action {
    /// Returns `None` if the canonical text is empty.
    pub fn new(text: &str) -> Option<Self> {
        let text = canonicalize_action(text);
        if text.is_empty() {
            return None;
        }
        let kind = infer_kind(&text);
        Some(Self { text, kind })
    }

    pub fn with_kind(text: &str, kind: ActionKind) -> Option<Self> {
        Self::new(text).map(|a| Self { kind, ..a })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

pub fn canonicalize_action(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn infer_kind(text: &str) -> ActionKind {
    let lower = text.to_ascii_lowercase();
    if lower.starts_with("search[") {
        ActionKind::SearchLike
    } else if lower.starts_with("click[") {
        ActionKind::ClickLike
    } else if lower.starts_with("finish[") {
        ActionKind::Finish
    } else if lower.starts_with("lookup[") {
        ActionKind::SearchLike
    } else if looks_like_combination(text) {
        ActionKind::Combine
    } else {
        ActionKind::Other
    }
}

// "a op b = c" with a single binary operator between two operands.
fn looks_like_combination(text: &str) -> bool {
    let parts: Vec<&str> = text.split(' ').collect();
    parts.len() == 5
        && matches!(parts[1], "+" | "-" | "*" | "/" | "−" | "×" | "÷")
        && parts[3] == "="
}

/// A node in an environment's state space.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub id: String,
    pub depth: usize,
    pub observation: String,
    pub incoming_action: Option<Action>,
    pub parent: Option<Arc<State>>,
    /// Environment-provided canonical form. When present, [`state_key`] hashes
    /// this instead of the rendered trajectory (e.g. a sorted number multiset).
    pub canonical: Option<String>,
}

impl State {
    pub fn root(id: impl Into<String>, observation: impl Into<String>) -> Arc<Self> {
        Arc::new(Self {
            id: id.into(),
            depth: 0,
            observation: observation.into(),
            incoming_action: None,
            parent: None,
            canonical: None,
        })
    }

    pub fn child(
        parent: &Arc<State>,
        action: Action,
        id: impl Into<String>,
        observation: impl Into<String>,
    ) -> Arc<Self> {
        Arc::new(Self {
            id: id.into(),
            depth: parent.depth + 1,
            observation: observation.into(),
            incoming_action: Some(action),
            parent: Some(Arc::clone(parent)),
            canonical: None,
        })
    }

    pub fn with_canonical(self: Arc<Self>, canonical: impl Into<String>) -> Arc<Self> {
        let mut state = Arc::unwrap_or_clone(self);
        state.canonical = Some(canonical.into());
        Arc::new(state)
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

/// The path from a task's initial state to some state, as (action, state) steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub task: Task,
    pub root: Arc<State>,
    pub steps: Vec<(Action, Arc<State>)>,
}

impl Trajectory {
    pub fn new(task: Task, root: Arc<State>) -> Self {
        Self { task, root, steps: Vec::new() }
    }

    /// Rebuilds the trajectory by walking parent links from `leaf` to its root.
    pub fn from_leaf(task: Task, leaf: &Arc<State>) -> Self {
        let mut chain = vec![Arc::clone(leaf)];
        let mut cursor = Arc::clone(leaf);
        while let Some(parent) = cursor.parent.clone() {
            chain.push(Arc::clone(&parent));
            cursor = parent;
        }
        chain.reverse();
        let root = chain.remove(0);
        let steps = chain
            .into_iter()
            .map(|s| {
                let action = s.incoming_action.clone().expect("non-root state has an incoming action");
                (action, s)
            })
            .collect();
        Self { task, root, steps }
    }

    pub fn last_state(&self) -> &Arc<State> {
        self.steps.last().map(|(_, s)| s).unwrap_or(&self.root)
    }

    pub fn depth(&self) -> usize {
        self.last_state().depth
    }

    pub fn extended(&self, action: Action, state: Arc<State>) -> Self {
        let mut next = self.clone();
        next.steps.push((action, state));
        next
    }

    /// The trajectory truncated to its first `len` steps.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            task: self.task.clone(),
            root: Arc::clone(&self.root),
            steps: self.steps[..len.min(self.steps.len())].to_vec(),
        }
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|(a, _)| a)
    }
}

/// Renders the prompt context for a trajectory: the instruction followed by
/// alternating `Action:` / `Observation:` lines.
pub fn render_context(trajectory: &Trajectory) -> String {
    let mut out = trajectory.task.instruction.clone();
    for (action, state) in &trajectory.steps {
        out.push_str("\nAction: ");
        out.push_str(action.text());
        out.push_str("\nObservation: ");
        out.push_str(&state.observation);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateKey(pub String);

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Content hash identifying a state within a task, independent of iteration
/// and of object identity.
pub fn state_key(task: &Task, trajectory: &Trajectory) -> StateKey {
    let mut hasher = Sha256::new();
    match &trajectory.last_state().canonical {
        Some(canonical) => {
            hasher.update(b"canonical\x1f");
            hasher.update(task.instruction.as_bytes());
            hasher.update(b"\x1f");
            hasher.update(canonical.as_bytes());
        }
        None => {
            hasher.update(b"context\x1f");
            hasher.update(render_context(trajectory).as_bytes());
        }
    }
    let digest = hasher.finalize();
    StateKey(hex::encode(&digest[..16]))
}

/// One supervised example: the trajectory context ending at a state and the
/// lookahead completion (action-outcome rationale followed by the target value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub task_id: String,
    pub depth: usize,
    pub iteration: usize,
    pub context: String,
    pub completion: String,
    pub state_key: StateKey,
}
