//! Greedy, beam and MCTS search over an [`Environment`], guided by a policy
//! and a (depth-routed) value model.
//!
//! All three engines share one expansion step: propose actions, materialize
//! each successor through the environment, evaluate each successor. Every
//! transition call counts as one expanded state.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Policy, ProposeRequest, Sampling, ValueModel, ValueRequest};
use crate::domain::Task;
use crate::envs::{EnvError, Environment};
use crate::eval::Ledger;
use crate::seed;

mod beam;
mod greedy;
mod mcts;
mod tree;

pub use beam::{beam_search, terminal_leaves};
pub use greedy::greedy_search;
pub use mcts::mcts_search;
pub use tree::{SearchStats, SearchTree, TreeNode};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("initial state of task `{0}` is terminal")]
    TerminalStart(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Greedy,
    Beam,
    Mcts,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Greedy => "greedy",
            Engine::Beam => "beam",
            Engine::Mcts => "mcts",
        })
    }
}

impl std::str::FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Engine::Greedy),
            "beam" => Ok(Engine::Beam),
            "mcts" => Ok(Engine::Mcts),
            other => Err(format!("unknown engine `{other}` (expected greedy, beam or mcts)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Actions proposed per state (B).
    pub branching: usize,
    pub max_depth: usize,
    pub beam_width: usize,
    pub mcts_iterations: usize,
    /// UCT exploration constant c.
    pub exploration: f64,
    pub seed: u64,
    /// Backs up value / scale upper bound instead of the raw value.
    pub normalize_rewards: bool,
    /// Actions never proposed during search (e.g. irreversible purchases).
    pub excluded_actions: BTreeSet<String>,
    /// Passes the successor's legal actions to the value model.
    pub feed_candidates: bool,
    pub sampling: Sampling,
    /// Beam only: how many proposals to request per state before keeping
    /// the top `branching` by value. `None` requests `branching`.
    pub beam_proposals: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            branching: 5,
            max_depth: 5,
            beam_width: 5,
            mcts_iterations: 5,
            exploration: std::f64::consts::SQRT_2,
            seed: 0,
            normalize_rewards: true,
            excluded_actions: BTreeSet::new(),
            feed_candidates: false,
            sampling: Sampling::default(),
            beam_proposals: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let positive = [
            ("branching", self.branching),
            ("max_depth", self.max_depth),
            ("beam_width", self.beam_width),
            ("mcts_iterations", self.mcts_iterations),
            ("sampling.samples", self.sampling.samples),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(SearchError::Config(format!("{field} must be positive")));
            }
        }
        if self.beam_proposals == Some(0) {
            return Err(SearchError::Config("beam_proposals must be positive".into()));
        }
        if !self.exploration.is_finite() || self.exploration < 0.0 {
            return Err(SearchError::Config("exploration must be a non-negative number".into()));
        }
        Ok(())
    }
}

/// What a search runs against.
#[derive(Clone)]
pub struct SearchContext<'a> {
    pub env: &'a dyn Environment,
    pub policy: &'a dyn Policy,
    pub value: &'a dyn ValueModel,
    pub config: &'a SearchConfig,
    pub ledger: Option<Arc<Ledger>>,
}

impl<'a> SearchContext<'a> {
    pub fn new(env: &'a dyn Environment, policy: &'a dyn Policy, value: &'a dyn ValueModel, config: &'a SearchConfig) -> Self {
        Self { env, policy, value, config, ledger: None }
    }

    pub fn with_ledger(mut self, ledger: Arc<Ledger>) -> Self {
        self.ledger = Some(ledger);
        self
    }

    pub fn run(&self, engine: Engine, task: &Task) -> Result<SearchTree, SearchError> {
        match engine {
            Engine::Greedy => greedy_search(task, self),
            Engine::Beam => beam_search(task, self),
            Engine::Mcts => mcts_search(task, self),
        }
    }

    pub(crate) fn start(&self, task: &Task, engine: Engine) -> Result<SearchTree, SearchError> {
        self.config.validate()?;
        let root = self.env.initial_state(task)?;
        if self.env.is_terminal(&root) {
            return Err(SearchError::TerminalStart(task.id.clone()));
        }
        Ok(SearchTree::new(task.clone(), &engine.to_string(), root, false))
    }

    /// Proposes up to `budget` actions at `node`, materializes and evaluates
    /// each successor. Returns the new children in proposal order.
    pub(crate) fn expand(&self, tree: &mut SearchTree, node: usize, budget: usize) -> Result<Vec<usize>, SearchError> {
        tree.nodes[node].expanded = true;
        let state = Arc::clone(tree.state(node));
        if self.env.is_terminal(&state) {
            return Ok(Vec::new());
        }
        let trajectory = tree.trajectory(node);
        let allowed = self.env.enumerable_actions(&state).map(|actions| {
            actions.into_iter().filter(|a| !self.config.excluded_actions.contains(a.text())).collect::<Vec<_>>()
        });
        let request = ProposeRequest {
            trajectory: &trajectory,
            branching: budget,
            disallowed: &self.config.excluded_actions,
            allowed: allowed.as_deref(),
            seed: seed::derive(self.config.seed, "propose", node as u64),
        };
        let proposals = self.policy.propose(&request)?;
        let proposals = crate::agents::dedup_proposals(proposals, &self.config.excluded_actions, budget);

        let mut children = Vec::new();
        for action in proposals {
            tree.stats.states_expanded += 1;
            if let Some(ledger) = &self.ledger {
                ledger.record_expansions(&tree.task.id, 1);
            }
            let successor = match self.env.transition(&state, &action) {
                Ok(s) => s,
                Err(EnvError::RejectedAction { reason, .. }) => {
                    log::warn!("task {}: action `{}` rejected: {reason}", tree.task.id, action.text());
                    tree.stats.rejected_actions += 1;
                    continue;
                }
                Err(other) => return Err(other.into()),
            };
            let terminal = self.env.is_terminal(&successor);
            children.push(tree.add_child(node, &action, successor, terminal));
        }
        for &child in &children {
            self.evaluate(tree, child)?;
        }
        Ok(children)
    }

    fn evaluate(&self, tree: &mut SearchTree, index: usize) -> Result<(), SearchError> {
        let trajectory = tree.trajectory(index);
        let candidates = if self.config.feed_candidates {
            self.env.enumerable_actions(tree.state(index))
        } else {
            None
        };
        let request = ValueRequest {
            trajectory: &trajectory,
            candidates: candidates.as_deref(),
            sampling: self.config.sampling,
            seed: seed::derive(self.config.seed, "value", index as u64),
        };
        tree.stats.evaluations += 1;
        match self.value.evaluate(&request) {
            Ok(estimate) => {
                tree.nodes[index].value = Some(estimate);
                Ok(())
            }
            Err(AgentError::Transport(err)) => Err(AgentError::Transport(err).into()),
            Err(err) => {
                log::warn!("task {}: no value for node {index}: {err}", tree.task.id);
                tree.stats.value_failures += 1;
                Ok(())
            }
        }
    }

    /// Proxy reward for a value under the active scale.
    pub(crate) fn reward(&self, value: f64) -> f64 {
        if self.config.normalize_rewards {
            self.value.scale().normalize(value)
        } else {
            value
        }
    }
}

/// Index of the highest-valued node; the earliest wins ties.
pub(crate) fn argmax<'a>(nodes: impl IntoIterator<Item = &'a TreeNode>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for node in nodes {
        if let Some(v) = node.value() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((node.index, v));
            }
        }
    }
    best.map(|(i, _)| i)
}
