//! Environment contract and concrete environments.
//!
//! An environment supplies the deterministic transition function, terminal
//! detection, optional action enumeration, and an evaluation-only ground-truth
//! score that search engines never read.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::domain::{Action, State, Task, Trajectory};

pub mod game24;
pub mod scripted;

pub use game24::{game24_oracle, load_puzzles, Game24Env, Game24Oracle, Game24State, Op, Rational, Verdict};
pub use scripted::ScriptedEnvironment;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action `{action}` rejected at state `{state}`: {reason}")]
    RejectedAction { state: String, action: String, reason: String },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("invalid task `{task}`: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error("empty number multiset")]
    EmptyMultiset,
    #[error("fixture error at {element}: {reason}")]
    Fixture { element: String, reason: String },
    #[error("reading fixture {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub trait Environment: Send + Sync {
    fn name(&self) -> &str;

    fn initial_state(&self, task: &Task) -> Result<Arc<State>, EnvError>;

    /// Deterministic: the same `(state, action)` always yields the same successor.
    fn transition(&self, state: &Arc<State>, action: &Action) -> Result<Arc<State>, EnvError>;

    fn is_terminal(&self, state: &State) -> bool;

    /// The full legal action list when the environment can enumerate it.
    fn enumerable_actions(&self, state: &State) -> Option<Vec<Action>>;

    /// Evaluation-only score for a finished trajectory.
    fn ground_truth_score(&self, trajectory: &Trajectory) -> Option<f64>;

    /// Tasks bundled with the environment, if any.
    fn tasks(&self) -> Vec<Task> {
        Vec::new()
    }
}

impl<E: Environment + ?Sized> Environment for Arc<E> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn initial_state(&self, task: &Task) -> Result<Arc<State>, EnvError> {
        (**self).initial_state(task)
    }
    fn transition(&self, state: &Arc<State>, action: &Action) -> Result<Arc<State>, EnvError> {
        (**self).transition(state, action)
    }
    fn is_terminal(&self, state: &State) -> bool {
        (**self).is_terminal(state)
    }
    fn enumerable_actions(&self, state: &State) -> Option<Vec<Action>> {
        (**self).enumerable_actions(state)
    }
    fn ground_truth_score(&self, trajectory: &Trajectory) -> Option<f64> {
        (**self).ground_truth_score(trajectory)
    }
    fn tasks(&self) -> Vec<Task> {
        (**self).tasks()
    }
}

/// Wraps an environment and counts transition calls.
pub struct Instrumented<E> {
    inner: E,
    transitions: AtomicU64,
}

impl<E> Instrumented<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, transitions: AtomicU64::new(0) }
    }

    pub fn transitions(&self) -> u64 {
        self.transitions.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.transitions.store(0, Ordering::SeqCst);
    }
}

impl<E: Environment> Environment for Instrumented<E> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn initial_state(&self, task: &Task) -> Result<Arc<State>, EnvError> {
        self.inner.initial_state(task)
    }
    fn transition(&self, state: &Arc<State>, action: &Action) -> Result<Arc<State>, EnvError> {
        self.transitions.fetch_add(1, Ordering::SeqCst);
        self.inner.transition(state, action)
    }
    fn is_terminal(&self, state: &State) -> bool {
        self.inner.is_terminal(state)
    }
    fn enumerable_actions(&self, state: &State) -> Option<Vec<Action>> {
        self.inner.enumerable_actions(state)
    }
    fn ground_truth_score(&self, trajectory: &Trajectory) -> Option<f64> {
        self.inner.ground_truth_score(trajectory)
    }
    fn tasks(&self) -> Vec<Task> {
        self.inner.tasks()
    }
}
