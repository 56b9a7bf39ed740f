//! Lookahead-trained value models for language-agent tree search.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`] – tasks, actions, states, trajectories and training examples.
//! * [`envs`] – the environment contract plus Game-of-24 and scripted fixture environments.
//! * [`agents`] – policies, value models, rationale parsing and depth routing.
//! * [`search`] – greedy, beam and MCTS engines with expansion accounting.
//! * [`stl`] – lookahead data generation, filtering, dedup, export and training.
//! * [`eval`] – ledgers, pricing, pass@k, paired bootstrap and CSV reports.

pub mod agents;
pub mod domain;
pub mod envs;
pub mod eval;
pub mod search;
pub mod seed;
pub mod stl;

pub use domain::{Action, ActionKind, Split, State, StateKey, Task, TrainingExample, Trajectory};
