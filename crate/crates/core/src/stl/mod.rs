//! Lookahead data generation and value-model training rounds.
//!
//! Each iteration takes the next slice of rollout tasks, searches each with
//! the previous iteration's value model, turns every visited state that has
//! evaluated successors into a lookahead example, filters and deduplicates
//! the examples, and trains fresh value models from the base model.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{DepthRouter, Policy, ValueModel};
use crate::domain::{render_context, state_key, Action, State, Task};
use crate::envs::Environment;
use crate::eval::{Ledger, LedgerSnapshot};
use crate::search::{Engine, SearchConfig, SearchContext, SearchError, SearchTree};

mod dataset;
mod record;
mod trainer;

pub use dataset::{
    dedup_latest, export_jsonl, filter_examples, import_jsonl, meta_path, Candidate, Dataset, ExportMeta, LossMask,
    RejectReason, Rejection,
};
pub use record::{build_action_outcome, lookahead_target, LookaheadRecord};
pub use trainer::{TabularTrainer, TabularValueModel, Trainer};

#[derive(Debug, Error)]
pub enum StlError {
    #[error("invalid stl config: {0}")]
    Config(String),
    #[error("search failed on task `{task}`: {source}")]
    Search { task: String, source: SearchError },
    #[error("trainer failed: {0}")]
    Trainer(String),
    #[error("refusing to export an empty dataset to {0}")]
    EmptyDataset(PathBuf),
    #[error("{path}{}: {source}", index.map(|i| format!(" (record {i})")).unwrap_or_default())]
    Io { path: PathBuf, index: Option<usize>, source: std::io::Error },
}

/// Fine-tuning hyperparameters for an external LoRA trainer. Recorded in
/// run manifests; nothing in this crate trains with them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoraHyperparameters {
    pub warmup_steps: u32,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub per_device_batch_size: u32,
    pub lora_r: u32,
    pub lora_alpha: u32,
    pub epochs_webshop: u32,
    pub epochs_game24: u32,
}

pub const LORA_HYPERPARAMETERS: LoraHyperparameters = LoraHyperparameters {
    warmup_steps: 10,
    learning_rate: 2e-4,
    weight_decay: 0.01,
    per_device_batch_size: 8,
    lora_r: 16,
    lora_alpha: 16,
    epochs_webshop: 20,
    epochs_game24: 10,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StlConfig {
    pub iterations: usize,
    pub tasks_per_iteration: usize,
    pub gamma: f64,
    pub engine: Engine,
    /// Carry examples from earlier iterations into later training sets.
    pub accumulate: bool,
    /// Train one model per depth and route by depth.
    pub per_depth: bool,
    /// Also emit examples for initial states (depth 0).
    pub include_root: bool,
    pub mask: LossMask,
    pub base_model: String,
}

impl Default for StlConfig {
    fn default() -> Self {
        Self {
            iterations: 1,
            tasks_per_iteration: 50,
            gamma: 1.0,
            engine: Engine::Mcts,
            accumulate: false,
            per_depth: false,
            include_root: false,
            mask: LossMask::None,
            base_model: "llama-3.1-8b-instruct".into(),
        }
    }
}

impl StlConfig {
    /// Web-shopping mode: one MCTS iteration over 50 tasks, one model per depth.
    pub fn webshop() -> Self {
        Self { per_depth: true, ..Self::default() }
    }

    /// Game-of-24 mode: four beam-search iterations of 25 puzzles, accumulating.
    pub fn game24() -> Self {
        Self { iterations: 4, tasks_per_iteration: 25, engine: Engine::Beam, accumulate: true, ..Self::default() }
    }

    pub fn validate(&self, available_tasks: usize) -> Result<(), StlError> {
        if self.iterations == 0 || self.tasks_per_iteration == 0 {
            return Err(StlError::Config("iterations and tasks_per_iteration must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(StlError::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        let needed = self.iterations * self.tasks_per_iteration;
        if needed > available_tasks {
            return Err(StlError::Config(format!(
                "{} iterations x {} tasks needs {needed} rollout tasks, only {available_tasks} available",
                self.iterations, self.tasks_per_iteration
            )));
        }
        Ok(())
    }
}

/// One lookahead candidate per state (first occurrence) from a search tree.
pub fn collect_candidates(tree: &SearchTree, iteration: usize, gamma: f64, include_root: bool) -> Vec<Candidate> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for node in &tree.nodes {
        if node.depth == 0 && !include_root {
            continue;
        }
        let successors: Vec<(Action, Arc<State>, _)> = tree
            .evaluated_children(node.index)
            .map(|child| {
                let state = Arc::clone(tree.state(child.index));
                let action = state.incoming_action.clone().expect("child states carry their action");
                (action, state, child.value.clone().expect("filtered to evaluated children"))
            })
            .collect();
        let Some(record) = lookahead_target(tree.state(node.index), &successors, gamma) else {
            continue;
        };
        let trajectory = tree.trajectory(node.index);
        let key = state_key(&tree.task, &trajectory);
        if !seen.insert(key.clone()) {
            continue;
        }
        out.push(Candidate {
            task_id: tree.task.id.clone(),
            depth: node.depth,
            iteration,
            context: render_context(&trajectory),
            state_key: key,
            record,
        });
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub tasks: Vec<String>,
    pub failed_tasks: Vec<String>,
    pub candidates: usize,
    pub kept: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    pub duplicates: usize,
    pub dataset_size: usize,
    pub per_depth: BTreeMap<usize, usize>,
    pub states_expanded: u64,
    pub ledger: LedgerSnapshot,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StlReport {
    pub iterations: Vec<IterationReport>,
}

/// The value models produced by the last iteration.
#[derive(Clone)]
pub enum TrainedModels {
    Single(Arc<dyn ValueModel>),
    PerDepth(DepthRouter),
}

impl TrainedModels {
    pub fn as_model(&self) -> Arc<dyn ValueModel> {
        match self {
            TrainedModels::Single(m) => Arc::clone(m),
            TrainedModels::PerDepth(router) => Arc::new(router.clone()),
        }
    }
}

pub struct StlOutcome {
    pub models: TrainedModels,
    /// The training set of each iteration.
    pub datasets: Vec<Dataset>,
    pub trees: Vec<Vec<SearchTree>>,
    pub rejections: Vec<Vec<Rejection>>,
    pub report: StlReport,
}

pub struct StlRun<'a> {
    pub env: &'a dyn Environment,
    pub policy: &'a dyn Policy,
    pub base: Arc<dyn ValueModel>,
    pub trainer: &'a dyn Trainer,
    pub stl: &'a StlConfig,
    pub search: &'a SearchConfig,
    /// Datasets are written here before training, one directory per iteration.
    pub out_dir: Option<&'a Path>,
    /// Concurrent task rollouts within an iteration.
    pub parallel: usize,
}

fn dataset_dir(out: &Path, iteration: usize) -> PathBuf {
    out.join(format!("iteration-{iteration}"))
}

fn write_datasets(out: &Path, iteration: usize, dataset: &Dataset, per_depth: bool, mask: LossMask) -> Result<(), StlError> {
    let dir = dataset_dir(out, iteration);
    std::fs::create_dir_all(&dir).map_err(|source| StlError::Io { path: dir.clone(), index: None, source })?;
    if dataset.is_empty() {
        return Ok(());
    }
    export_jsonl(dataset, &dir.join("dataset.jsonl"), mask)?;
    if per_depth {
        for (depth, part) in dataset.partitions() {
            export_jsonl(&part, &dir.join(format!("depth-{depth}.jsonl")), mask)?;
        }
    }
    Ok(())
}

impl StlRun<'_> {
    fn rollouts(&self, tasks: &[Task], value: &dyn ValueModel, ledger: &Arc<Ledger>) -> Vec<(Task, Result<SearchTree, SearchError>)> {
        let run_one = |task: &Task| {
            let ctx = SearchContext::new(self.env, self.policy, value, self.search).with_ledger(Arc::clone(ledger));
            (task.clone(), ctx.run(self.stl.engine, task))
        };
        if self.parallel <= 1 {
            return tasks.iter().map(run_one).collect();
        }
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new().num_threads(self.parallel).build() {
            Ok(pool) => pool.install(|| tasks.par_iter().map(run_one).collect()),
            Err(err) => {
                log::warn!("falling back to sequential rollouts: {err}");
                tasks.iter().map(run_one).collect()
            }
        }
    }

    fn train(&self, dataset: &Dataset) -> Result<TrainedModels, StlError> {
        if !self.stl.per_depth {
            return Ok(TrainedModels::Single(self.trainer.fine_tune(&self.base, dataset)?));
        }
        let mut router = DepthRouter::new(Arc::clone(&self.base));
        for (depth, part) in dataset.partitions() {
            router.insert(depth, self.trainer.fine_tune(&self.base, &part)?);
        }
        Ok(TrainedModels::PerDepth(router))
    }

    pub fn run(&self, tasks: &[Task]) -> Result<StlOutcome, StlError> {
        self.stl.validate(tasks.len())?;
        self.search.validate().map_err(|source| StlError::Search { task: String::new(), source })?;
        let scale = self.base.scale();
        let mut current: Arc<dyn ValueModel> = Arc::clone(&self.base);
        let mut models = TrainedModels::Single(Arc::clone(&self.base));
        let mut accumulated = Dataset::new();
        let mut outcome_datasets = Vec::new();
        let mut all_trees = Vec::new();
        let mut all_rejections = Vec::new();
        let mut report = StlReport::default();

        for k in 1..=self.stl.iterations {
            let m = self.stl.tasks_per_iteration;
            let slice = &tasks[m * (k - 1)..m * k];
            let ledger = Arc::new(Ledger::new());
            let mut iteration = IterationReport {
                iteration: k,
                tasks: slice.iter().map(|t| t.id.clone()).collect(),
                ..Default::default()
            };

            let mut candidates = Vec::new();
            let mut trees = Vec::new();
            for (task, result) in self.rollouts(slice, current.as_ref(), &ledger) {
                match result {
                    Ok(tree) => {
                        candidates.extend(collect_candidates(&tree, k, self.stl.gamma, self.stl.include_root));
                        trees.push(tree);
                    }
                    Err(SearchError::Agent(crate::agents::AgentError::Transport(e))) => {
                        return Err(StlError::Search { task: task.id, source: SearchError::Agent(e.into()) });
                    }
                    Err(err) => {
                        log::warn!("iteration {k}: task {} failed: {err}", task.id);
                        iteration.failed_tasks.push(task.id);
                    }
                }
            }
            iteration.candidates = candidates.len();
            let (kept, rejected) = filter_examples(candidates, scale);
            iteration.kept = kept.len();
            for r in &rejected {
                *iteration.rejected.entry(r.reason).or_default() += 1;
            }

            let base = if self.stl.accumulate { accumulated.clone() } else { Dataset::new() };
            let duplicates_before = base.duplicates;
            let dataset = dedup_latest(base, kept, k);
            iteration.duplicates = dataset.duplicates - duplicates_before;
            iteration.dataset_size = dataset.len();
            iteration.per_depth = dataset.partitions().into_iter().map(|(d, p)| (d, p.len())).collect();
            iteration.ledger = ledger.snapshot();
            iteration.states_expanded = iteration.ledger.states_expanded();

            if let Some(out) = self.out_dir {
                write_datasets(out, k, &dataset, self.stl.per_depth, self.stl.mask)?;
            }
            models = self.train(&dataset)?;
            current = models.as_model();
            if self.stl.accumulate {
                accumulated = dataset.clone();
            }
            report.iterations.push(iteration);
            outcome_datasets.push(dataset);
            all_trees.push(trees);
            all_rejections.push(rejected);
        }

        Ok(StlOutcome { models, datasets: outcome_datasets, trees: all_trees, rejections: all_rejections, report })
    }
}
