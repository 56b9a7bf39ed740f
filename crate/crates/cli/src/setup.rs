//! Turns a validated config into an environment, tasks and agents.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use stl_core::agents::policy::ActionFormat;
use stl_core::agents::prompts::{PromptFamily, PromptSet};
use stl_core::agents::transport::{ChatClient, HttpTransport, Transport};
use stl_core::agents::{
    DepthRouter, ExhaustivePolicy, OracleValueModel, Policy, RemotePolicy, RemoteValueModel, ScriptedPolicy,
    ScriptedValueModel, ValueModel, ValueScale,
};
use stl_core::envs::{load_puzzles, Environment, Game24Env, ScriptedEnvironment};
use stl_core::eval::{Ledger, ModelRole};
use stl_core::stl::{import_jsonl, TabularValueModel};
use stl_core::{Split, Task};

use crate::config::{EnvSpec, ExperimentConfig, PolicySpec, ValueSpec};
use crate::error::CliError;

pub struct Setup {
    pub env: Arc<dyn Environment>,
    pub tasks: Vec<Task>,
    pub policy: Arc<dyn Policy>,
    pub value: Arc<dyn ValueModel>,
    /// Token usage of every remote call made through this setup.
    pub ledger: Arc<Ledger>,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    scripted_env: Option<Arc<ScriptedEnvironment>>,
    ledger: Arc<Ledger>,
    transport: Option<Arc<dyn Transport>>,
}

fn env_error(err: stl_core::envs::EnvError) -> CliError {
    match err {
        stl_core::envs::EnvError::Io { path, source } => CliError::Io { path: path.into(), source },
        other => CliError::Config(other.to_string()),
    }
}

impl Context<'_> {
    fn transport(&mut self) -> Result<Arc<dyn Transport>, CliError> {
        if let Some(t) = &self.transport {
            return Ok(Arc::clone(t));
        }
        let http = HttpTransport::new(&self.config.api_base, &self.config.api_key_env, false, Duration::from_secs(120))?;
        let transport: Arc<dyn Transport> = Arc::new(http);
        self.transport = Some(Arc::clone(&transport));
        Ok(transport)
    }

    fn client(&mut self, model: &str, role: ModelRole) -> Result<ChatClient, CliError> {
        Ok(ChatClient::new(self.transport()?, model, role).with_ledger(Arc::clone(&self.ledger)))
    }

    fn family(&self) -> PromptFamily {
        self.config.prompt_family.unwrap_or(match self.config.env_spec() {
            EnvSpec::Game24 => PromptFamily::Game24,
            EnvSpec::Scripted(_) => PromptFamily::Webshop,
        })
    }

    fn prompts(&self) -> Result<PromptSet, CliError> {
        match &self.config.prompts {
            Some(dir) => PromptSet::with_overrides(self.family(), dir).map_err(CliError::io(dir)),
            None => Ok(PromptSet::builtin(self.family())),
        }
    }

    fn default_scale(&self) -> Result<ValueScale, CliError> {
        if let Some(scale) = self.config.value_scale {
            return Ok(scale);
        }
        match &self.scripted_env {
            None => Ok(ValueScale::Game24),
            Some(env) => match env.value_scale() {
                Some(s) => s.parse().map_err(CliError::Config),
                None => Ok(ValueScale::Likert10),
            },
        }
    }

    fn scripted(&self, path: &Path) -> Result<Arc<ScriptedEnvironment>, CliError> {
        if let (EnvSpec::Scripted(env_path), Some(env)) = (self.config.env_spec(), &self.scripted_env) {
            if env_path == path {
                return Ok(Arc::clone(env));
            }
        }
        Ok(Arc::new(ScriptedEnvironment::load(path).map_err(env_error)?))
    }

    fn value(&mut self, spec: ValueSpec) -> Result<Arc<dyn ValueModel>, CliError> {
        Ok(match spec {
            ValueSpec::Oracle => Arc::new(OracleValueModel::new()),
            ValueSpec::Scripted(path) => Arc::new(ScriptedValueModel::new(self.scripted(&path)?)?),
            ValueSpec::Remote(model) => {
                let client = self.client(&model, ModelRole::Value)?;
                Arc::new(
                    RemoteValueModel::new(client, self.prompts()?, self.default_scale()?)
                        .feeding_candidates(self.config.search.feed_candidates),
                )
            }
            ValueSpec::StlDataset(path) => {
                let base = self.value(self.config.base_value_spec().expect("validated"))?;
                load_tabular(&path, base)?
            }
        })
    }
}

/// Loads a tabular model from a dataset file, or a per-depth model from a
/// directory of `depth-<d>.jsonl` files (falling back to `dataset.jsonl`).
pub fn load_tabular(path: &Path, base: Arc<dyn ValueModel>) -> Result<Arc<dyn ValueModel>, CliError> {
    if path.is_file() {
        let dataset = import_jsonl(path)?;
        return Ok(Arc::new(TabularValueModel::from_dataset(base, &dataset)?));
    }
    let entries = std::fs::read_dir(path).map_err(CliError::io(path))?;
    let mut depth_files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(CliError::io(path))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(depth) = name.strip_prefix("depth-").and_then(|r| r.strip_suffix(".jsonl")).and_then(|d| d.parse().ok()) {
            depth_files.push((depth, entry.path()));
        }
    }
    if depth_files.is_empty() {
        let single = path.join("dataset.jsonl");
        if !single.is_file() {
            return Err(CliError::Config(format!("{}: no dataset.jsonl or depth-<d>.jsonl files", path.display())));
        }
        return load_tabular(&single, base);
    }
    depth_files.sort();
    let mut router = DepthRouter::new(Arc::clone(&base));
    for (depth, file) in depth_files {
        let dataset = import_jsonl(&file)?;
        router.insert(depth, Arc::new(TabularValueModel::from_dataset(Arc::clone(&base), &dataset)?));
    }
    Ok(Arc::new(router))
}

/// Builds the run's components. `default_split` applies to puzzle files,
/// which carry no split of their own.
pub fn build(config: &ExperimentConfig, default_split: Split) -> Result<Setup, CliError> {
    let ledger = Arc::new(Ledger::new());
    let (env, scripted_env, mut tasks): (Arc<dyn Environment>, _, _) = match config.env_spec() {
        EnvSpec::Game24 => {
            let path = config.tasks.as_ref().expect("validated");
            let tasks = load_puzzles(path, config.split.unwrap_or(default_split)).map_err(env_error)?;
            (Arc::new(Game24Env::new()), None, tasks)
        }
        EnvSpec::Scripted(path) => {
            let env = Arc::new(ScriptedEnvironment::load(&path).map_err(env_error)?);
            let tasks = env.tasks().into_iter().filter(|t| config.split.is_none_or(|s| t.split == s)).collect();
            (Arc::clone(&env) as Arc<dyn Environment>, Some(env), tasks)
        }
    };
    if let Some(limit) = config.limit {
        tasks.truncate(limit);
    }
    if tasks.is_empty() {
        return Err(CliError::Config("tasks: no tasks selected".into()));
    }

    let mut ctx = Context { config, scripted_env, ledger: Arc::clone(&ledger), transport: None };
    let policy: Arc<dyn Policy> = match config.policy_spec() {
        PolicySpec::Exhaustive => Arc::new(ExhaustivePolicy),
        PolicySpec::Scripted(path) => Arc::new(ScriptedPolicy::load(&path)?),
        PolicySpec::Remote(model) => {
            let client = ctx.client(&model, ModelRole::Policy)?;
            let format = match config.env_spec() {
                EnvSpec::Game24 => ActionFormat::Game24,
                EnvSpec::Scripted(_) => ActionFormat::React,
            };
            Arc::new(RemotePolicy::new(client, ctx.prompts()?, format, config.policy_calls))
        }
    };
    let value = ctx.value(config.value_spec())?;
    Ok(Setup { env, tasks, policy, value, ledger })
}
