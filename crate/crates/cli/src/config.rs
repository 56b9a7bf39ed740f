//! Experiment configuration: one TOML or JSON file, overridden by flags.
//!
//! Relative paths inside a config file are resolved against the file's
//! directory; paths given on the command line against the working directory.
//! Validated configs carry absolute paths only, so a run manifest can be
//! replayed from anywhere.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use stl_core::agents::prompts::PromptFamily;
use stl_core::agents::ValueScale;
use stl_core::search::{Engine, SearchConfig};
use stl_core::stl::{StlConfig, LoraHyperparameters, LORA_HYPERPARAMETERS};
use stl_core::Split;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `game24` or `scripted:<fixture.json>`.
    pub environment: String,
    /// Puzzle file for `game24`, one puzzle per line.
    pub tasks: Option<PathBuf>,
    pub split: Option<Split>,
    /// Use only the first `limit` tasks.
    pub limit: Option<usize>,
    pub engine: Engine,
    /// `exhaustive`, `scripted:<proposals.json>` or `remote:<model>`.
    pub policy: String,
    /// `oracle`, `scripted:<fixture.json>`, `remote:<model>` or `stl-dataset:<path>`.
    pub value: String,
    /// Fallback for states missing from an `stl-dataset` model.
    pub base_value: Option<String>,
    /// Scale for remote value models; defaults to the environment's.
    pub value_scale: Option<ValueScale>,
    /// Row label in reports; defaults to the engine name.
    pub method: Option<String>,
    /// Independent search attempts per task, for pass@k.
    pub attempts: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub parallel: usize,
    pub api_base: String,
    pub api_key_env: String,
    pub prompts: Option<PathBuf>,
    pub prompt_family: Option<PromptFamily>,
    /// Maximum remote calls per proposal step.
    pub policy_calls: usize,
    /// Pricing override CSV.
    pub pricing: Option<PathBuf>,
    pub search: SearchConfig,
    pub stl: StlConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environment: "game24".into(),
            tasks: None,
            split: None,
            limit: None,
            engine: Engine::Beam,
            policy: "exhaustive".into(),
            value: "oracle".into(),
            base_value: None,
            value_scale: None,
            method: None,
            attempts: 1,
            seed: 0,
            output_dir: None,
            parallel: 1,
            api_base: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            prompts: None,
            prompt_family: None,
            policy_calls: 10,
            pricing: None,
            search: SearchConfig::default(),
            stl: StlConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Game24,
    Scripted(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Exhaustive,
    Scripted(PathBuf),
    Remote(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValueSpec {
    Oracle,
    Scripted(PathBuf),
    Remote(String),
    StlDataset(PathBuf),
}

fn split_spec(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((kind, arg)) => (kind, Some(arg)),
        None => (s, None),
    }
}

fn required<'a>(field: &str, kind: &str, arg: Option<&'a str>) -> Result<&'a str, String> {
    arg.filter(|a| !a.is_empty()).ok_or_else(|| format!("{field}: `{kind}` needs an argument, as in `{kind}:<...>`"))
}

impl FromStr for EnvSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match split_spec(s) {
            ("game24", None) => Ok(EnvSpec::Game24),
            ("scripted", arg) => Ok(EnvSpec::Scripted(required("environment", "scripted", arg)?.into())),
            _ => Err(format!("environment: unknown spec `{s}` (expected game24 or scripted:<fixture>)")),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match split_spec(s) {
            ("exhaustive", None) => Ok(PolicySpec::Exhaustive),
            ("scripted", arg) => Ok(PolicySpec::Scripted(required("policy", "scripted", arg)?.into())),
            ("remote", arg) => Ok(PolicySpec::Remote(required("policy", "remote", arg)?.into())),
            _ => Err(format!("policy: unknown spec `{s}` (expected exhaustive, scripted:<file> or remote:<model>)")),
        }
    }
}

impl FromStr for ValueSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match split_spec(s) {
            ("oracle", None) => Ok(ValueSpec::Oracle),
            ("scripted", arg) => Ok(ValueSpec::Scripted(required("value", "scripted", arg)?.into())),
            ("remote", arg) => Ok(ValueSpec::Remote(required("value", "remote", arg)?.into())),
            ("stl-dataset", arg) => Ok(ValueSpec::StlDataset(required("value", "stl-dataset", arg)?.into())),
            _ => Err(format!(
                "value: unknown spec `{s}` (expected oracle, scripted:<fixture>, remote:<model> or stl-dataset:<path>)"
            )),
        }
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::Game24 => f.write_str("game24"),
            EnvSpec::Scripted(p) => write!(f, "scripted:{}", p.display()),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Exhaustive => f.write_str("exhaustive"),
            PolicySpec::Scripted(p) => write!(f, "scripted:{}", p.display()),
            PolicySpec::Remote(m) => write!(f, "remote:{m}"),
        }
    }
}

impl fmt::Display for ValueSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueSpec::Oracle => f.write_str("oracle"),
            ValueSpec::Scripted(p) => write!(f, "scripted:{}", p.display()),
            ValueSpec::Remote(m) => write!(f, "remote:{m}"),
            ValueSpec::StlDataset(p) => write!(f, "stl-dataset:{}", p.display()),
        }
    }
}

/// Spec fields whose argument is a path.
const SPEC_FIELDS: [&str; 4] = ["environment", "policy", "value", "base_value"];
const PATH_FIELDS: [&str; 4] = ["tasks", "prompts", "pricing", "output_dir"];

fn rebase_path(base: &Path, raw: &str) -> String {
    let path = Path::new(raw);
    if path.is_absolute() {
        raw.to_string()
    } else {
        base.join(path).to_string_lossy().into_owned()
    }
}

fn rebase_spec(base: &Path, raw: &str) -> String {
    match raw.split_once(':') {
        Some((kind @ ("scripted" | "stl-dataset"), arg)) => format!("{kind}:{}", rebase_path(base, arg)),
        _ => raw.to_string(),
    }
}

/// Resolves relative paths in a config object against `base`.
fn rebase(config: &mut Value, base: &Path) {
    let Some(map) = config.as_object_mut() else { return };
    for field in SPEC_FIELDS {
        if let Some(Value::String(s)) = map.get_mut(field) {
            *s = rebase_spec(base, s);
        }
    }
    for field in PATH_FIELDS {
        if let Some(Value::String(s)) = map.get_mut(field) {
            *s = rebase_path(base, s);
        }
    }
}

/// Reads a config file (TOML by `.toml` extension, JSON otherwise). A run
/// manifest is accepted too: its `config` object is used.
pub fn read_config_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut value: Value = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    if let Some(inner) = value.as_object_mut().filter(|m| m.contains_key("command")).and_then(|m| m.remove("config")) {
        value = inner;
    }
    if !value.is_object() {
        return Err(CliError::Config(format!("{}: expected a table of settings", path.display())));
    }
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    rebase(&mut value, base);
    Ok(value)
}

/// Sets a dotted key, e.g. `search.branching`. The raw text is read as JSON
/// when it parses and as a string otherwise.
pub fn apply_override(config: &mut Value, key: &str, raw: &str) -> Result<(), CliError> {
    let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cursor = config;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let map = cursor.as_object_mut().ok_or_else(|| CliError::Config(format!("--set {key}: `{part}` is not a table")))?;
        cursor = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let map = cursor.as_object_mut().ok_or_else(|| CliError::Config(format!("--set {key}: parent is not a table")))?;
    map.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

pub fn parse_override(text: &str) -> Result<(String, String), CliError> {
    text.split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{text}`")))
}

/// Builds the config from an optional file plus overrides, in order.
pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig, CliError> {
    let mut value = match file {
        Some(path) => read_config_file(path)?,
        None => Value::Object(Default::default()),
    };
    for (key, raw) in overrides {
        apply_override(&mut value, key, raw)?;
    }
    let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    config.resolved()
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(CliError::io(path))
}

fn existing(field: &str, path: &Path) -> Result<PathBuf, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("{field}: {} does not exist", path.display())));
    }
    absolute(path)
}

impl ExperimentConfig {
    pub fn env_spec(&self) -> EnvSpec {
        self.environment.parse().expect("validated")
    }

    pub fn policy_spec(&self) -> PolicySpec {
        self.policy.parse().expect("validated")
    }

    pub fn value_spec(&self) -> ValueSpec {
        self.value.parse().expect("validated")
    }

    pub fn base_value_spec(&self) -> Option<ValueSpec> {
        self.base_value.as_ref().map(|s| s.parse().expect("validated"))
    }

    pub fn method_name(&self) -> String {
        self.method.clone().unwrap_or_else(|| self.engine.to_string())
    }

    /// Checks every field and rewrites paths to absolute form.
    fn resolved(mut self) -> Result<Self, CliError> {
        let env: EnvSpec = self.environment.parse().map_err(CliError::Config)?;
        let env = match env {
            EnvSpec::Scripted(p) => EnvSpec::Scripted(existing("environment", &p)?),
            other => other,
        };
        if env == EnvSpec::Game24 && self.tasks.is_none() {
            return Err(CliError::Config("tasks: the game24 environment needs a puzzle file".into()));
        }
        self.environment = env.to_string();

        let policy = match self.policy.parse().map_err(CliError::Config)? {
            PolicySpec::Scripted(p) => PolicySpec::Scripted(existing("policy", &p)?),
            other => other,
        };
        self.policy = policy.to_string();

        let value = resolve_value("value", self.value.parse().map_err(CliError::Config)?)?;
        match (&value, &self.base_value) {
            (ValueSpec::StlDataset(_), None) => {
                return Err(CliError::Config("base_value: required when value is stl-dataset:<path>".into()));
            }
            (ValueSpec::StlDataset(_), Some(base)) => {
                let base = resolve_value("base_value", base.parse().map_err(CliError::Config)?)?;
                if matches!(base, ValueSpec::StlDataset(_)) {
                    return Err(CliError::Config("base_value: cannot itself be an stl-dataset".into()));
                }
                self.base_value = Some(base.to_string());
            }
            (_, Some(_)) => {
                return Err(CliError::Config("base_value: only used with value = stl-dataset:<path>".into()));
            }
            (_, None) => {}
        }
        self.value = value.to_string();

        if let Some(p) = &self.tasks {
            self.tasks = Some(existing("tasks", p)?);
        }
        if let Some(p) = &self.prompts {
            self.prompts = Some(existing("prompts", p)?);
        }
        if let Some(p) = &self.pricing {
            self.pricing = Some(existing("pricing", p)?);
        }
        if let Some(p) = &self.output_dir {
            self.output_dir = Some(absolute(p)?);
        }
        if self.attempts == 0 {
            return Err(CliError::Config("attempts: must be positive".into()));
        }
        if self.parallel == 0 {
            return Err(CliError::Config("parallel: must be positive".into()));
        }
        if self.policy_calls == 0 {
            return Err(CliError::Config("policy_calls: must be positive".into()));
        }
        self.search.seed = self.seed;
        self.search.validate().map_err(|e| CliError::Config(format!("search: {e}")))?;
        Ok(self)
    }
}

fn resolve_value(field: &str, spec: ValueSpec) -> Result<ValueSpec, CliError> {
    Ok(match spec {
        ValueSpec::Scripted(p) => ValueSpec::Scripted(existing(field, &p)?),
        ValueSpec::StlDataset(p) => ValueSpec::StlDataset(existing(field, &p)?),
        other => other,
    })
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub created: String,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lora: Option<LoraHyperparameters>,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            tool: "stl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: config.seed,
            created: chrono::Local::now().to_rfc3339(),
            config: config.clone(),
            lora: (command == "stl").then_some(LORA_HYPERPARAMETERS),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifests serialize") + "\n";
        std::fs::write(&path, text).map_err(CliError::io(path))
    }
}

/// The run directory: the configured one, or `runs/<timestamp>-seed<seed>`.
pub fn run_dir(config: &ExperimentConfig) -> PathBuf {
    match &config.output_dir {
        Some(dir) => dir.clone(),
        None => {
            let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
            PathBuf::from("runs").join(format!("{stamp}-seed{}", config.seed))
        }
    }
}
