use std::path::PathBuf;

use thiserror::Error;

use stl_core::agents::transport::TransportError;
use stl_core::agents::AgentError;
use stl_core::eval::EvalError;
use stl_core::search::SearchError;
use stl_core::stl::StlError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Stable process exit codes.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<TransportError> for CliError {
    fn from(err: TransportError) -> Self {
        CliError::Transport(err.to_string())
    }
}

impl From<AgentError> for CliError {
    fn from(err: AgentError) -> Self {
        match err {
            AgentError::Transport(t) => t.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(err: SearchError) -> Self {
        match err {
            SearchError::Agent(a) => a.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<StlError> for CliError {
    fn from(err: StlError) -> Self {
        match err {
            StlError::Search { task, source: SearchError::Agent(AgentError::Transport(t)) } => {
                CliError::Transport(format!("task `{task}`: {t}"))
            }
            StlError::Io { path, source, .. } => CliError::Io { path, source },
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::Io { path, source } => CliError::Io { path, source },
            EvalError::Csv { path, source } if source.is_io_error() => {
                CliError::Io { path, source: std::io::Error::other(source.to_string()) }
            }
            other => CliError::Config(other.to_string()),
        }
    }
}
