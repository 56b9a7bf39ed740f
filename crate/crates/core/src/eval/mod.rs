//! Evaluation: pass@k, token and cost accounting, paired bootstrap, reports.

use std::path::PathBuf;

use thiserror::Error;

pub mod bootstrap;
pub mod ledger;
pub mod pricing;
pub mod report;

pub use bootstrap::{paired_bootstrap, BootstrapResult};
pub use ledger::{Ledger, LedgerSnapshot, ModelRole, TokenCounts};
pub use pricing::{cost, format_dollars, CostBreakdown, Dollars, PricingTable, Rate};
pub use report::{align, emit_report, read_results, write_results, MethodResult, TaskResult};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("k must be positive")]
    NonPositiveK,
    #[error("k = {k} exceeds the {attempts} recorded attempts")]
    TooFewAttempts { k: usize, attempts: usize },
    #[error("no pricing for model `{0}`")]
    UnknownModel(String),
    #[error("paired score lists differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("bootstrap needs at least one score and one resample")]
    EmptyBootstrap,
    #[error("task ids differ between result sets: {0:?}")]
    MisalignedTasks(Vec<String>),
    #[error("no results to report")]
    NoResults,
    #[error("invalid pricing row {row}: {reason}")]
    Pricing { row: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// True iff any of the first `k` attempts succeeded.
pub fn pass_at_k(attempts: &[bool], k: usize) -> Result<bool, EvalError> {
    if k == 0 {
        return Err(EvalError::NonPositiveK);
    }
    if k > attempts.len() {
        return Err(EvalError::TooFewAttempts { k, attempts: attempts.len() });
    }
    Ok(attempts[..k].iter().any(|&ok| ok))
}
