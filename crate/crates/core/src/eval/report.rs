//! Per-task results files and the per-method CSV report.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ledger::LedgerSnapshot;
use super::pricing::{cost, format_dollars, PricingTable};
use super::{pass_at_k, EvalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub score: f64,
    pub success: bool,
    /// Outcomes of repeated attempts, in order; empty means one attempt
    /// whose outcome is `success`.
    #[serde(default)]
    pub attempts: Vec<bool>,
}

impl TaskResult {
    fn attempts(&self) -> Vec<bool> {
        if self.attempts.is_empty() {
            vec![self.success]
        } else {
            self.attempts.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: String,
    pub tasks: Vec<TaskResult>,
    pub ledger: LedgerSnapshot,
    pub k: usize,
}

pub const REPORT_HEADER: [&str; 10] = [
    "method",
    "tasks",
    "score_mean",
    "success_rate",
    "pass_at_k",
    "k",
    "open_tokens",
    "closed_tokens",
    "states_expanded",
    "cost_usd",
];

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.into(), source }
}

/// Writes one row per method, sorted by method name, with fixed-precision
/// numbers so identical inputs give identical bytes.
pub fn emit_report(results: &[MethodResult], pricing: &PricingTable, path: &Path) -> Result<(), EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoResults);
    }
    let mut sorted: Vec<&MethodResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.method.cmp(&b.method));

    let mut writer = csv::Writer::from_path(path).map_err(|source| EvalError::Csv { path: path.into(), source })?;
    let csv_err = |source| EvalError::Csv { path: path.into(), source };
    writer.write_record(REPORT_HEADER).map_err(csv_err)?;
    for result in sorted {
        let n = result.tasks.len();
        let denom = n.max(1) as f64;
        let score_mean = result.tasks.iter().map(|t| t.score).sum::<f64>() / denom;
        let success = result.tasks.iter().filter(|t| t.success).count() as f64 / denom;
        let mut passed = 0usize;
        for task in &result.tasks {
            let attempts = task.attempts();
            if pass_at_k(&attempts, result.k.min(attempts.len()))? {
                passed += 1;
            }
        }
        let (mut open, mut closed) = (0u64, 0u64);
        for (model, tokens) in result.ledger.per_model() {
            let rate = pricing.rate(&model).ok_or_else(|| EvalError::UnknownModel(model.clone()))?;
            if rate.open {
                open += tokens.total();
            } else {
                closed += tokens.total();
            }
        }
        let dollars = cost(&result.ledger, pricing)?;
        writer
            .write_record([
                result.method.clone(),
                n.to_string(),
                format!("{score_mean:.6}"),
                format!("{success:.6}"),
                format!("{:.6}", passed as f64 / denom),
                result.k.to_string(),
                open.to_string(),
                closed.to_string(),
                result.ledger.states_expanded().to_string(),
                format_dollars(&dollars.total),
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(io_err(path))
}

/// One JSON object per line.
pub fn write_results(tasks: &[TaskResult], path: &Path) -> Result<(), EvalError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for task in tasks {
        let line = serde_json::to_string(task).expect("task results serialize");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_results(path: &Path) -> Result<Vec<TaskResult>, EvalError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut tasks = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let task = serde_json::from_str(&line).map_err(|e| EvalError::Io {
            path: path.into(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)),
        })?;
        tasks.push(task);
    }
    Ok(tasks)
}

/// Pairs two result sets by task id. Ids present on one side only are an error.
pub fn align(a: &[TaskResult], b: &[TaskResult]) -> Result<Vec<(TaskResult, TaskResult)>, EvalError> {
    use std::collections::BTreeMap;
    let left: BTreeMap<&str, &TaskResult> = a.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let right: BTreeMap<&str, &TaskResult> = b.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut missing: Vec<String> = left
        .keys()
        .filter(|k| !right.contains_key(*k))
        .chain(right.keys().filter(|k| !left.contains_key(*k)))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(EvalError::MisalignedTasks(missing));
    }
    Ok(left.iter().map(|(k, l)| ((*l).clone(), right[k].clone())).collect())
}
