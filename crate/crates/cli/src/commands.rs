use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use stl_core::eval::{
    align, emit_report, paired_bootstrap, read_results, write_results, LedgerSnapshot, MethodResult, PricingTable,
    TaskResult,
};
use stl_core::search::{SearchConfig, SearchContext, SearchError, SearchTree};
use stl_core::stl::{export_jsonl, StlRun, TabularTrainer, TrainedModels};
use stl_core::{seed, Split, Task};

use crate::config::{run_dir, ExperimentConfig, Manifest};
use crate::error::CliError;
use crate::setup::{build, Setup};

/// Task ids made safe for file names.
fn file_stem(task_id: &str) -> String {
    task_id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("artifacts serialize") + "\n";
    fs::write(path, text).map_err(CliError::io(path))
}

fn pricing(config: &ExperimentConfig) -> Result<PricingTable, CliError> {
    match &config.pricing {
        Some(path) => Ok(PricingTable::with_overrides(path)?),
        None => Ok(PricingTable::default()),
    }
}

fn write_trees(dir: &Path, trees: &[SearchTree], suffix: &str) -> Result<(), CliError> {
    create_dir(dir)?;
    for tree in trees {
        let path = dir.join(format!("{}{suffix}.json", file_stem(&tree.task.id)));
        tree.write_dump(&path).map_err(CliError::io(path))?;
    }
    Ok(())
}

fn with_pool<T: Send>(parallel: usize, work: impl FnOnce() -> T + Send) -> T {
    if parallel <= 1 {
        return work();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallel).build() {
        Ok(pool) => pool.install(work),
        Err(err) => {
            log::warn!("running sequentially: {err}");
            work()
        }
    }
}

#[derive(Serialize)]
struct TrajectoryRecord<'a> {
    task_id: &'a str,
    attempt: usize,
    actions: Vec<&'a str>,
    final_state: &'a str,
    terminal: bool,
    score: Option<f64>,
    states_expanded: u64,
    failure: Option<&'a str>,
}

struct TaskOutcome {
    task: Task,
    trees: Vec<SearchTree>,
    result: TaskResult,
    error: Option<String>,
}

fn search_task(setup: &Setup, config: &ExperimentConfig, task: &Task) -> Result<TaskOutcome, CliError> {
    let mut trees = Vec::new();
    let mut attempts = Vec::new();
    let mut score = 0.0;
    let mut error = None;
    for attempt in 0..config.attempts {
        let search = SearchConfig {
            seed: if attempt == 0 { config.seed } else { seed::derive(config.seed, "attempt", attempt as u64) },
            ..config.search.clone()
        };
        let ctx = SearchContext::new(&*setup.env, &*setup.policy, &*setup.value, &search).with_ledger(Arc::clone(&setup.ledger));
        match ctx.run(config.engine, task) {
            Ok(tree) => {
                let s = tree.best_trajectory().and_then(|t| setup.env.ground_truth_score(&t)).unwrap_or(0.0);
                if attempt == 0 {
                    score = s;
                }
                attempts.push(s >= 1.0);
                trees.push(tree);
            }
            Err(SearchError::Agent(stl_core::agents::AgentError::Transport(t))) => {
                return Err(CliError::Transport(format!("task `{}`: {t}", task.id)));
            }
            Err(err) => {
                log::warn!("task {} attempt {attempt} failed: {err}", task.id);
                error.get_or_insert_with(|| err.to_string());
                attempts.push(false);
            }
        }
    }
    let result = TaskResult { task_id: task.id.clone(), score, success: attempts.first() == Some(&true) && score >= 1.0, attempts };
    Ok(TaskOutcome { task: task.clone(), trees, result, error })
}

pub fn cmd_search(config: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let setup = build(config, Split::Test)?;
    let dir = run_dir(config);
    create_dir(&dir)?;
    Manifest::new("search", config).write(&dir)?;

    let outcomes: Vec<Result<TaskOutcome, CliError>> = with_pool(config.parallel, || {
        use rayon::prelude::*;
        if config.parallel <= 1 {
            setup.tasks.iter().map(|t| search_task(&setup, config, t)).collect()
        } else {
            setup.tasks.par_iter().map(|t| search_task(&setup, config, t)).collect()
        }
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let trees_dir = dir.join("trees");
    create_dir(&trees_dir)?;
    let trajectories_path = dir.join("trajectories.jsonl");
    let mut trajectories = Vec::new();
    for outcome in &outcomes {
        for (attempt, tree) in outcome.trees.iter().enumerate() {
            let suffix = if attempt == 0 { String::new() } else { format!(".attempt-{attempt}") };
            write_trees(&trees_dir, std::slice::from_ref(tree), &suffix)?;
            let best = tree.stats.best_leaf.unwrap_or(0);
            let path = tree.path(best);
            let record = TrajectoryRecord {
                task_id: &outcome.task.id,
                attempt,
                actions: path.iter().filter_map(|&i| tree.nodes[i].action.as_deref()).collect(),
                final_state: &tree.nodes[best].state_id,
                terminal: tree.nodes[best].terminal,
                score: tree.best_trajectory().and_then(|t| setup.env.ground_truth_score(&t)),
                states_expanded: tree.stats.states_expanded,
                failure: tree.stats.failure.as_deref(),
            };
            trajectories.push(serde_json::to_string(&record).expect("records serialize"));
        }
    }
    let mut text = trajectories.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(&trajectories_path, text).map_err(CliError::io(&trajectories_path))?;

    let results: Vec<TaskResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    write_results(&results, &dir.join("results.jsonl"))?;
    let ledger = setup.ledger.snapshot();
    write_json(&dir.join("ledger.json"), &ledger)?;
    let method = MethodResult { method: config.method_name(), tasks: results.clone(), ledger: ledger.clone(), k: config.attempts };
    emit_report(&[method], &pricing(config)?, &dir.join("report.csv"))?;

    let failed: Vec<&str> = outcomes.iter().filter(|o| o.error.is_some()).map(|o| o.task.id.as_str()).collect();
    let n = results.len() as f64;
    println!("tasks: {}", results.len());
    println!("success rate: {:.4}", results.iter().filter(|r| r.success).count() as f64 / n);
    println!("score mean: {:.4}", results.iter().map(|r| r.score).sum::<f64>() / n);
    println!("states expanded: {}", ledger.states_expanded());
    if !failed.is_empty() {
        println!("failed tasks ({}): {}", failed.len(), failed.join(", "));
    }
    println!("run directory: {}", dir.display());
    Ok(dir)
}

pub fn cmd_stl(config: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let setup = build(config, Split::Rollout)?;
    config.stl.validate(setup.tasks.len())?;
    let dir = run_dir(config);
    create_dir(&dir)?;
    Manifest::new("stl", config).write(&dir)?;

    let run = StlRun {
        env: &*setup.env,
        policy: &*setup.policy,
        base: Arc::clone(&setup.value),
        trainer: &TabularTrainer,
        stl: &config.stl,
        search: &config.search,
        out_dir: Some(&dir),
        parallel: config.parallel,
    };
    let outcome = run.run(&setup.tasks)?;

    let mut ledger = setup.ledger.snapshot();
    for (k, trees) in outcome.trees.iter().enumerate() {
        write_trees(&dir.join(format!("iteration-{}", k + 1)).join("trees"), trees, "")?;
    }
    for iteration in &outcome.report.iterations {
        ledger.merge(&iteration.ledger);
    }
    write_json(&dir.join("stl_report.json"), &outcome.report)?;
    write_json(&dir.join("ledger.json"), &ledger)?;

    let model_dir = dir.join("model");
    create_dir(&model_dir)?;
    let last = outcome.datasets.last().expect("at least one iteration");
    if last.is_empty() {
        log::warn!("final dataset is empty; no model artifact written");
    } else {
        match &outcome.models {
            TrainedModels::Single(_) => export_jsonl(last, &model_dir.join("dataset.jsonl"), config.stl.mask)?,
            TrainedModels::PerDepth(_) => {
                for (depth, part) in last.partitions() {
                    export_jsonl(&part, &model_dir.join(format!("depth-{depth}.jsonl")), config.stl.mask)?;
                }
            }
        }
    }

    for it in &outcome.report.iterations {
        let rejected: usize = it.rejected.values().sum();
        println!(
            "iteration {}: tasks {} failed {} candidates {} kept {} rejected {} dataset {}",
            it.iteration,
            it.tasks.len(),
            it.failed_tasks.len(),
            it.candidates,
            it.kept,
            rejected,
            it.dataset_size
        );
    }
    println!("model: {}", model_dir.display());
    println!("run directory: {}", dir.display());
    Ok(dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Score,
    Success,
}

impl Metric {
    fn read(self, task: &TaskResult) -> f64 {
        match self {
            Metric::Score => task.score,
            Metric::Success => f64::from(u8::from(task.success)),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Metric::Score => "score",
            Metric::Success => "success",
        }
    }
}

/// A results file, or a run directory containing `results.jsonl`.
fn results_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("results.jsonl")
    } else {
        path.to_path_buf()
    }
}

pub struct EvalArgs<'a> {
    pub a: &'a Path,
    pub b: &'a Path,
    pub metric: Metric,
    pub b_samples: u64,
    pub seed: u64,
    pub out: &'a Path,
}

pub fn cmd_eval(args: &EvalArgs<'_>) -> Result<(), CliError> {
    let a = read_results(&results_path(args.a))?;
    let b = read_results(&results_path(args.b))?;
    let pairs = align(&a, &b)?;
    let xs: Vec<f64> = pairs.iter().map(|(l, _)| args.metric.read(l)).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, r)| args.metric.read(r)).collect();
    let ab = paired_bootstrap(&xs, &ys, args.b_samples, args.seed)?;
    let ba = paired_bootstrap(&ys, &xs, args.b_samples, args.seed)?;
    let identical = xs.iter().zip(&ys).all(|(x, y)| x == y);

    println!("metric: {}", args.metric.name());
    println!("tasks: {}", pairs.len());
    println!("delta (a - b): {:.6}", ab.delta);
    println!("p (a > b): {:.6}", ab.p);
    println!("p (b > a): {:.6}", ba.p);
    if identical {
        println!("no difference: every paired score is equal");
    }

    let mut out = fs::File::create(args.out).map_err(CliError::io(args.out))?;
    let text = format!(
        "metric,tasks,a,b,delta,p_a_gt_b,p_b_gt_a,b_samples,seed\n{},{},{},{},{:.6},{:.6},{:.6},{},{}\n",
        args.metric.name(),
        pairs.len(),
        csv_field(&args.a.display().to_string()),
        csv_field(&args.b.display().to_string()),
        ab.delta,
        ab.p,
        ba.p,
        args.b_samples,
        args.seed
    );
    out.write_all(text.as_bytes()).map_err(CliError::io(args.out))
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// One report row per run directory.
pub fn cmd_report(runs: &[PathBuf], pricing_path: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let mut methods = Vec::new();
    for run in runs {
        let manifest = Manifest::read(&run.join("manifest.json"))?;
        let tasks = read_results(&run.join("results.jsonl"))?;
        let ledger_path = run.join("ledger.json");
        let text = fs::read_to_string(&ledger_path).map_err(CliError::io(&ledger_path))?;
        let ledger: LedgerSnapshot =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", ledger_path.display())))?;
        methods.push(MethodResult { method: manifest.config.method_name(), tasks, ledger, k: manifest.config.attempts });
    }
    let pricing = match pricing_path {
        Some(path) => PricingTable::with_overrides(path)?,
        None => PricingTable::default(),
    };
    emit_report(&methods, &pricing, out)?;
    println!("report: {}", out.display());
    Ok(())
}
