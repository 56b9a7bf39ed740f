//! `stl`: search, self-taught lookahead training, evaluation and reporting.

mod commands;
mod config;
mod error;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{EvalArgs, Metric};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "stl", version, about = "Tree search with self-taught lookahead value models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search engine over the test tasks.
    Search(RunArgs),
    /// Run the self-taught lookahead loop over the rollout tasks.
    Stl(RunArgs),
    /// Paired bootstrap comparison of two result sets.
    Eval {
        /// Results file or run directory.
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "score")]
        metric: Metric,
        #[arg(long, default_value_t = 100_000)]
        b_samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "eval.csv")]
        out: PathBuf,
    },
    /// Summarize run directories into one CSV.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
        /// CSV of per-model price overrides.
        #[arg(long)]
        pricing: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON config, or a run's manifest.json.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `search.beam_width=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    value: Option<String>,
    #[arg(long)]
    base_value: Option<String>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    attempts: Option<usize>,
    #[arg(long)]
    method: Option<String>,
}

impl RunArgs {
    /// `engine_key` is where `--engine` lands: the search engine, or the
    /// data-generation engine for `stl`.
    fn load(&self, engine_key: &str) -> Result<config::ExperimentConfig, CliError> {
        let mut overrides = self.set.iter().map(|s| config::parse_override(s)).collect::<Result<Vec<_>, _>>()?;
        let flags = [
            ("environment", self.env.clone()),
            (engine_key, self.engine.clone()),
            ("policy", self.policy.clone()),
            ("value", self.value.clone()),
            ("base_value", self.base_value.clone()),
            ("tasks", self.tasks.as_ref().map(|p| p.display().to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("output_dir", self.out.as_ref().map(|p| p.display().to_string())),
            ("parallel", self.parallel.map(|v| v.to_string())),
            ("limit", self.limit.map(|v| v.to_string())),
            ("attempts", self.attempts.map(|v| v.to_string())),
            ("method", self.method.clone()),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                overrides.push((key.to_string(), value));
            }
        }
        config::load(self.config.as_deref(), &overrides)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Search(args) => commands::cmd_search(&args.load("engine")?).map(drop),
        Command::Stl(args) => commands::cmd_stl(&args.load("stl.engine")?).map(drop),
        Command::Eval { a, b, metric, b_samples, seed, out } => {
            commands::cmd_eval(&EvalArgs { a: &a, b: &b, metric, b_samples, seed, out: &out })
        }
        Command::Report { runs, out, pricing } => commands::cmd_report(&runs, pricing.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
