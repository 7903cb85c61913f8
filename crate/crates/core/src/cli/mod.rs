//! Command-line surface of the `prs` binary.
//!
//! Every command resolves its settings as flags over an optional TOML file
//! (`--config`) over built-in defaults, and prints a JSON summary on success.
//! Exit codes: 0 success, 1 usage, 2 backend failure, 3 data error.

mod annotate;
mod build;
mod compare;
pub mod manifest;
mod sample;
pub mod settings;
mod stats;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::Value;

pub use annotate::{assign_profession, AnnotateArgs, Annotator, ANNOTATED_FILE, FAILED_FILE};
pub use build::{BuildArgs, MERGED_FILE};
pub use compare::{compare_report, histogram, CompareArgs, CompareReport, MethodReport, SweepArgs};
pub use manifest::RunManifest;
pub use sample::{load_prompts, load_trees, run_sampling, SampleArgs, JOURNAL_FILE, TREES_FILE};
pub use settings::Settings;
pub use stats::{tree_stats, LayerStats, StatsArgs, TreeStats};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "prs", version, about = "Preference-guided reflective sampling")]
pub struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one tree per prompt.
    Sample(SampleArgs),
    /// Run several methods under one budget and report rewards.
    Compare(CompareArgs),
    /// Sweep PRS depth at a fixed budget.
    Sweep(SweepArgs),
    /// Turn tree files into training data.
    BuildDataset(BuildArgs),
    /// Generate a preference for each prompt.
    AnnotatePreferences(AnnotateArgs),
    /// Summarize a tree file.
    Stats(StatsArgs),
}

pub fn run(cli: &Cli) -> Result<Value> {
    let settings = || Settings::load(cli.config.as_deref());
    match &cli.command {
        Command::Sample(a) => sample::cmd_sample(settings()?, a),
        Command::Compare(a) => compare::cmd_compare(settings()?, a),
        Command::Sweep(a) => compare::cmd_sweep(settings()?, a).map(|_| Value::Null),
        Command::BuildDataset(a) => build::cmd_build_dataset(a),
        Command::AnnotatePreferences(a) => annotate::cmd_annotate_preferences(settings()?, a),
        Command::Stats(a) => stats::cmd_stats(a),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(Value::Null) => 0,
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
