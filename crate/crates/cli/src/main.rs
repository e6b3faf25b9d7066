//! `ctlab`: index trials, generate LLM queries, retrieve, evaluate, compare.

mod cmd_cache;
mod cmd_eval;
mod cmd_genqueries;
mod cmd_index;
mod cmd_search;
mod config;
mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use ctlab_core::text::{Stopwords, TextPipeline};

use config::FileConfig;
use error::{Class, Failure, Result};

#[derive(Parser)]
#[command(name = "ctlab", version, about = "Clinical-trial retrieval experiments from patient notes")]
struct Cli {
    /// Flat `key = value` file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index over a trial corpus.
    Index(cmd_index::IndexArgs),
    /// Run prompt strategies over topics and write parsed-query sidecars.
    Genqueries(cmd_genqueries::GenArgs),
    /// Retrieve trials for sidecar queries, raw topics or keyword files.
    Search(cmd_search::SearchArgs),
    /// Score a run against qrels.
    Eval(cmd_eval::EvalArgs),
    /// Paired t-tests of candidate runs against a baseline.
    Compare(cmd_eval::CompareArgs),
    /// Inspect or clean a response cache.
    Cache(cmd_cache::CacheArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return fail(&Failure::new(Class::Usage, first));
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(&f),
    }
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("ctlab: {}", f.line());
    ExitCode::from(f.class.exit_code() as u8)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Index(a) => cmd_index::run(a, &cfg),
        Command::Genqueries(a) => cmd_genqueries::run(a, &cfg),
        Command::Search(a) => cmd_search::run(a, &cfg),
        Command::Eval(a) => cmd_eval::run_eval(a, &cfg),
        Command::Compare(a) => cmd_eval::run_compare(a, &cfg),
        Command::Cache(a) => cmd_cache::run(a, &cfg),
    }
}

/// Text pipeline over the bundled or a configured stoplist.
pub(crate) fn pipeline(cfg: &FileConfig, flag: Option<PathBuf>) -> Result<TextPipeline> {
    let stopwords = match cfg.pick_path(flag, "stopwords") {
        Some(p) => Arc::new(Stopwords::from_path(&p).map_err(|e| Failure::io(&p, e))?),
        None => Stopwords::bundled(),
    };
    Ok(TextPipeline::new(stopwords))
}

pub(crate) fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::config(format!("{what} {} does not exist", path.display())))
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub(crate) fn write_output(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Failure::io(path, e))?;
    f.write_all(contents).map_err(|e| Failure::io(path, e))
}

/// File stem used to name derived outputs.
pub(crate) fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}
