//! `bitextkit` command-line tool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod catalog;
mod data;
mod langid;
mod read;
mod serve;

#[derive(Parser, Debug)]
#[command(name = "bitextkit", version, about = "Parallel corpus toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Random seed (pipeline files keep their own unless this is given).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that relative dataset paths are resolved against.
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Write a JSON run report to this file.
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Parallel jobs; defaults to the number of processors.
    #[arg(long, short, global = true)]
    pub jobs: Option<usize>,
}

impl Global {
    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    pub fn workdir(&self) -> PathBuf {
        self.workdir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Writes `value` as pretty JSON to `--report`, if given.
    pub fn write_report(&self, value: &serde_json::Value) -> anyhow::Result<()> {
        if let Some(path) = &self.report {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            std::fs::write(path, text)
                .map_err(|e| anyhow::anyhow!("writing report {}: {e}", path.display()))?;
        }
        Ok(())
    }

    pub fn note(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Query the corpus catalog.
    #[command(subcommand)]
    Catalog(catalog::CatalogCommand),
    /// Download the files of matching catalog records.
    Fetch(catalog::FetchArgs),
    /// Convert an XCES alignment and its documents to Moses or TMX.
    Read(read::ReadArgs),
    /// Run or check pipeline files.
    #[command(subcommand)]
    Pipeline(data::PipelineCommand),
    /// Keep units accepted by every filter.
    Filter(data::FilterArgs),
    /// Write per-unit filter scores as JSON lines.
    Scores(data::ScoresArgs),
    /// Drop repeated units.
    Dedup(data::DedupArgs),
    /// Drop units that also occur in a reference dataset.
    Overlap(data::OverlapArgs),
    /// Temperature-based resampling of several language pairs.
    Sample(data::SampleArgs),
    /// Random two-way split.
    Split(data::SplitArgs),
    /// Cartesian product of alternative translations.
    Product(data::ProductArgs),
    /// Join two bitexts on a shared pivot language.
    Triangulate(data::TriangulateArgs),
    /// Keep the best-scoring fraction of units.
    CeRetain(data::CeRetainArgs),
    /// Run a translation router or a dictionary backend.
    Serve(serve::ServeArgs),
    /// Character n-gram language identification.
    #[command(subcommand)]
    Langid(langid::LangidCommand),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Catalog(c) => catalog::run(g, c),
        Command::Fetch(a) => catalog::fetch(g, a),
        Command::Read(a) => read::run(g, a),
        Command::Pipeline(c) => data::pipeline(g, c),
        Command::Filter(a) => data::filter(g, a),
        Command::Scores(a) => data::scores(g, a),
        Command::Dedup(a) => data::dedup(g, a),
        Command::Overlap(a) => data::overlap(g, a),
        Command::Sample(a) => data::sample(g, a),
        Command::Split(a) => data::split(g, a),
        Command::Product(a) => data::product(g, a),
        Command::Triangulate(a) => data::triangulate(g, a),
        Command::CeRetain(a) => data::ce_retain(g, a),
        Command::Serve(a) => serve::run(g, a),
        Command::Langid(c) => langid::run(g, c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
