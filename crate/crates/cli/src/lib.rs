//! Batch runner behind the `lexsimp` binary.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lexsimp_core::evaluation::ManualScheme;
use lexsimp_core::providers::ProviderError;
use lexsimp_core::CefrLevel;

mod commands;
pub mod config;
mod output;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "lexsimp", version, about = "Lexical simplification toolkit")]
pub struct Cli {
    /// TOML run configuration; relative paths in it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads. Output order never depends on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label every token of an aligned corpus with its edit operation.
    Annotate(CorpusArgs),
    /// Edit-operation distribution of a corpus or of annotated output.
    Stats(StatsArgs),
    /// Level each word and list the simplification targets.
    Identify(CwiArgs),
    /// Produce the simplified variants of every input sentence.
    Simplify(SimplifyArgs),
    /// Score system output against references with each configured encoder.
    Evaluate(EvaluateArgs),
    /// Aggregate manual annotation labels.
    ManualReport(ManualArgs),
    /// Seeded train/test split of line-aligned files.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// `complex<TAB>simple` lines.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// One line of `i-j` links per pair.
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    /// Compare tokens after orthographic normalization.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Read an `annotate` output file instead of the corpus.
    #[arg(long, conflicts_with_all = ["pairs", "alignments"])]
    pub ops: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CwiArgs {
    /// One sentence per line, optionally `id<TAB>text`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `word<TAB>level` lines.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Words at or above this level are targets.
    #[arg(long)]
    pub cefr_threshold: Option<CefrLevel>,
    /// Level for words missing from the lexicon.
    #[arg(long)]
    pub cefr_default: Option<CefrLevel>,
    /// Normalize orthography for lexicon lookups.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct SimplifyArgs {
    #[command(flatten)]
    pub cwi: CwiArgs,
    /// Word vectors in text format.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// `mlm`, `embedding`, `combined` or `all`.
    #[arg(long)]
    pub variant: Option<String>,
    /// Candidates requested from each generator.
    #[arg(long)]
    pub k: Option<usize>,
    /// Only accept substitutes whose glosses overlap the target's.
    #[arg(long)]
    pub require_gloss: bool,
    /// Keep the per-target rule traces in the output.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `simplify` output to score against `--targets`.
    #[arg(long)]
    pub simplified: Option<PathBuf>,
    /// Gold simple sentences, one per line in the order of `--simplified`.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// `original<TAB>generated<TAB>target` lines, optionally prefixed by an id column.
    #[arg(long)]
    pub generative: Option<PathBuf>,
    /// Decimals in the CSV report.
    #[arg(long, default_value_t = 3)]
    pub decimals: usize,
    /// IDF-weighted matching (not available).
    #[arg(long)]
    pub idf: bool,
}

#[derive(Debug, Args)]
pub struct ManualArgs {
    /// `sentence_id,scheme,value` rows.
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<ManualScheme>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Line-aligned files split with the same permutation. Defaults to the
    /// configured corpus and alignments.
    pub files: Vec<PathBuf>,
    /// Share of lines in the train part.
    #[arg(long)]
    pub fraction: Option<f64>,
}

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, configuration or arguments (exit 2).
    Input(anyhow::Error),
    /// A model provider failed while serving requests (exit 3).
    Provider(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Provider(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(e) | Failure::Provider(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<ProviderError> for Failure {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Transport { .. } | ProviderError::Protocol { .. } | ProviderError::FixtureMiss { .. } => {
                Failure::Provider(e.into())
            }
            ProviderError::Fixture { .. } | ProviderError::Descriptor { .. } | ProviderError::Argument(_) => {
                Failure::Input(e.into())
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let settings = config::Global::resolve(&cli, &config);
    match &cli.command {
        Command::Annotate(args) => commands::annotate(args, &config, &settings),
        Command::Stats(args) => commands::stats(args, &config, &settings),
        Command::Identify(args) => commands::identify(args, &config, &settings),
        Command::Simplify(args) => commands::simplify(args, &config, &settings),
        Command::Evaluate(args) => commands::evaluate(args, &config, &settings),
        Command::ManualReport(args) => commands::manual_report(args, &config, &settings),
        Command::Split(args) => commands::split(args, &config, &settings),
    }
}
