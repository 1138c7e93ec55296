//! Command-line front end: argument definitions, configuration and the
//! subcommand implementations behind the `screenprio` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod http;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use screenprio::corpus::ReprMode;
use screenprio::lexical::Model;
use screenprio::metrics::Measure;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "screenprio", version, about = "Screening prioritisation for systematic reviews")]
pub struct Cli {
    /// Parallel topic workers (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Recorded in outputs; the lexical rankers are deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download titles and abstracts from PubMed into a corpus file.
    Fetch(FetchArgs),
    /// Load a dataset and report gaps between topics, qrels and corpus.
    Ingest(IngestArgs),
    /// Rank every topic's candidates with BM25 or QLM.
    Rank(RankArgs),
    /// Evaluate a run with the CLEF TAR measures.
    Evaluate(EvaluateArgs),
    /// Check a run against the topics' candidate sets.
    Validate(ValidateArgs),
    /// Paired t-tests of one run against others (Bonferroni corrected).
    Compare(CompareArgs),
    /// Per-topic differences between two runs.
    Gainloss(GainlossArgs),
    /// Evaluate a series of checkpoint runs and find where they saturate.
    Convergence(ConvergenceArgs),
    /// ingest, rank, evaluate, compare and gainloss driven by a config file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Fetch every candidate pmid of these topics.
    #[arg(long, conflicts_with = "pmids", required_unless_present = "pmids")]
    pub topics: Option<PathBuf>,
    /// File with one pmid per line.
    #[arg(long)]
    pub pmids: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report of missing/untitled pmids (default: <out>.report.json).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, env = "SCREENPRIO_EFETCH_URL", default_value = screenprio::corpus::DEFAULT_ENDPOINT)]
    pub endpoint: String,
    #[arg(long, env = "NCBI_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    #[arg(long, env = "SCREENPRIO_BATCH_SIZE", default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: u64,
    #[arg(long, default_value_t = 4)]
    pub max_retries: u32,
    /// Initial retry delay in milliseconds; doubles per retry up to 8 s.
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Directory for `ingest_report.json`; the summary always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long, value_parser = parse_from_str::<Model>)]
    pub model: Model,
    #[arg(long = "repr", value_parser = parse_from_str::<ReprMode>)]
    pub repr: ReprMode,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// File of stopwords, one per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run tag (default: `<model>-<repr>`).
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Structured report, one JSON record per topic plus a means record.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the human-readable table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Reject runs that do not rank exactly each candidate set.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Focal run first, then the runs it is tested against.
    #[arg(long, num_args = 2.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "ap", value_parser = parse_from_str::<Measure>)]
    pub measure: Vec<Measure>,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = screenprio::analysis::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub strict: bool,
    /// CSV table (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GainlossArgs {
    #[arg(long)]
    pub run_a: PathBuf,
    #[arg(long)]
    pub run_b: PathBuf,
    #[arg(long, default_value = "ap", value_parser = parse_from_str::<Measure>)]
    pub measure: Measure,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub strict: bool,
    /// CSV table (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    /// Directory holding one run file per checkpoint.
    #[arg(long)]
    pub series: PathBuf,
    /// File name pattern; the `*` part must be the training step.
    #[arg(long, default_value = "step-*.run")]
    pub pattern: String,
    #[arg(long, default_value = "ap", value_parser = parse_from_str::<Measure>)]
    pub measure: Measure,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = screenprio::analysis::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// CSV table (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    #[arg(long = "model", value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long = "repr", value_delimiter = ',')]
    pub representations: Vec<String>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tag_prefix: Option<String>,
    #[arg(long = "measure", value_delimiter = ',')]
    pub measures: Vec<String>,
    #[arg(long)]
    pub focal: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Shorthand for `--completion strict`.
    #[arg(long, conflicts_with = "completion")]
    pub strict: bool,
    /// `append` or `strict`.
    #[arg(long)]
    pub completion: Option<String>,
    /// Replaces the stopword list of the config.
    #[arg(long = "stopword", value_delimiter = ',')]
    pub stopwords: Vec<String>,
    /// Extra run file to evaluate and compare; repeatable.
    #[arg(long = "external-run")]
    pub external_runs: Vec<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

/// Runs a parsed command line inside a rayon pool of `--jobs` threads.
pub fn run(cli: Cli) -> CliResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::usage(format!("cannot build thread pool: {e}")))?;
    let globals = commands::Globals {
        jobs: cli.jobs,
        seed: cli.seed,
    };
    pool.install(|| match cli.command {
        Command::Fetch(args) => commands::fetch(&args),
        Command::Ingest(args) => commands::ingest(&args),
        Command::Rank(args) => commands::rank(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Validate(args) => commands::validate(&args),
        Command::Compare(args) => commands::compare(&args),
        Command::Gainloss(args) => commands::gainloss(&args),
        Command::Convergence(args) => commands::convergence(&args),
        Command::Pipeline(args) => commands::pipeline(&args, &globals),
    })
}
