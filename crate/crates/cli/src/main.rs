mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use k2rag::pipeline::PipelineKind;

#[derive(Parser)]
#[command(name = "k2rag", version, about = "Knowledge-graph guided hybrid retrieval QA engine")]
struct Cli {
    /// Engine configuration file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `k2rag=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a raw corpus into the summarized-corpus CSV.
    Summarize(SummarizeArgs),
    /// Build sparse, dense and knowledge-graph stores.
    Index(IndexArgs),
    /// Answer one question with a pipeline.
    Query(QueryArgs),
    /// K-fold evaluation of a pipeline against a QA file.
    Eval(EvalArgs),
    /// Compare evaluation reports side by side.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// json-array, json-lines or csv; guessed from the extension otherwise.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    skip_malformed: bool,
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Store {
    Sparse,
    Dense,
    Kg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Summarized corpus, used by k2rag.
    Summarized,
    /// Raw corpus, used by the naive pipelines.
    Raw,
}

impl Mode {
    fn dir_name(self) -> &'static str {
        match self {
            Mode::Summarized => "summarized",
            Mode::Raw => "raw",
        }
    }

    fn for_pipeline(kind: PipelineKind) -> Self {
        if kind.uses_summarized_corpus() {
            Mode::Summarized
        } else {
            Mode::Raw
        }
    }
}

#[derive(Args)]
pub struct IndexArgs {
    /// Stores to build; repeat or comma-separate. All three when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    store: Vec<Store>,
    #[arg(long, value_enum, default_value = "summarized")]
    mode: Mode,
    /// Raw corpus (raw mode).
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    skip_malformed: bool,
    /// Summarized-corpus CSV (summarized mode).
    #[arg(long)]
    summarized: Option<PathBuf>,
    #[arg(long)]
    index_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct RetrievalOverrides {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    pool: Option<usize>,
    #[arg(long)]
    index_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct QueryArgs {
    #[arg(long)]
    pipeline: PipelineKind,
    #[arg(long)]
    question: String,
    /// Write the step trace as json.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    overrides: RetrievalOverrides,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pipeline: PipelineKind,
    /// Json-lines file of {id, question, answer}.
    #[arg(long)]
    qa: PathBuf,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after this many questions; rerun to resume from the checkpoint.
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    overrides: RetrievalOverrides,
}

#[derive(Args)]
pub struct ReportArgs {
    /// report.json files or directories containing one.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log))
        .with_writer(std::io::stderr)
        .init();
    let result = commands::load_config(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Summarize(a) => commands::summarize(&cfg, a),
        Command::Index(a) => commands::index(&cfg, a),
        Command::Query(a) => commands::query(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::Report(a) => commands::report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.category());
            ExitCode::from(2)
        }
    }
}
