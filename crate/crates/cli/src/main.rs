mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use colink::{ErrorKind, LinkMode};

#[derive(Parser, Debug)]
#[command(name = "colink", version, about = "Collective dual-encoder entity linking")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for generation, initialization and sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Single-threaded execution with reproducible output.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads for document-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic knowledge base, vocabulary and split corpus.
    Generate(GenerateArgs),
    /// Train a model and write a checkpoint plus a JSONL training log.
    Train(TrainArgs),
    /// Link a corpus with a trained checkpoint.
    Link(LinkArgs),
    /// Score a prediction file against a gold corpus.
    Eval(EvalArgs),
    /// Measure collective and per-mention throughput.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub mentions_per_doc: Option<usize>,
    #[arg(long)]
    pub ambiguity: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub modifiers: Option<usize>,
    #[arg(long)]
    pub max_modifiers: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub distractor_rate: Option<f64>,
    /// Train and dev fractions; the rest is test.
    #[arg(long, default_value_t = 0.6)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    pub dev_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Collective,
    PerMention,
    EndToEndExhaustive,
    EndToEndBio,
}

impl From<ModeArg> for LinkMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Collective => LinkMode::Collective,
            ModeArg::PerMention => LinkMode::PerMention,
            ModeArg::EndToEndExhaustive => LinkMode::EndToEndExhaustive,
            ModeArg::EndToEndBio => LinkMode::EndToEndBio,
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct PathArgs {
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub paths: PathArgs,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub n_hard: Option<usize>,
    #[arg(long)]
    pub n_random: Option<usize>,
    #[arg(long)]
    pub refresh_every: Option<usize>,
    #[arg(long)]
    pub detection_weight: Option<f64>,
    /// Stop once dev P@1 reaches this value.
    #[arg(long)]
    pub target_p_at_1: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub tie_encoders: Option<bool>,
    /// Continue from the checkpoint path if it exists.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many epochs in this invocation; a later `--resume`
    /// picks up where it left off.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Args, Debug)]
pub struct LinkArgs {
    #[command(flatten)]
    pub paths: PathArgs,
    /// Corpus to link; gold mentions are used as spans in known-span modes.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Span acceptance threshold for exhaustive decoding.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Pick gamma by strict F1 on this corpus before linking.
    #[arg(long, conflicts_with = "gamma")]
    pub tune_gamma: Option<PathBuf>,
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Optional knowledge base used to validate gold entity ids.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Restrict ranking metrics to mentions whose gold entity is in the
    /// candidate file.
    #[arg(long, requires = "candidates")]
    pub normalized: bool,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,10,64")]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub paths: PathArgs,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Benchmark freshly initialized parameters instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    pub init: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Divergence => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
