//! Command-line surface. Every tuning knob is optional here so that the
//! config file and built-in defaults can fill the gaps.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracerank_core::harness::IntRange;
use tracerank_core::{FaultProfile, MutationOperator, Strategy};

#[derive(Debug, Parser)]
#[command(
    name = "tracerank",
    version,
    about = "Test prioritization over embedded execution traces",
    propagate_version = true
)]
pub struct Cli {
    /// Flat `key=value` file; flags override it, it overrides defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed. Falls back to $T2V_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for suite-level parallelism (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Ignore unknown keys in trace files.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Print the effective configuration as `key=value` lines and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted faults.
    Synth(SynthCmd),
    /// Strip oracle calls, truncate and tokenize traces.
    Preprocess(PreprocessCmd),
    /// Turn traces or token streams into test vectors.
    Embed(EmbedCmd),
    /// Fit the failure model and, from a corpus, the strategy selector.
    Train(TrainCmd),
    /// Order the tests of one or more suites.
    Prioritize(PrioritizeCmd),
    /// Run the full experiment on a corpus.
    Evaluate(EvaluateCmd),
    /// Summarize a metrics report, or project vectors onto two components.
    Report(ReportCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Hashed,
    Onehot,
    /// Vectors produced elsewhere, read from `--vectors`.
    External,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Hashed => "hashed",
            Backend::Onehot => "onehot",
            Backend::External => "external",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Backend as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Default, Args)]
#[command(next_help_heading = "Preprocessing")]
pub struct PreprocessKnobs {
    /// Keep at most this many contexts per trace (head and tail).
    #[arg(long, value_name = "N")]
    pub max_contexts: Option<usize>,
    /// Comma-separated substrings marking oracle methods to drop.
    #[arg(long, value_name = "LIST")]
    pub denylist: Option<String>,
    /// Magnitude at which numbers count as big.
    #[arg(long, value_name = "X")]
    pub big_magnitude: Option<f64>,
    /// Magnitude below which numbers count as zero.
    #[arg(long, value_name = "X")]
    pub zero_epsilon: Option<f64>,
}

#[derive(Debug, Default, Args)]
#[command(next_help_heading = "Embedding")]
pub struct EmbedKnobs {
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Hashed-backend vector length.
    #[arg(long, value_name = "N")]
    pub dimension: Option<usize>,
    #[arg(long, value_name = "SEED")]
    pub embedding_seed: Option<u64>,
    /// Add positional features to hashed vectors.
    #[arg(long)]
    pub positional: bool,
}

#[derive(Debug, Default, Args)]
#[command(next_help_heading = "Failure model")]
pub struct ModelKnobs {
    #[arg(long, value_name = "X")]
    pub learning_rate: Option<f64>,
    #[arg(long, value_name = "X")]
    pub l2_lambda: Option<f64>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
}

#[derive(Debug, Default, Args)]
#[command(next_help_heading = "Experiment")]
pub struct ExperimentKnobs {
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub strategies: Option<Vec<Strategy>>,
    /// Probabilities and distances averaged into the selector's features.
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    /// Runs per seeded strategy; the median is reported.
    #[arg(long, value_name = "N")]
    pub repeats: Option<usize>,
    /// Version folds used to build selector training data.
    #[arg(long, value_name = "N")]
    pub selector_folds: Option<usize>,
}

#[derive(Debug, Default, Args)]
#[command(next_help_heading = "Corpus")]
pub struct CorpusKnobs {
    #[arg(long)]
    pub project: Option<String>,
    /// HISTORY_LIKE, ANOMALY_LIKE or MIXED.
    #[arg(long)]
    pub profile: Option<FaultProfile>,
    #[arg(long, value_name = "N")]
    pub versions: Option<usize>,
    #[arg(long, value_name = "N")]
    pub suites: Option<usize>,
    /// Tests per suite, `min..max`.
    #[arg(long, value_name = "RANGE")]
    pub tests: Option<IntRange>,
    /// Contexts per trace, `min..max`.
    #[arg(long, value_name = "RANGE")]
    pub contexts: Option<IntRange>,
    /// Distinct methods available to skeletons.
    #[arg(long, value_name = "N")]
    pub vocab: Option<usize>,
    /// Comma-separated mutation operators.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub ops: Option<Vec<MutationOperator>>,
    /// Recurring signatures per suite.
    #[arg(long, value_name = "N")]
    pub signatures: Option<usize>,
    #[arg(long, value_name = "N")]
    pub signature_steps: Option<usize>,
    /// Seeded faults per suite, `min..max`.
    #[arg(long, value_name = "RANGE")]
    pub seeded_faults: Option<IntRange>,
    /// Failing tests per seeded fault, `min..max`.
    #[arg(long, value_name = "RANGE")]
    pub tests_per_fault: Option<IntRange>,
    /// Anomaly distance in standard deviations above the passing mean.
    #[arg(long, value_name = "SIGMAS")]
    pub margin: Option<f64>,
    /// Fraction of seeded faults that fail no test.
    #[arg(long, value_name = "X")]
    pub equivalent_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    /// Corpus directory to create.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusKnobs,
    #[command(flatten)]
    pub embed: EmbedKnobs,
}

#[derive(Debug, Args)]
pub struct PreprocessCmd {
    /// Trace JSONL.
    #[arg(long, value_name = "FILE")]
    pub traces: PathBuf,
    /// Token-stream JSONL to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Only use traces of this suite.
    #[arg(long, value_name = "ID")]
    pub suite: Option<String>,
    #[command(flatten)]
    pub pre: PreprocessKnobs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["traces", "streams"]))]
pub struct EmbedCmd {
    #[arg(long, value_name = "FILE")]
    pub traces: Option<PathBuf>,
    /// Token-stream JSONL, as written by `preprocess`.
    #[arg(long, value_name = "FILE")]
    pub streams: Option<PathBuf>,
    /// Interchange vectors for the external backend.
    #[arg(long, value_name = "FILE")]
    pub vectors: Option<PathBuf>,
    /// Vector JSONL to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Only embed traces of this suite; ids must be unique in what is embedded.
    #[arg(long, value_name = "ID", requires = "traces")]
    pub suite: Option<String>,
    #[command(flatten)]
    pub pre: PreprocessKnobs,
    #[command(flatten)]
    pub embed: EmbedKnobs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["traces", "corpus"]))]
pub struct TrainCmd {
    /// Labelled trace JSONL.
    #[arg(long, value_name = "FILE")]
    pub traces: Option<PathBuf>,
    /// Vectors for the traces (external backend).
    #[arg(long, value_name = "FILE", requires = "traces")]
    pub vectors: Option<PathBuf>,
    /// Balance the traces to one failure per fault and equal labels first.
    #[arg(long, requires = "traces")]
    pub balance: bool,
    /// Corpus directory; trains on its training split.
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
    /// Failure model JSON to write.
    #[arg(long, value_name = "FILE")]
    pub model_out: PathBuf,
    /// Selector JSON to write (needs `--corpus`).
    #[arg(long, value_name = "FILE", requires = "corpus")]
    pub selector_out: Option<PathBuf>,
    #[command(flatten)]
    pub pre: PreprocessKnobs,
    #[command(flatten)]
    pub embed: EmbedKnobs,
    #[command(flatten)]
    pub model: ModelKnobs,
    #[command(flatten)]
    pub experiment: ExperimentKnobs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).multiple(true).args(["traces", "vectors"]))]
pub struct PrioritizeCmd {
    #[arg(long)]
    pub strategy: Strategy,
    /// Trace JSONL; every suite in it is ranked.
    #[arg(long, value_name = "FILE")]
    pub traces: Option<PathBuf>,
    /// Interchange vectors of a single suite (or of every trace with `--traces`).
    #[arg(long, value_name = "FILE")]
    pub vectors: Option<PathBuf>,
    /// With `--traces`, rank only this suite. With `--vectors` alone, the
    /// suite id to report (defaults to the file stem).
    #[arg(long, value_name = "ID")]
    pub suite: Option<String>,
    /// Failure model used to fill in `p_fail`.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Selector for the combined strategy.
    #[arg(long, value_name = "FILE")]
    pub selector: Option<PathBuf>,
    /// `test_id,units` CSV for the greedy strategies.
    #[arg(long, value_name = "FILE")]
    pub coverage: Option<PathBuf>,
    /// Ranking JSONL to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub pre: PreprocessKnobs,
    #[command(flatten)]
    pub embed: EmbedKnobs,
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    /// Corpus directory written by `synth`.
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Output directory for `report.csv`, `pairwise.csv` and `summary.json`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub pre: PreprocessKnobs,
    #[command(flatten)]
    pub embed: EmbedKnobs,
    #[command(flatten)]
    pub model: ModelKnobs,
    #[command(flatten)]
    pub experiment: ExperimentKnobs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("what").required(true).multiple(true).args(["report", "project_2d"]))]
pub struct ReportCmd {
    /// Metrics CSV written by `evaluate`; summarized per metric and strategy.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Write the summary here instead of stdout.
    #[arg(long, value_name = "FILE", requires = "report")]
    pub out: Option<PathBuf>,
    /// Write a two-component PCA projection of test vectors to this CSV.
    #[arg(long, value_name = "FILE")]
    pub project_2d: Option<PathBuf>,
    /// Vectors to project.
    #[arg(long, value_name = "FILE")]
    pub vectors: Option<PathBuf>,
    /// Traces to embed and project.
    #[arg(long, value_name = "FILE", conflicts_with = "vectors")]
    pub traces: Option<PathBuf>,
    /// Only project traces of this suite.
    #[arg(long, value_name = "ID", requires = "traces")]
    pub suite: Option<String>,
    #[command(flatten)]
    pub pre: PreprocessKnobs,
    #[command(flatten)]
    pub embed: EmbedKnobs,
}
