//! Synthetic corpora with planted faults and end-to-end experiments.
//!
//! A corpus holds `n_versions` versions of a project. Every version carries
//! the same suites (`S01`, `S02`, ...). Each suite appears twice:
//!
//! - `Sxx` is the run against the version's real fault. Exactly one test
//!   fails; FFR is measured here.
//! - `Sxx.mut` is the same tests run against seeded mutants. Each mutant
//!   fails one or more tests; APFD is measured here.
//!
//! Faults are trace perturbations tagged with a mutation operator. A
//! history-like fault replays one of a few signatures that recur across
//! versions of its suite; an anomaly-like fault applies fresh perturbations
//! until the failing trace sits far from its suite's centroid.

mod dataset;
mod experiment;
pub mod store;
mod synth;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingError;
use crate::failure_model::ModelError;
use crate::metrics::MetricsError;
use crate::prioritize::{CoverageMatrix, PrioritizeError};
use crate::trace_model::{ExecutionTrace, TestSuite, TraceError};

pub use dataset::{balance_dataset, balance_pool, split_versions, Split};
pub use experiment::{
    embed_suite, expected_winner, run_experiment, train_models, ExperimentConfig,
    ExperimentReport, PairwiseRow, ReportRow, SelectorSummary, TrainedModels, EMPTY_REPORT_MARKER,
    METRIC_APFD, METRIC_FFR, METRIC_FFR_EXCLUDED,
};
pub use synth::synth_corpus;

/// Versions reserved for testing, counted from the newest.
pub const TEST_VERSIONS: usize = 5;
/// Suites with at most this many tests get no FFR row.
pub const MIN_FFR_SUITE: usize = 5;
pub const MUTANT_SUFFIX: &str = ".mut";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid corpus config: {0}")]
    Config(String),
    #[error("infeasible corpus: {0}")]
    Infeasible(String),
    #[error("no failing traces in the training pool")]
    NoFailingTraces,
    #[error("need at least {needed} versions, found {found}")]
    TooFewVersions { needed: usize, found: usize },
    #[error("invalid experiment config: {0}")]
    Experiment(String),
    #[error("corpus {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prioritize(#[from] PrioritizeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How planted failures relate to the rest of the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultProfile {
    /// Failures replay signatures seen in earlier versions.
    HistoryLike,
    /// Failures are fresh outliers within their suite.
    AnomalyLike,
    /// Each suite is assigned one of the two profiles.
    Mixed,
}

impl FaultProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultProfile::HistoryLike => "HISTORY_LIKE",
            FaultProfile::AnomalyLike => "ANOMALY_LIKE",
            FaultProfile::Mixed => "MIXED",
        }
    }
}

impl fmt::Display for FaultProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FaultProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "HISTORY_LIKE" => Ok(FaultProfile::HistoryLike),
            "ANOMALY_LIKE" => Ok(FaultProfile::AnomalyLike),
            "MIXED" => Ok(FaultProfile::Mixed),
            _ => Err(format!(
                "unknown fault profile `{s}` (expected HISTORY_LIKE, ANOMALY_LIKE or MIXED)"
            )),
        }
    }
}

/// Mutation operator a trace perturbation stands in for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MutationOperator {
    /// Arithmetic operator replacement.
    Aor,
    /// Logical operator replacement.
    Lor,
    /// Conditional operator replacement.
    Cor,
    /// Relational operator replacement.
    Ror,
    /// Shift operator replacement.
    Sor,
    /// Unary operator replacement.
    Oru,
    /// Expression value replacement.
    Evr,
    /// Literal value replacement.
    Lvr,
    /// Statement deletion.
    Std,
}

impl MutationOperator {
    pub const ALL: [MutationOperator; 9] = [
        MutationOperator::Aor,
        MutationOperator::Lor,
        MutationOperator::Cor,
        MutationOperator::Ror,
        MutationOperator::Sor,
        MutationOperator::Oru,
        MutationOperator::Evr,
        MutationOperator::Lvr,
        MutationOperator::Std,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationOperator::Aor => "AOR",
            MutationOperator::Lor => "LOR",
            MutationOperator::Cor => "COR",
            MutationOperator::Ror => "ROR",
            MutationOperator::Sor => "SOR",
            MutationOperator::Oru => "ORU",
            MutationOperator::Evr => "EVR",
            MutationOperator::Lvr => "LVR",
            MutationOperator::Std => "STD",
        }
    }

    /// The trace-level effect used to simulate this operator.
    pub fn perturbation(self) -> Perturbation {
        match self {
            MutationOperator::Aor
            | MutationOperator::Lor
            | MutationOperator::Sor
            | MutationOperator::Evr => Perturbation::FlipOutput,
            MutationOperator::Oru | MutationOperator::Lvr => Perturbation::FlipInput,
            MutationOperator::Cor => Perturbation::SwapMethod,
            MutationOperator::Ror => Perturbation::DuplicateContext,
            MutationOperator::Std => Perturbation::DropContext,
        }
    }
}

impl std::str::FromStr for MutationOperator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MutationOperator::ALL
            .into_iter()
            .find(|op| op.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mutation operator `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    SwapMethod,
    FlipInput,
    FlipOutput,
    DropContext,
    DuplicateContext,
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: usize,
    pub max: usize,
}

impl IntRange {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }
}

impl fmt::Display for IntRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

impl std::str::FromStr for IntRange {
    type Err = String;

    /// Accepts `a..b` or a single number.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad range `{s}` (expected `min..max`)"))
        };
        match s.split_once("..") {
            Some((a, b)) => Ok(IntRange::new(parse(a)?, parse(b)?)),
            None => {
                let v = parse(s)?;
                Ok(IntRange::new(v, v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub project: String,
    pub n_versions: usize,
    pub suites_per_version: usize,
    pub tests_per_suite: IntRange,
    pub contexts_per_trace: IntRange,
    pub method_vocab_size: usize,
    pub fault_profile: FaultProfile,
    pub perturbation_ops: Vec<MutationOperator>,
    /// Recurring signatures per suite for history-like faults.
    pub signatures_per_suite: usize,
    /// Perturbation steps per signature.
    pub signature_steps: usize,
    pub seeded_faults_per_suite: IntRange,
    pub tests_per_seeded_fault: IntRange,
    /// Required distance of an anomaly-like failure from its suite centroid,
    /// in standard deviations of the passing tests' distances.
    pub anomaly_margin: f64,
    /// Fraction of seeded faults that fail no test.
    pub equivalent_mutant_rate: f64,
    /// Hashed-embedding dimension used to enforce `anomaly_margin`.
    pub dimension: usize,
    pub embedding_seed: u64,
    /// Positional features in that embedding.
    pub positional: bool,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            project: "synthetic".into(),
            n_versions: 25,
            suites_per_version: 12,
            tests_per_suite: IntRange::new(30, 50),
            contexts_per_trace: IntRange::new(9, 12),
            method_vocab_size: 80,
            fault_profile: FaultProfile::HistoryLike,
            perturbation_ops: MutationOperator::ALL.to_vec(),
            signatures_per_suite: 3,
            signature_steps: 3,
            seeded_faults_per_suite: IntRange::new(1, 3),
            tests_per_seeded_fault: IntRange::new(1, 3),
            anomaly_margin: 3.0,
            equivalent_mutant_rate: 0.0,
            dimension: crate::embedding::DEFAULT_DIMENSION,
            embedding_seed: 0,
            positional: false,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_versions < TEST_VERSIONS + 1 {
            return bad(format!(
                "n_versions must be >= {} (training plus {TEST_VERSIONS} test versions), got {}",
                TEST_VERSIONS + 1,
                self.n_versions
            ));
        }
        if self.suites_per_version == 0 {
            return bad("suites_per_version must be >= 1".into());
        }
        for (name, r, floor) in [
            ("tests_per_suite", self.tests_per_suite, 2),
            ("contexts_per_trace", self.contexts_per_trace, 1),
            ("seeded_faults_per_suite", self.seeded_faults_per_suite, 0),
            ("tests_per_seeded_fault", self.tests_per_seeded_fault, 1),
        ] {
            if r.min > r.max {
                return bad(format!("{name} range {r} is empty"));
            }
            if r.min < floor {
                return bad(format!("{name} must start at >= {floor}, got {r}"));
            }
        }
        if self.tests_per_seeded_fault.max > self.tests_per_suite.min {
            return bad(format!(
                "tests_per_seeded_fault {} exceeds the smallest suite ({})",
                self.tests_per_seeded_fault, self.tests_per_suite.min
            ));
        }
        if self.perturbation_ops.is_empty() {
            return bad("perturbation_ops must not be empty".into());
        }
        if self.signatures_per_suite == 0 {
            return bad("signatures_per_suite must be >= 1".into());
        }
        if self.signature_steps == 0 {
            return bad("signature_steps must be >= 1".into());
        }
        if !(self.anomaly_margin.is_finite() && self.anomaly_margin >= 0.0) {
            return bad(format!("anomaly_margin must be >= 0, got {}", self.anomaly_margin));
        }
        if !(0.0..=1.0).contains(&self.equivalent_mutant_rate) {
            return bad(format!(
                "equivalent_mutant_rate must lie in [0, 1], got {}",
                self.equivalent_mutant_rate
            ));
        }
        if self.dimension < 2 {
            return bad("dimension must be >= 2".into());
        }
        // Skeletons use distinct methods; swaps need methods outside the skeleton.
        let needed = self.contexts_per_trace.max + self.signatures_per_suite + 2;
        if self.method_vocab_size < needed {
            return Err(HarnessError::Infeasible(format!(
                "method_vocab_size {} is too small: skeletons of {} methods plus swap targets need >= {needed}",
                self.method_vocab_size, self.contexts_per_trace.max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Real,
    Seeded,
}

/// One planted fault and the tests it makes fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub fault_id: String,
    pub kind: FaultKind,
    /// Either `HISTORY_LIKE` or `ANOMALY_LIKE`.
    pub profile: FaultProfile,
    pub operators: Vec<MutationOperator>,
    pub version_id: String,
    pub suite_id: String,
    /// Index of the replayed signature for history-like faults.
    pub signature: Option<usize>,
    pub failing_tests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceKey {
    pub version_id: String,
    pub suite_id: String,
    pub test_id: String,
}

impl TraceKey {
    pub fn of(trace: &ExecutionTrace) -> Self {
        Self {
            version_id: trace.version_id.clone(),
            suite_id: trace.suite_id.clone(),
            test_id: trace.test_id.clone(),
        }
    }
}

/// Line and branch coverage of every test in one version.
#[derive(Debug, Clone, PartialEq)]
pub struct VersionCoverage {
    pub line: CoverageMatrix,
    pub branch: CoverageMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusVersion {
    pub version_id: String,
    /// Real-fault runs and their mutant companions, interleaved.
    pub suites: Vec<TestSuite>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub versions: Vec<CorpusVersion>,
    /// Planted profile of each base suite id.
    pub suite_profiles: BTreeMap<String, FaultProfile>,
    pub registry: Vec<FaultRecord>,
    /// Measured on the fault-free program, keyed by version id.
    pub coverage: BTreeMap<String, VersionCoverage>,
    /// Training-pool traces kept by [`balance_dataset`].
    pub balanced_pool: Option<Vec<TraceKey>>,
    pub split: Option<Split>,
}

impl Corpus {
    pub fn version_ids(&self) -> impl Iterator<Item = &str> {
        self.versions.iter().map(|v| v.version_id.as_str())
    }

    pub fn traces(&self) -> impl Iterator<Item = &ExecutionTrace> {
        self.versions
            .iter()
            .flat_map(|v| v.suites.iter().flat_map(|s| s.traces.iter()))
    }

    pub fn trace(&self, key: &TraceKey) -> Option<&ExecutionTrace> {
        self.versions
            .iter()
            .find(|v| v.version_id == key.version_id)?
            .suites
            .iter()
            .find(|s| s.suite_id == key.suite_id)?
            .get(&key.test_id)
    }

    pub fn fault(&self, fault_id: &str) -> Option<&FaultRecord> {
        self.registry.iter().find(|f| f.fault_id == fault_id)
    }

    /// Ids of the last [`TEST_VERSIONS`] versions.
    pub fn test_version_ids(&self) -> Vec<String> {
        let n = self.versions.len();
        self.versions[n.saturating_sub(TEST_VERSIONS)..]
            .iter()
            .map(|v| v.version_id.clone())
            .collect()
    }

    /// Balance the training pool and split it, in place.
    pub fn prepare(mut self) -> Result<Self, HarnessError> {
        self = balance_dataset(self)?;
        let split = split_versions(&self)?;
        self.split = Some(split);
        Ok(self)
    }
}

/// `S03.mut` and `S03` both map to `S03`.
pub fn base_suite_id(suite_id: &str) -> &str {
    suite_id.strip_suffix(MUTANT_SUFFIX).unwrap_or(suite_id)
}

pub fn is_mutant_suite(suite_id: &str) -> bool {
    suite_id.ends_with(MUTANT_SUFFIX)
}

pub fn version_id(index: usize) -> String {
    format!("v{:02}", index + 1)
}
