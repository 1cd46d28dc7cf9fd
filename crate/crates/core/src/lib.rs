//! Test-case prioritization over embedded execution traces.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`trace_model`]: execution traces and their JSONL encoding
//! - [`preprocess`]: value abstraction, oracle-call stripping, truncation, token streams
//! - [`embedding`]: fixed-length test vectors, pooling, centroid, cosine distance
//! - [`failure_model`]: log-linear `P(fail | vector)` classifier
//! - [`prioritize`]: classifier, diversification, combined, greedy-coverage and random orderings
//! - [`metrics`]: FFR, APFD, Wilcoxon signed-rank, median-of-runs
//! - [`harness`]: synthetic corpora with planted faults and end-to-end experiments
//!
//! Everything that draws random numbers takes an explicit seed; identical
//! inputs and seeds always produce identical outputs.

pub mod embedding;
pub mod failure_model;
pub mod harness;
pub mod metrics;
pub mod preprocess;
pub mod prioritize;
pub mod seed;
pub mod trace_model;

pub use embedding::{
    centroid, cosine_distance, export_vectors, hashed_context_embed, import_vectors,
    one_hot_encode, pool_concat, EmbeddingBackend, EmbeddingError, HashedBackend, OneHotBackend,
    TestVector, Vocabulary, DEFAULT_DIMENSION,
};
pub use failure_model::{
    predict_fail_probability, train_failure_model, FailureModel, Hyperparams, LabeledVector,
    ModelError,
};
pub use metrics::{
    apfd, ffr, median_of_runs, wilcoxon_signed_rank, FaultMatrix, MetricsError, StatResult,
};
pub use preprocess::{
    abstract_value, strip_oracle_calls, to_token_streams, truncate_contexts,
    AbstractionThresholds, PreprocessConfig, TokenStreams, NO_ARG,
};
pub use prioritize::{
    classifier_tp, combined_features, combined_tp, diversification_tp, greedy_coverage_tp,
    random_tp, train_selector, CombinedFeatures, CoverageMatrix, Granularity, PrioritizeError,
    Ranking, SelectorModel, Strategy,
};
pub use trace_model::{
    parse_trace_file, serialize_trace, Context, ExecutionTrace, Label, ParseMode, TestSuite,
    TraceError,
};
pub use harness::{
    balance_dataset, run_experiment, split_versions, synth_corpus, train_models, Corpus,
    CorpusConfig, ExperimentConfig, ExperimentReport, FaultProfile, HarnessError, IntRange,
    MutationOperator, TrainedModels,
};
