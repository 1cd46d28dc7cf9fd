//! Fixtures shared by the benchmarks.

use std::collections::BTreeSet;

use rand::Rng as _;
use tracerank_core::harness::IntRange;
use tracerank_core::seed::rng;
use tracerank_core::{
    synth_corpus, to_token_streams, CorpusConfig, CoverageMatrix, EmbeddingBackend, ExecutionTrace,
    Granularity, HashedBackend, PreprocessConfig, TestVector,
};

/// Traces of one synthetic suite with `tests` tests.
pub fn suite_traces(tests: usize, seed: u64) -> Vec<ExecutionTrace> {
    let config = CorpusConfig {
        n_versions: 6,
        suites_per_version: 1,
        tests_per_suite: IntRange::new(tests, tests),
        seed,
        ..CorpusConfig::default()
    };
    let corpus = synth_corpus(&config).expect("valid bench corpus");
    let first = &corpus.versions[0].suites[0];
    first.traces.clone()
}

/// Hashed vectors for `traces`, with default preprocessing.
pub fn embed_all(traces: &[ExecutionTrace], backend: &HashedBackend) -> Vec<TestVector> {
    let pre = PreprocessConfig::default();
    traces.iter().map(|t| backend.embed(&to_token_streams(t, &pre))).collect()
}

/// `tests` tests, each covering a pseudo-random tenth of `units` units.
pub fn coverage(tests: usize, units: usize) -> CoverageMatrix {
    let mut r = rng(7);
    let rows = (0..tests)
        .map(|t| {
            let covered: BTreeSet<String> = (0..units / 10).map(|_| format!("u{}", r.gen_range(0..units))).collect();
            (format!("t{t:03}"), covered)
        })
        .collect();
    CoverageMatrix::new("bench", Granularity::Line, rows)
}
