//! End-to-end prioritization experiments on a prepared corpus.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    is_mutant_suite, Corpus, CorpusConfig, FaultKind, FaultProfile, HarnessError,
    Split, TraceKey, VersionCoverage, MIN_FFR_SUITE, MUTANT_SUFFIX,
};
use crate::embedding::{EmbeddingBackend, HashedBackend, TestVector, DEFAULT_DIMENSION};
use crate::failure_model::{train_failure_model, FailureModel, Hyperparams, LabeledVector};
use crate::metrics::{apfd, ffr, median_of_runs, wilcoxon_signed_rank, FaultMatrix, StatResult};
use crate::preprocess::{to_token_streams, PreprocessConfig};
use crate::prioritize::{
    classifier_tp, combined_features, combined_tp, diversification_tp, greedy_coverage_tp,
    random_tp, selector_hyperparams, train_selector, CombinedFeatures, PrioritizeError, Ranking,
    SelectorModel, Strategy, DEFAULT_TOP_K,
};
use crate::seed::derive_seed;
use crate::trace_model::TestSuite;

pub const METRIC_FFR: &str = "ffr";
pub const METRIC_APFD: &str = "apfd";
pub const METRIC_FFR_EXCLUDED: &str = "ffr_excluded";
pub const EMPTY_REPORT_MARKER: &str = "# empty report: no eligible suites";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategies: Vec<Strategy>,
    /// Runs per seeded strategy; the median is reported.
    pub repeats: usize,
    pub seed: u64,
    pub top_k: usize,
    pub dimension: usize,
    pub embedding_seed: u64,
    pub positional: bool,
    pub hyperparams: Hyperparams,
    pub preprocess: PreprocessConfig,
    /// Version folds used to build out-of-sample selector training data.
    pub selector_folds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            repeats: 30,
            seed: 0,
            top_k: DEFAULT_TOP_K,
            dimension: DEFAULT_DIMENSION,
            embedding_seed: 0,
            positional: false,
            hyperparams: experiment_hyperparams(),
            preprocess: PreprocessConfig::default(),
            selector_folds: 4,
        }
    }
}

/// Unit-norm hashed vectors have small components, so the library's
/// default step and epoch count underfit; this keeps the same objective.
fn experiment_hyperparams() -> Hyperparams {
    Hyperparams {
        learning_rate: 2.0,
        epochs: 5000,
        ..Hyperparams::default()
    }
}

impl ExperimentConfig {
    /// Defaults with the corpus's embedding settings and seed.
    pub fn for_corpus(config: &CorpusConfig) -> Self {
        Self {
            seed: config.seed,
            dimension: config.dimension,
            embedding_seed: config.embedding_seed,
            positional: config.positional,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Experiment(m.to_string()));
        if self.strategies.is_empty() {
            return bad("at least one strategy is required");
        }
        if self.repeats == 0 {
            return bad("repeats must be >= 1");
        }
        if self.top_k == 0 {
            return bad("top_k must be >= 1");
        }
        if self.dimension == 0 {
            return bad("dimension must be >= 1");
        }
        if self.selector_folds < 2 {
            return bad("selector_folds must be >= 2");
        }
        self.preprocess
            .validate()
            .map_err(|e| HarnessError::Experiment(e.to_string()))
    }

    fn backend(&self) -> HashedBackend {
        HashedBackend::new(self.dimension, self.embedding_seed).with_positional(self.positional)
    }
}

/// One line of the metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub project: String,
    pub version: String,
    pub suite_id: String,
    pub strategy: Strategy,
    pub metric: String,
    pub value: f64,
    pub runs: usize,
}

/// Paired comparison of two strategies on one metric. `effect_size` is
/// positive when `a` tends to score higher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub metric: String,
    pub a: Strategy,
    pub b: Strategy,
    pub median_a: f64,
    pub median_b: f64,
    pub stat: StatResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorSummary {
    pub weights: [f64; 2],
    pub bias: f64,
    pub top_k: usize,
    /// Out-of-sample suites the selector was trained on.
    pub training_examples: usize,
    /// Set when the training data held a single class.
    pub fallback: Option<Strategy>,
    /// Test suites whose planted profile names an expected winner.
    pub evaluated: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub pairwise: Vec<PairwiseRow>,
    pub train_size: usize,
    pub validation_size: usize,
    pub validation_accuracy: Option<f64>,
    pub selector: Option<SelectorSummary>,
}

impl ExperimentReport {
    /// Values of `metric` for `strategy`, in row order.
    pub fn values(&self, metric: &str, strategy: Strategy) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && r.strategy == strategy)
            .map(|r| r.value)
            .collect()
    }

    pub fn median(&self, metric: &str, strategy: Strategy) -> Option<f64> {
        median_of_runs(&self.values(metric, strategy)).ok()
    }

    pub fn is_empty(&self) -> bool {
        !self
            .rows
            .iter()
            .any(|r| r.metric == METRIC_FFR || r.metric == METRIC_APFD)
    }

    /// `project,version,suite_id,strategy,metric,value,runs`. An experiment
    /// with no eligible suite gets a marker line after the header.
    pub fn write_report_csv<W: Write>(&self, writer: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["project", "version", "suite_id", "strategy", "metric", "value", "runs"])
            .map_err(PrioritizeError::from)?;
        for r in &self.rows {
            w.write_record([
                r.project.as_str(),
                r.version.as_str(),
                r.suite_id.as_str(),
                r.strategy.as_str(),
                r.metric.as_str(),
                &format!("{:.6}", r.value),
                &r.runs.to_string(),
            ])
            .map_err(PrioritizeError::from)?;
        }
        w.flush()?;
        let mut inner = w.into_inner().map_err(|e| e.into_error())?;
        if self.is_empty() {
            writeln!(inner, "{EMPTY_REPORT_MARKER}")?;
        }
        Ok(())
    }

    pub fn write_pairwise_csv<W: Write>(&self, writer: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "metric",
            "strategy_a",
            "strategy_b",
            "median_a",
            "median_b",
            "n_pairs",
            "n_nonzero",
            "w_plus",
            "w_minus",
            "p_value",
            "effect_size",
            "exact",
        ])
        .map_err(PrioritizeError::from)?;
        for p in &self.pairwise {
            let s = &p.stat;
            w.write_record([
                p.metric.clone(),
                p.a.to_string(),
                p.b.to_string(),
                format!("{:.6}", p.median_a),
                format!("{:.6}", p.median_b),
                s.n_pairs.to_string(),
                s.n_nonzero.to_string(),
                format!("{:.1}", s.w_plus),
                format!("{:.1}", s.w_minus),
                format!("{:.6e}", s.p_value),
                format!("{:.6}", s.effect_size),
                s.exact.to_string(),
            ])
            .map_err(PrioritizeError::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which ordering should win on a suite whose real fault has `profile`.
pub fn expected_winner(profile: FaultProfile) -> Option<Strategy> {
    match profile {
        FaultProfile::HistoryLike => Some(Strategy::Classifier),
        FaultProfile::AnomalyLike => Some(Strategy::Diversification),
        FaultProfile::Mixed => None,
    }
}

/// Vectors for every trace of a suite, in suite order.
pub fn embed_suite(
    suite: &TestSuite,
    backend: &dyn EmbeddingBackend,
    preprocess: &PreprocessConfig,
) -> Vec<TestVector> {
    suite
        .traces
        .iter()
        .map(|t| backend.embed(&to_token_streams(t, preprocess)))
        .collect()
}

fn with_probabilities(
    vectors: &[TestVector],
    model: &FailureModel,
) -> Result<Vec<TestVector>, HarnessError> {
    vectors
        .iter()
        .map(|v| Ok(v.clone().with_p_fail(model.predict(&v.values)?)))
        .collect()
}

fn failing_tests(suite: &TestSuite) -> Vec<&str> {
    suite
        .traces
        .iter()
        .filter(|t| t.label.is_fail())
        .map(|t| t.test_id.as_str())
        .collect()
}

fn fault_matrix(suite: &TestSuite) -> FaultMatrix {
    FaultMatrix::from_pairs(
        suite
            .traces
            .iter()
            .filter(|t| t.label.is_fail())
            .filter_map(|t| t.fault_id.clone().map(|f| (f, t.test_id.clone()))),
    )
}

/// APFD of classifier and diversification on a seeded-fault run.
fn companion_apfd(suite: &TestSuite, vectors: &[TestVector]) -> Result<Option<(f64, f64)>, HarnessError> {
    let matrix = fault_matrix(suite);
    if matrix.is_empty() {
        return Ok(None);
    }
    let c = apfd(&classifier_tp(&suite.suite_id, vectors)?, &matrix)?;
    let d = apfd(&diversification_tp(&suite.suite_id, vectors)?, &matrix)?;
    Ok(Some((c, d)))
}

fn labeled(
    keys: &[TraceKey],
    vectors: &HashMap<TraceKey, TestVector>,
    corpus: &Corpus,
) -> Result<Vec<LabeledVector>, HarnessError> {
    keys.iter()
        .map(|k| {
            let trace = corpus.trace(k).ok_or_else(|| HarnessError::Corrupt {
                path: "corpus.json".into(),
                message: format!("split names unknown trace {}/{}/{}", k.version_id, k.suite_id, k.test_id),
            })?;
            Ok(LabeledVector::new(vectors[k].clone(), trace.label))
        })
        .collect()
}

struct Context<'a> {
    corpus: &'a Corpus,
    config: &'a ExperimentConfig,
    selector: Option<&'a SelectorModel>,
}

impl Context<'_> {
    fn coverage(&self, version: &str) -> Result<&VersionCoverage, HarnessError> {
        self.corpus.coverage.get(version).ok_or_else(|| HarnessError::Corrupt {
            path: format!("coverage/{version}.csv"),
            message: "missing coverage".into(),
        })
    }

    fn rank(
        &self,
        strategy: Strategy,
        suite: &TestSuite,
        vectors: &[TestVector],
        repeat: u64,
    ) -> Result<Ranking, HarnessError> {
        let seed = derive_seed(
            self.config.seed,
            &format!("{}/{}", suite.version_id, suite.suite_id),
            repeat,
        );
        let ids: Vec<&str> = suite.test_ids().collect();
        let ranking = match strategy {
            Strategy::Classifier => classifier_tp(&suite.suite_id, vectors)?,
            Strategy::Diversification => diversification_tp(&suite.suite_id, vectors)?,
            Strategy::Combined => {
                let selector = self.selector.expect("selector is trained when combined is requested");
                combined_tp(&suite.suite_id, vectors, selector)?
            }
            Strategy::GreedyLine | Strategy::GreedyBranch => {
                let cov = self.coverage(&suite.version_id)?;
                let matrix = if strategy == Strategy::GreedyLine { &cov.line } else { &cov.branch };
                let mut m = matrix.restrict_to(ids.iter().copied());
                m.suite_id = suite.suite_id.clone();
                greedy_coverage_tp(&m, seed)?
            }
            Strategy::Random => random_tp(&suite.suite_id, &ids, seed)?,
        };
        Ok(ranking)
    }

    /// Median metric value over the strategy's runs.
    fn measure(
        &self,
        strategy: Strategy,
        suite: &TestSuite,
        vectors: &[TestVector],
        metric: impl Fn(&Ranking) -> Result<f64, HarnessError>,
    ) -> Result<(f64, usize), HarnessError> {
        let runs = if strategy.is_seeded() { self.config.repeats } else { 1 };
        let values = (0..runs as u64)
            .map(|r| metric(&self.rank(strategy, suite, vectors, r)?))
            .collect::<Result<Vec<f64>, _>>()?;
        Ok((median_of_runs(&values)?, runs))
    }

    fn row(&self, suite: &TestSuite, strategy: Strategy, metric: &str, value: f64, runs: usize) -> ReportRow {
        ReportRow {
            project: self.corpus.config.project.clone(),
            version: suite.version_id.clone(),
            suite_id: suite.suite_id.clone(),
            strategy,
            metric: metric.to_string(),
            value,
            runs,
        }
    }

    fn evaluate_suite(&self, suite: &TestSuite, vectors: &[TestVector]) -> Result<Vec<ReportRow>, HarnessError> {
        let mut rows = Vec::new();
        if is_mutant_suite(&suite.suite_id) {
            let matrix = fault_matrix(suite);
            if matrix.is_empty() {
                return Ok(rows);
            }
            for &s in &self.config.strategies {
                let (v, runs) = self.measure(s, suite, vectors, |r| Ok(apfd(r, &matrix)?))?;
                rows.push(self.row(suite, s, METRIC_APFD, v, runs));
            }
        } else {
            let failing = failing_tests(suite);
            if failing.is_empty() {
                return Ok(rows);
            }
            if suite.len() <= MIN_FFR_SUITE {
                for &s in &self.config.strategies {
                    rows.push(self.row(suite, s, METRIC_FFR_EXCLUDED, suite.len() as f64, 0));
                }
                return Ok(rows);
            }
            for &s in &self.config.strategies {
                let (v, runs) = self.measure(s, suite, vectors, |r| Ok(ffr(r, &failing)?))?;
                rows.push(self.row(suite, s, METRIC_FFR, v, runs));
            }
        }
        Ok(rows)
    }
}

fn real_profile(corpus: &Corpus, suite: &TestSuite) -> Option<FaultProfile> {
    corpus
        .registry
        .iter()
        .find(|f| f.kind == FaultKind::Real && f.version_id == suite.version_id && f.suite_id == suite.suite_id)
        .map(|f| f.profile)
}

/// Out-of-sample `(features, better strategy)` pairs: each fold of
/// training versions is scored by a model fit on the other folds.
fn selector_meta(
    corpus: &Corpus,
    config: &ExperimentConfig,
    train: &[TraceKey],
    vectors: &HashMap<TraceKey, TestVector>,
) -> Result<Vec<(CombinedFeatures, Strategy)>, HarnessError> {
    let test_versions = corpus.test_version_ids();
    let train_versions: Vec<&str> = corpus
        .version_ids()
        .filter(|v| !test_versions.iter().any(|t| t == v))
        .collect();
    let fold_of: HashMap<&str, usize> = train_versions
        .iter()
        .enumerate()
        .map(|(i, v)| (*v, i % config.selector_folds))
        .collect();
    let folds: Vec<usize> = (0..config.selector_folds.min(train_versions.len())).collect();
    let per_fold = folds
        .par_iter()
        .map(|&f| -> Result<Vec<(CombinedFeatures, Strategy)>, HarnessError> {
            let keys: Vec<TraceKey> = train
                .iter()
                .filter(|k| fold_of.get(k.version_id.as_str()) != Some(&f))
                .cloned()
                .collect();
            let data = labeled(&keys, vectors, corpus)?;
            let seed = derive_seed(config.seed, "selector-fold", f as u64);
            let model = match train_failure_model(&data, &config.hyperparams, seed) {
                Ok(m) => m,
                // A fold without both labels contributes nothing.
                Err(_) => return Ok(Vec::new()),
            };
            let mut out = Vec::new();
            for version in corpus.versions.iter().filter(|v| fold_of.get(v.version_id.as_str()) == Some(&f)) {
                for suite in version.suites.iter().filter(|s| !is_mutant_suite(&s.suite_id)) {
                    let failing = failing_tests(suite);
                    if suite.len() <= MIN_FFR_SUITE || failing.is_empty() {
                        continue;
                    }
                    let base: Vec<TestVector> = suite.traces.iter().map(|t| vectors[&TraceKey::of(t)].clone()).collect();
                    let vs = with_probabilities(&base, &model)?;
                    let c = ffr(&classifier_tp(&suite.suite_id, &vs)?, &failing)?;
                    let d = ffr(&diversification_tp(&suite.suite_id, &vs)?, &failing)?;
                    let label = if c != d {
                        if c < d { Strategy::Classifier } else { Strategy::Diversification }
                    } else {
                        // Break ties on the version's seeded faults; failing
                        // that, the model-free strategy is the better choice.
                        let companion = format!("{}{MUTANT_SUFFIX}", suite.suite_id);
                        let tie_break = match version.suites.iter().find(|s| s.suite_id == companion) {
                            Some(m) => {
                                let base: Vec<TestVector> =
                                    m.traces.iter().map(|t| vectors[&TraceKey::of(t)].clone()).collect();
                                companion_apfd(m, &with_probabilities(&base, &model)?)?
                            }
                            None => None,
                        };
                        match tie_break {
                            Some((ca, da)) if ca > da => Strategy::Classifier,
                            _ => Strategy::Diversification,
                        }
                    };
                    out.push((combined_features(&vs, config.top_k)?, label));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_fold.into_iter().flatten().collect())
}

/// Models fit on a corpus's training split.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub failure: FailureModel,
    /// Present when the combined strategy was requested.
    pub selector: Option<SelectorModel>,
    pub selector_summary: Option<SelectorSummary>,
    pub train_size: usize,
    pub validation_size: usize,
    pub validation_accuracy: Option<f64>,
}

type Embedded<'c> = (Vec<&'c TestSuite>, Vec<Vec<TestVector>>, HashMap<TraceKey, TestVector>);

fn embed_corpus<'c>(corpus: &'c Corpus, config: &ExperimentConfig) -> Embedded<'c> {
    let backend = config.backend();
    let suites: Vec<&TestSuite> = corpus.versions.iter().flat_map(|v| v.suites.iter()).collect();
    let embedded: Vec<Vec<TestVector>> = suites
        .par_iter()
        .map(|s| embed_suite(s, &backend, &config.preprocess))
        .collect();
    let vectors = suites
        .iter()
        .zip(&embedded)
        .flat_map(|(s, vs)| s.traces.iter().zip(vs).map(|(t, v)| (TraceKey::of(t), v.clone())))
        .collect();
    (suites, embedded, vectors)
}

fn fit(
    corpus: &Corpus,
    split: &Split,
    config: &ExperimentConfig,
    vectors: &HashMap<TraceKey, TestVector>,
) -> Result<TrainedModels, HarnessError> {
    let train = labeled(&split.train, vectors, corpus)?;
    let model = train_failure_model(&train, &config.hyperparams, derive_seed(config.seed, "failure-model", 0))?;
    let validation = labeled(&split.validation, vectors, corpus)?;
    let validation_accuracy = (!validation.is_empty()).then(|| {
        let hits = validation
            .iter()
            .filter(|lv| (model.predict(&lv.vector.values).unwrap_or(0.5) >= 0.5) == lv.label.is_fail())
            .count();
        hits as f64 / validation.len() as f64
    });

    let mut selector_summary = None;
    let selector = if config.strategies.contains(&Strategy::Combined) {
        let meta = selector_meta(corpus, config, &split.train, vectors)?;
        let seed = derive_seed(config.seed, "selector", 0);
        // Too few training versions or failing suites leave no out-of-fold
        // examples; the selector then always picks the classifier.
        let (selector, fallback) = if meta.is_empty() {
            (SelectorModel::fixed(Strategy::Classifier, config.top_k), Some(Strategy::Classifier))
        } else {
            match train_selector(&meta, config.top_k, &selector_hyperparams(), seed) {
                Ok(s) => (s, None),
                Err(PrioritizeError::DegenerateLabels(only)) => (SelectorModel::fixed(only, config.top_k), Some(only)),
                Err(e) => return Err(e.into()),
            }
        };
        selector_summary = Some(SelectorSummary {
            weights: [selector.model.weights[0], selector.model.weights[1]],
            bias: selector.model.bias,
            top_k: selector.top_k,
            training_examples: meta.len(),
            fallback,
            evaluated: 0,
            correct: 0,
            accuracy: None,
        });
        Some(selector)
    } else {
        None
    };
    Ok(TrainedModels {
        failure: model,
        selector,
        selector_summary,
        train_size: train.len(),
        validation_size: validation.len(),
        validation_accuracy,
    })
}

fn prepared(corpus: &Corpus) -> Result<std::borrow::Cow<'_, Corpus>, HarnessError> {
    Ok(if corpus.split.is_some() {
        std::borrow::Cow::Borrowed(corpus)
    } else {
        std::borrow::Cow::Owned(corpus.clone().prepare()?)
    })
}

/// Fit the failure model (and the selector, if the combined strategy is
/// requested) exactly as [`run_experiment`] does.
pub fn train_models(corpus: &Corpus, config: &ExperimentConfig) -> Result<TrainedModels, HarnessError> {
    config.validate()?;
    let corpus = prepared(corpus)?;
    let split = corpus.split.as_ref().expect("prepared corpus has a split");
    let (_, _, vectors) = embed_corpus(&corpus, config);
    fit(&corpus, split, config, &vectors)
}

/// Train on the corpus's train split, rank every test-version suite with
/// each strategy, and compare strategies pairwise.
///
/// The corpus is balanced and split first if it has not been.
pub fn run_experiment(corpus: &Corpus, config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let corpus = prepared(corpus)?;
    let corpus = corpus.as_ref();
    let split = corpus.split.as_ref().expect("prepared corpus has a split");
    let (suites, embedded, vectors) = embed_corpus(corpus, config);
    let TrainedModels {
        failure: model,
        selector,
        mut selector_summary,
        train_size,
        validation_size,
        validation_accuracy,
    } = fit(corpus, split, config, &vectors)?;

    let ctx = Context {
        corpus,
        config,
        selector: selector.as_ref(),
    };
    let test_suites: Vec<(&TestSuite, &Vec<TestVector>)> = suites
        .iter()
        .zip(&embedded)
        .filter(|(s, _)| split.test_versions.contains(&s.version_id))
        .map(|(s, v)| (*s, v))
        .collect();
    let per_suite = test_suites
        .par_iter()
        .map(|(suite, base)| -> Result<(Vec<ReportRow>, Option<bool>), HarnessError> {
            let vs = with_probabilities(base, &model)?;
            let rows = ctx.evaluate_suite(suite, &vs)?;
            let mut hit = None;
            if let (Some(sel), false) = (ctx.selector, is_mutant_suite(&suite.suite_id)) {
                if suite.len() > MIN_FFR_SUITE {
                    if let Some(want) = real_profile(corpus, suite).and_then(expected_winner) {
                        let got = sel.choose(&combined_features(&vs, sel.top_k)?);
                        hit = Some(got == want);
                    }
                }
            }
            Ok((rows, hit))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (r, hit) in per_suite {
        rows.extend(r);
        if let (Some(summary), Some(h)) = (selector_summary.as_mut(), hit) {
            summary.evaluated += 1;
            summary.correct += usize::from(h);
        }
    }
    if let Some(s) = selector_summary.as_mut() {
        s.accuracy = (s.evaluated > 0).then(|| s.correct as f64 / s.evaluated as f64);
    }

    let mut report = ExperimentReport {
        config: config.clone(),
        rows,
        pairwise: Vec::new(),
        train_size,
        validation_size,
        validation_accuracy,
        selector: selector_summary,
    };
    report.pairwise = pairwise(&report, &config.strategies)?;
    Ok(report)
}

fn pairwise(report: &ExperimentReport, strategies: &[Strategy]) -> Result<Vec<PairwiseRow>, HarnessError> {
    let mut out = Vec::new();
    for metric in [METRIC_FFR, METRIC_APFD] {
        let mut by: BTreeMap<Strategy, BTreeMap<(&str, &str), f64>> = BTreeMap::new();
        for r in report.rows.iter().filter(|r| r.metric == metric) {
            by.entry(r.strategy).or_default().insert((&r.version, &r.suite_id), r.value);
        }
        for (i, &a) in strategies.iter().enumerate() {
            for &b in &strategies[i + 1..] {
                let (Some(xa), Some(xb)) = (by.get(&a), by.get(&b)) else { continue };
                let (x, y): (Vec<f64>, Vec<f64>) = xa
                    .iter()
                    .filter_map(|(k, va)| xb.get(k).map(|vb| (*va, *vb)))
                    .unzip();
                if x.is_empty() {
                    continue;
                }
                out.push(PairwiseRow {
                    metric: metric.to_string(),
                    a,
                    b,
                    median_a: median_of_runs(&x)?,
                    median_b: median_of_runs(&y)?,
                    stat: wilcoxon_signed_rank(&x, &y)?,
                });
            }
        }
    }
    Ok(out)
}
