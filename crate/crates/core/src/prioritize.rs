//! Test-suite orderings.
//!
//! Vector strategies break ties by ascending `test_id` and are fully
//! deterministic. Coverage and random strategies break ties with a seeded
//! RNG. Every produced [`Ranking`] is checked to be a permutation of the
//! suite before it is returned.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{centroid, cosine_distance, EmbeddingError, TestVector};
use crate::failure_model::{
    train_failure_model, FailureModel, Hyperparams, LabeledVector, ModelError,
};
use crate::seed::rng;
use crate::trace_model::Label;

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error)]
pub enum PrioritizeError {
    #[error("empty suite")]
    EmptySuite,
    #[error("test `{0}` has no p_fail")]
    MissingPFail(String),
    #[error("top_k must be >= 1")]
    InvalidTopK,
    #[error("selector meta data contains a single class ({0}); both are required")]
    DegenerateLabels(Strategy),
    #[error("selector labels must be classifier or diversification, got {0}")]
    InvalidSelectorLabel(Strategy),
    #[error("ranking for suite `{suite_id}` is not a permutation of its tests")]
    NotAPermutation { suite_id: String },
    #[error("coverage line {line}: {message}")]
    Coverage { line: usize, message: String },
    #[error("ranking file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Classifier,
    Diversification,
    Combined,
    GreedyLine,
    GreedyBranch,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Classifier,
        Strategy::Diversification,
        Strategy::Combined,
        Strategy::GreedyLine,
        Strategy::GreedyBranch,
        Strategy::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Classifier => "classifier",
            Strategy::Diversification => "diversification",
            Strategy::Combined => "combined",
            Strategy::GreedyLine => "greedy_line",
            Strategy::GreedyBranch => "greedy_branch",
            Strategy::Random => "random",
        }
    }

    /// Whether the ordering depends on a seed.
    pub fn is_seeded(self) -> bool {
        matches!(
            self,
            Strategy::GreedyLine | Strategy::GreedyBranch | Strategy::Random
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown strategy `{s}` (expected one of: {})",
                    Strategy::ALL.map(Strategy::as_str).join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub suite_id: String,
    pub strategy: Strategy,
    #[serde(rename = "order")]
    pub ordered_test_ids: Vec<String>,
    /// Sort key per position, when the strategy has one.
    pub scores: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.ordered_test_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_test_ids.is_empty()
    }

    /// 1-based position of `test_id`.
    pub fn position(&self, test_id: &str) -> Option<usize> {
        self.ordered_test_ids
            .iter()
            .position(|t| t == test_id)
            .map(|p| p + 1)
    }

    /// Check that the order is exactly a permutation of `expected`.
    pub fn ensure_permutation<'a>(
        &self,
        expected: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), PrioritizeError> {
        let want: Vec<&str> = expected.into_iter().collect();
        let got: BTreeSet<&str> = self.ordered_test_ids.iter().map(String::as_str).collect();
        let want_set: BTreeSet<&str> = want.iter().copied().collect();
        if got.len() != self.ordered_test_ids.len()
            || want_set.len() != want.len()
            || got != want_set
        {
            return Err(PrioritizeError::NotAPermutation {
                suite_id: self.suite_id.clone(),
            });
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("ranking serialization is infallible")
    }
}

pub fn write_rankings<'a, W: Write>(
    mut writer: W,
    rankings: impl IntoIterator<Item = &'a Ranking>,
) -> std::io::Result<()> {
    for r in rankings {
        writer.write_all(r.to_json_line().as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_rankings<R: BufRead>(reader: R) -> Result<Vec<Ranking>, PrioritizeError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Ranking = serde_json::from_str(&line).map_err(|e| PrioritizeError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        let ids: Vec<&str> = r.ordered_test_ids.iter().map(String::as_str).collect();
        r.ensure_permutation(ids.iter().copied())?;
        out.push(r);
    }
    Ok(out)
}

/// Indices of `keys` sorted by descending key, ties by ascending id.
fn descending_order(keys: &[f64], ids: &[&str]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids[a].cmp(ids[b]))
    });
    idx
}

fn ranking_from_keys(
    suite_id: &str,
    strategy: Strategy,
    vectors: &[TestVector],
    keys: &[f64],
) -> Result<Ranking, PrioritizeError> {
    let ids: Vec<&str> = vectors.iter().map(|v| v.test_id.as_str()).collect();
    let order = descending_order(keys, &ids);
    let ranking = Ranking {
        suite_id: suite_id.to_string(),
        strategy,
        ordered_test_ids: order.iter().map(|&i| ids[i].to_string()).collect(),
        scores: Some(order.iter().map(|&i| keys[i]).collect()),
        seed: None,
    };
    ranking.ensure_permutation(ids)?;
    Ok(ranking)
}

fn p_fails(vectors: &[TestVector]) -> Result<Vec<f64>, PrioritizeError> {
    vectors
        .iter()
        .map(|v| {
            v.p_fail
                .ok_or_else(|| PrioritizeError::MissingPFail(v.test_id.clone()))
        })
        .collect()
}

/// Rank by descending failure probability.
pub fn classifier_tp(suite_id: &str, vectors: &[TestVector]) -> Result<Ranking, PrioritizeError> {
    if vectors.is_empty() {
        return Err(PrioritizeError::EmptySuite);
    }
    let keys = p_fails(vectors)?;
    ranking_from_keys(suite_id, Strategy::Classifier, vectors, &keys)
}

/// Cosine distance of every vector to the suite centroid.
pub fn centroid_distances(vectors: &[TestVector]) -> Result<Vec<f64>, PrioritizeError> {
    if vectors.is_empty() {
        return Err(PrioritizeError::EmptySuite);
    }
    let c = centroid(vectors)?;
    vectors
        .iter()
        .map(|v| cosine_distance(&v.values, &c).map_err(Into::into))
        .collect()
}

/// Rank by descending cosine distance to the suite centroid.
pub fn diversification_tp(
    suite_id: &str,
    vectors: &[TestVector],
) -> Result<Ranking, PrioritizeError> {
    let keys = centroid_distances(vectors)?;
    ranking_from_keys(suite_id, Strategy::Diversification, vectors, &keys)
}

/// Per-suite inputs to the combined-strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedFeatures {
    /// Mean of the `top_k` highest failure probabilities.
    pub f1: f64,
    /// Mean of the `top_k` largest centroid distances over the mean of all.
    pub f2: f64,
}

impl CombinedFeatures {
    pub fn as_array(&self) -> [f64; 2] {
        [self.f1, self.f2]
    }
}

fn mean_top_k(values: &[f64], k: usize) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let take = k.min(sorted.len());
    sorted[..take].iter().sum::<f64>() / take as f64
}

pub fn features_from_parts(p_fail: &[f64], distances: &[f64], top_k: usize) -> CombinedFeatures {
    let f1 = mean_top_k(p_fail, top_k);
    let mean_all = distances.iter().sum::<f64>() / distances.len() as f64;
    let f2 = if mean_all > 0.0 {
        mean_top_k(distances, top_k) / mean_all
    } else {
        0.0
    };
    CombinedFeatures { f1, f2 }
}

pub fn combined_features(
    vectors: &[TestVector],
    top_k: usize,
) -> Result<CombinedFeatures, PrioritizeError> {
    if top_k == 0 {
        return Err(PrioritizeError::InvalidTopK);
    }
    if vectors.is_empty() {
        return Err(PrioritizeError::EmptySuite);
    }
    let p = p_fails(vectors)?;
    let d = centroid_distances(vectors)?;
    Ok(features_from_parts(&p, &d, top_k))
}

/// Chooses between the classifier and diversification orderings per suite.
/// The positive class is [`Strategy::Classifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorModel {
    pub model: FailureModel,
    pub top_k: usize,
}

#[derive(Serialize, Deserialize)]
struct SelectorFile {
    top_k: usize,
    weights: [f64; 2],
    bias: f64,
}

impl SelectorModel {
    /// A selector that always picks `choice`.
    pub fn fixed(choice: Strategy, top_k: usize) -> Self {
        let bias = if choice == Strategy::Classifier { 50.0 } else { -50.0 };
        Self {
            model: FailureModel::from_parameters(vec![0.0, 0.0], bias),
            top_k,
        }
    }

    /// Probability that the classifier ordering is the better one.
    pub fn classifier_probability(&self, f: &CombinedFeatures) -> f64 {
        self.model
            .predict(&f.as_array())
            .expect("selector model is two-dimensional")
    }

    pub fn choose(&self, f: &CombinedFeatures) -> Strategy {
        if self.classifier_probability(f) >= 0.5 {
            Strategy::Classifier
        } else {
            Strategy::Diversification
        }
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), PrioritizeError> {
        let file = SelectorFile {
            top_k: self.top_k,
            weights: [self.model.weights[0], self.model.weights[1]],
            bias: self.model.bias,
        };
        serde_json::to_writer(writer, &file).map_err(|e| ModelError::Format(e.to_string()))?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self, PrioritizeError> {
        let file: SelectorFile =
            serde_json::from_reader(reader).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.top_k == 0 {
            return Err(PrioritizeError::InvalidTopK);
        }
        Ok(Self {
            model: FailureModel::from_parameters(file.weights.to_vec(), file.bias),
            top_k: file.top_k,
        })
    }
}

/// Hyperparameters used by [`train_selector`] when none are given.
pub fn selector_hyperparams() -> Hyperparams {
    Hyperparams {
        learning_rate: 0.5,
        l2_lambda: 1e-3,
        epochs: 2000,
        init_noise: 1e-6,
    }
}

/// Fit the two-feature selector.
///
/// Features are standardized for training and the scaling is folded back
/// into the weights, so the stored model applies to raw features.
pub fn train_selector(
    meta: &[(CombinedFeatures, Strategy)],
    top_k: usize,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<SelectorModel, PrioritizeError> {
    if top_k == 0 {
        return Err(PrioritizeError::InvalidTopK);
    }
    for (_, s) in meta {
        if !matches!(s, Strategy::Classifier | Strategy::Diversification) {
            return Err(PrioritizeError::InvalidSelectorLabel(*s));
        }
    }
    if let Some((_, first)) = meta.first() {
        if meta.iter().all(|(_, s)| s == first) {
            return Err(PrioritizeError::DegenerateLabels(*first));
        }
    }
    let n = meta.len() as f64;
    let mut mean = [0.0; 2];
    let mut sd = [0.0; 2];
    for (f, _) in meta {
        for (m, x) in mean.iter_mut().zip(f.as_array()) {
            *m += x / n;
        }
    }
    for (f, _) in meta {
        for ((s, m), x) in sd.iter_mut().zip(&mean).zip(f.as_array()) {
            *s += (x - m) * (x - m) / n;
        }
    }
    let sd = sd.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    let data: Vec<LabeledVector> = meta
        .iter()
        .map(|(f, s)| {
            let z: Vec<f64> = f
                .as_array()
                .iter()
                .zip(mean.iter().zip(&sd))
                .map(|(x, (m, s))| (x - m) / s)
                .collect();
            let label = if *s == Strategy::Classifier {
                Label::Fail
            } else {
                Label::Pass
            };
            LabeledVector::new(TestVector::new("meta", z, None).expect("finite features"), label)
        })
        .collect();
    let std_model = train_failure_model(&data, hyper, seed)?;
    let weights: Vec<f64> = std_model
        .weights
        .iter()
        .zip(&sd)
        .map(|(w, s)| w / s)
        .collect();
    let bias = std_model.bias
        - std_model
            .weights
            .iter()
            .zip(mean.iter().zip(&sd))
            .map(|(w, (m, s))| w * m / s)
            .sum::<f64>();
    let mut model = std_model;
    model.weights = weights;
    model.bias = bias;
    Ok(SelectorModel { model, top_k })
}

/// Pick the classifier or diversification ordering for this suite.
pub fn combined_tp(
    suite_id: &str,
    vectors: &[TestVector],
    selector: &SelectorModel,
) -> Result<Ranking, PrioritizeError> {
    let features = combined_features(vectors, selector.top_k)?;
    let mut ranking = match selector.choose(&features) {
        Strategy::Classifier => classifier_tp(suite_id, vectors)?,
        _ => diversification_tp(suite_id, vectors)?,
    };
    ranking.strategy = Strategy::Combined;
    Ok(ranking)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Line,
    Branch,
}

impl Granularity {
    pub fn strategy(self) -> Strategy {
        match self {
            Granularity::Line => Strategy::GreedyLine,
            Granularity::Branch => Strategy::GreedyBranch,
        }
    }
}

/// Covered units per test, in suite order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMatrix {
    pub suite_id: String,
    pub granularity: Granularity,
    pub tests: Vec<(String, BTreeSet<String>)>,
}

impl CoverageMatrix {
    pub fn new(
        suite_id: impl Into<String>,
        granularity: Granularity,
        tests: Vec<(String, BTreeSet<String>)>,
    ) -> Self {
        Self {
            suite_id: suite_id.into(),
            granularity,
            tests,
        }
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    /// Keep only the listed tests, in the listed order.
    pub fn restrict_to<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Self {
        let tests = ids
            .into_iter()
            .map(|id| {
                let units = self
                    .tests
                    .iter()
                    .find(|(t, _)| t == id)
                    .map(|(_, u)| u.clone())
                    .unwrap_or_default();
                (id.to_string(), units)
            })
            .collect();
        Self::new(self.suite_id.clone(), self.granularity, tests)
    }

    /// Parse `test_id,units` CSV; units are `;`-separated.
    pub fn from_csv<R: Read>(
        reader: R,
        suite_id: impl Into<String>,
        granularity: Granularity,
    ) -> Result<Self, PrioritizeError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "test_id" || &headers[1] != "units" {
            return Err(PrioritizeError::Coverage {
                line: 1,
                message: "expected header `test_id,units`".into(),
            });
        }
        let mut tests = Vec::new();
        let mut seen = HashSet::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != 2 {
                return Err(PrioritizeError::Coverage {
                    line,
                    message: format!("expected 2 fields, found {}", rec.len()),
                });
            }
            let id = rec[0].to_string();
            if !seen.insert(id.clone()) {
                return Err(PrioritizeError::Coverage {
                    line,
                    message: format!("duplicate test_id `{id}`"),
                });
            }
            let units = rec[1]
                .split(';')
                .map(str::trim)
                .filter(|u| !u.is_empty())
                .map(str::to_string)
                .collect();
            tests.push((id, units));
        }
        Ok(Self::new(suite_id, granularity, tests))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PrioritizeError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["test_id", "units"])?;
        for (id, units) in &self.tests {
            let joined = units.iter().map(String::as_str).collect::<Vec<_>>().join(";");
            w.write_record([id.as_str(), joined.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Additional-greedy coverage ordering.
///
/// Each round picks the remaining test adding the most uncovered units.
/// When no remaining test adds anything, the covered set is reset and the
/// round is re-scored. Ties are resolved by one `gen_range(0..ties)` draw
/// over the tied tests in matrix order; no draw happens without a tie.
pub fn greedy_coverage_tp(matrix: &CoverageMatrix, seed: u64) -> Result<Ranking, PrioritizeError> {
    if matrix.is_empty() {
        return Err(PrioritizeError::EmptySuite);
    }
    let mut r = rng(seed);
    let mut remaining: Vec<usize> = (0..matrix.len()).collect();
    let mut covered: HashSet<&str> = HashSet::new();
    let mut order = Vec::with_capacity(matrix.len());

    let gains = |remaining: &[usize], covered: &HashSet<&str>| -> Vec<usize> {
        remaining
            .iter()
            .map(|&i| {
                matrix.tests[i]
                    .1
                    .iter()
                    .filter(|u| !covered.contains(u.as_str()))
                    .count()
            })
            .collect()
    };

    while !remaining.is_empty() {
        let mut g = gains(&remaining, &covered);
        let mut best = g.iter().copied().max().unwrap_or(0);
        if best == 0 && !covered.is_empty() {
            covered.clear();
            g = gains(&remaining, &covered);
            best = g.iter().copied().max().unwrap_or(0);
        }
        let tied: Vec<usize> = (0..remaining.len()).filter(|&k| g[k] == best).collect();
        let slot = if tied.len() == 1 {
            tied[0]
        } else {
            tied[r.gen_range(0..tied.len())]
        };
        let chosen = remaining.remove(slot);
        covered.extend(matrix.tests[chosen].1.iter().map(String::as_str));
        order.push(matrix.tests[chosen].0.clone());
    }

    let ranking = Ranking {
        suite_id: matrix.suite_id.clone(),
        strategy: matrix.granularity.strategy(),
        ordered_test_ids: order,
        scores: None,
        seed: Some(seed),
    };
    ranking.ensure_permutation(matrix.tests.iter().map(|(t, _)| t.as_str()))?;
    Ok(ranking)
}

/// Uniformly random ordering.
pub fn random_tp<S: AsRef<str>>(
    suite_id: &str,
    test_ids: &[S],
    seed: u64,
) -> Result<Ranking, PrioritizeError> {
    if test_ids.is_empty() {
        return Err(PrioritizeError::EmptySuite);
    }
    let mut order: Vec<String> = test_ids.iter().map(|s| s.as_ref().to_string()).collect();
    order.shuffle(&mut rng(seed));
    let ranking = Ranking {
        suite_id: suite_id.to_string(),
        strategy: Strategy::Random,
        ordered_test_ids: order,
        scores: None,
        seed: Some(seed),
    };
    ranking.ensure_permutation(test_ids.iter().map(AsRef::as_ref))?;
    Ok(ranking)
}
