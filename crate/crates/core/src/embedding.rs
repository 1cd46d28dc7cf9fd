//! Test vectors and the vector-space primitives used for ranking.
//!
//! Two deterministic backends turn [`TokenStreams`] into vectors:
//! [`OneHotBackend`] (method-presence bitmap) and [`HashedBackend`]
//! (signed feature hashing with max+mean pooling). Vectors produced
//! elsewhere enter through [`import_vectors`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::preprocess::TokenStreams;
use crate::seed::{fnv1a, mix64};

pub const DEFAULT_DIMENSION: usize = 100;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot pool an empty sequence")]
    EmptySequence,
    #[error("empty suite")]
    EmptySuite,
    #[error("dimension mismatch{}: expected {expected}, found {found}", fmt_id(.test_id))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        test_id: Option<String>,
    },
    #[error("vector `{test_id}` has a non-finite component")]
    NonFinite { test_id: String },
    #[error("vector `{test_id}`: p_fail {value} outside [0, 1]")]
    ProbabilityRange { test_id: String, value: f64 },
    #[error("line {line}{}: {message}", fmt_id(.test_id))]
    Format {
        line: usize,
        test_id: Option<String>,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_id(id: &Option<String>) -> String {
    id.as_ref().map(|s| format!(" (test `{s}`)")).unwrap_or_default()
}

/// A test's position in the latent space, optionally with its predicted
/// failure probability.
#[derive(Debug, Clone, PartialEq)]
pub struct TestVector {
    pub test_id: String,
    pub values: Vec<f64>,
    pub p_fail: Option<f64>,
}

impl TestVector {
    pub fn new(
        test_id: impl Into<String>,
        values: Vec<f64>,
        p_fail: Option<f64>,
    ) -> Result<Self, EmbeddingError> {
        let test_id = test_id.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { test_id });
        }
        if let Some(p) = p_fail {
            if !(0.0..=1.0).contains(&p) {
                return Err(EmbeddingError::ProbabilityRange { test_id, value: p });
            }
        }
        Ok(Self {
            test_id,
            values,
            p_fail,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn with_p_fail(mut self, p: f64) -> Self {
        self.p_fail = Some(p);
        self
    }
}

/// Check that every vector has the same dimension and return it.
pub fn uniform_dimension(vectors: &[TestVector]) -> Result<usize, EmbeddingError> {
    let first = vectors.first().ok_or(EmbeddingError::EmptySuite)?;
    let d = first.dim();
    for v in vectors {
        if v.dim() != d {
            return Err(EmbeddingError::DimensionMismatch {
                expected: d,
                found: v.dim(),
                test_id: Some(v.test_id.clone()),
            });
        }
    }
    Ok(d)
}

/// Dense index over method-name tokens, sorted for stability.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let unique: BTreeSet<String> = tokens.into_iter().map(Into::into).collect();
        let tokens: Vec<String> = unique.into_iter().collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    /// Vocabulary of every method appearing in `streams`.
    pub fn from_streams<'a>(streams: impl IntoIterator<Item = &'a TokenStreams>) -> Self {
        Self::new(
            streams
                .into_iter()
                .flat_map(|s| s.methods.iter().cloned()),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Anything that maps token streams to fixed-length vectors.
///
/// Implementations must be deterministic and always return vectors of
/// [`dimension`](EmbeddingBackend::dimension) components.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, streams: &TokenStreams) -> TestVector;
}

/// Presence bitmap over the method vocabulary. Inputs and outputs are ignored.
pub fn one_hot_encode(streams: &TokenStreams, vocab: &Vocabulary) -> TestVector {
    let mut values = vec![0.0; vocab.len()];
    for m in &streams.methods {
        if let Some(i) = vocab.index_of(m) {
            values[i] = 1.0;
        }
    }
    TestVector {
        test_id: streams.source_test_id.clone(),
        values,
        p_fail: None,
    }
}

#[derive(Debug, Clone)]
pub struct OneHotBackend {
    vocab: Vocabulary,
}

impl OneHotBackend {
    pub fn new(vocab: Vocabulary) -> Self {
        Self { vocab }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }
}

impl EmbeddingBackend for OneHotBackend {
    fn name(&self) -> &str {
        "onehot"
    }

    fn dimension(&self) -> usize {
        self.vocab.len()
    }

    fn embed(&self, streams: &TokenStreams) -> TestVector {
        one_hot_encode(streams, &self.vocab)
    }
}

/// Element-wise max followed by element-wise mean: `d` in, `2d` out.
pub fn pool_concat(per_token: &[Vec<f64>]) -> Result<Vec<f64>, EmbeddingError> {
    let first = per_token.first().ok_or(EmbeddingError::EmptySequence)?;
    let d = first.len();
    let mut max = first.clone();
    let mut sum = vec![0.0; d];
    for v in per_token {
        if v.len() != d {
            return Err(EmbeddingError::DimensionMismatch {
                expected: d,
                found: v.len(),
                test_id: None,
            });
        }
        for (i, &x) in v.iter().enumerate() {
            if x > max[i] {
                max[i] = x;
            }
            sum[i] += x;
        }
    }
    let n = per_token.len() as f64;
    max.extend(sum.into_iter().map(|s| s / n));
    Ok(max)
}

/// Signed feature hashing over the three streams.
///
/// Every token is tagged with its stream name before hashing; with
/// `positional` set, a second feature additionally tags it with its context
/// index so that call order matters. Each stream becomes a signed bag of
/// hashed features with `ceil(dim/2)` components; the three stream vectors
/// are pooled by [`pool_concat`], cut to `dim` and L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBackend {
    pub dimension: usize,
    pub seed: u64,
    pub positional: bool,
}

impl HashedBackend {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self {
            dimension,
            seed,
            positional: true,
        }
    }

    pub fn with_positional(mut self, positional: bool) -> Self {
        self.positional = positional;
        self
    }

    fn bucket(&self, key: &str, width: usize) -> (usize, f64) {
        let h = mix64(fnv1a(key.as_bytes()) ^ mix64(self.seed));
        let idx = (h % width as u64) as usize;
        let sign = if mix64(h) >> 63 == 0 { 1.0 } else { -1.0 };
        (idx, sign)
    }

    fn add_token(&self, bag: &mut [f64], stream: &str, position: usize, token: &str) {
        let width = bag.len();
        let (i, s) = self.bucket(&format!("{stream}:{token}"), width);
        bag[i] += s;
        if self.positional {
            let (j, t) = self.bucket(&format!("{stream}@{position}:{token}"), width);
            bag[j] += t;
        }
    }
}

impl EmbeddingBackend for HashedBackend {
    fn name(&self) -> &str {
        "hashed"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, streams: &TokenStreams) -> TestVector {
        if streams.outputs.is_empty() && streams.methods.is_empty() && streams.inputs.is_empty() {
            return TestVector {
                test_id: streams.source_test_id.clone(),
                values: vec![0.0; self.dimension],
                p_fail: None,
            };
        }
        let width = self.dimension.div_ceil(2);
        let bags: Vec<Vec<f64>> = [
            ("outputs", &streams.outputs),
            ("methods", &streams.methods),
            ("inputs", &streams.inputs),
        ]
        .into_iter()
        .map(|(name, stream)| {
            let mut bag = vec![0.0; width];
            for (pos, tok) in stream.iter().enumerate() {
                self.add_token(&mut bag, name, pos, tok);
            }
            bag
        })
        .collect();
        let mut values = pool_concat(&bags).expect("three stream vectors");
        values.truncate(self.dimension);
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|x| *x /= norm);
        }
        TestVector {
            test_id: streams.source_test_id.clone(),
            values,
            p_fail: None,
        }
    }
}

/// Convenience wrapper around [`HashedBackend`] with positional features on.
pub fn hashed_context_embed(streams: &TokenStreams, dimension: usize, seed: u64) -> TestVector {
    HashedBackend::new(dimension, seed).embed(streams)
}

/// Component-wise mean.
pub fn centroid(vectors: &[TestVector]) -> Result<Vec<f64>, EmbeddingError> {
    let d = uniform_dimension(vectors)?;
    let mut c = vec![0.0; d];
    for v in vectors {
        for (acc, x) in c.iter_mut().zip(&v.values) {
            *acc += x;
        }
    }
    let n = vectors.len() as f64;
    c.iter_mut().for_each(|x| *x /= n);
    Ok(c)
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`. Zero-norm inputs give 1.0.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
            test_id: None,
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(1.0);
    }
    let d = 1.0 - dot / (na.sqrt() * nb.sqrt());
    // Parallel vectors should compare equal despite rounding in the norms.
    if d.abs() < COSINE_SNAP {
        return Ok(0.0);
    }
    Ok(d.clamp(0.0, 2.0))
}

const COSINE_SNAP: f64 = 1e-12;

#[derive(Serialize)]
struct VectorRecord<'a> {
    test_id: &'a str,
    dim: usize,
    vector: &'a [f64],
    p_fail: Option<f64>,
}

/// Write vectors in the interchange format, one JSON object per line.
pub fn export_vectors<'a, W: Write>(
    mut writer: W,
    vectors: impl IntoIterator<Item = &'a TestVector>,
) -> std::io::Result<()> {
    for v in vectors {
        let rec = VectorRecord {
            test_id: &v.test_id,
            dim: v.dim(),
            vector: &v.values,
            p_fail: v.p_fail,
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Read interchange records in file order, enforcing one shared dimension.
pub fn read_vectors<R: BufRead>(reader: R) -> Result<Vec<TestVector>, EmbeddingError> {
    let mut out: Vec<TestVector> = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_vector_record(&line, line_no)?;
        if let Some(first) = out.first() {
            if first.dim() != v.dim() {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: first.dim(),
                    found: v.dim(),
                    test_id: Some(v.test_id),
                });
            }
        }
        if !seen.insert(v.test_id.clone()) {
            return Err(EmbeddingError::Format {
                line: line_no,
                test_id: Some(v.test_id),
                message: "duplicate test_id".into(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

/// Read interchange records into a map keyed by `test_id`.
pub fn import_vectors<R: BufRead>(
    reader: R,
) -> Result<BTreeMap<String, TestVector>, EmbeddingError> {
    Ok(read_vectors(reader)?
        .into_iter()
        .map(|v| (v.test_id.clone(), v))
        .collect())
}

fn parse_vector_record(text: &str, line: usize) -> Result<TestVector, EmbeddingError> {
    let fmt = |test_id: Option<&str>, message: &str| EmbeddingError::Format {
        line,
        test_id: test_id.map(str::to_string),
        message: message.to_string(),
    };
    let value: Value = serde_json::from_str(text).map_err(|e| fmt(None, &e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| fmt(None, "expected a JSON object"))?;
    let test_id = obj
        .get("test_id")
        .and_then(Value::as_str)
        .ok_or_else(|| fmt(None, "missing or non-string `test_id`"))?;
    let id = Some(test_id);
    let dim = obj
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| fmt(id, "missing or invalid `dim`"))? as usize;
    let raw = obj
        .get("vector")
        .and_then(Value::as_array)
        .ok_or_else(|| fmt(id, "missing or invalid `vector`"))?;
    let mut values = Vec::with_capacity(raw.len());
    for x in raw {
        match x.as_f64() {
            Some(f) if f.is_finite() => values.push(f),
            _ => {
                return Err(EmbeddingError::NonFinite {
                    test_id: test_id.to_string(),
                })
            }
        }
    }
    if values.len() != dim {
        return Err(EmbeddingError::DimensionMismatch {
            expected: dim,
            found: values.len(),
            test_id: Some(test_id.to_string()),
        });
    }
    let p_fail = match obj.get("p_fail") {
        None | Some(Value::Null) => None,
        Some(p) => Some(p.as_f64().ok_or_else(|| fmt(id, "`p_fail` must be a number or null"))?),
    };
    TestVector::new(test_id, values, p_fail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn streams(methods: &[&str]) -> TokenStreams {
        TokenStreams {
            source_test_id: "t".into(),
            outputs: methods.iter().map(|_| "PV".to_string()).collect(),
            methods: methods.iter().map(|m| m.to_string()).collect(),
            inputs: methods.iter().map(|_| "ZV".to_string()).collect(),
        }
    }

    fn tv(id: &str, values: &[f64]) -> TestVector {
        TestVector::new(id, values.to_vec(), None).unwrap()
    }

    #[test]
    fn one_hot_presence() {
        let vocab = Vocabulary::new(["a", "b", "c"]);
        assert_eq!(one_hot_encode(&streams(&["a", "c", "a"]), &vocab).values, [1.0, 0.0, 1.0]);
        assert_eq!(one_hot_encode(&streams(&[]), &vocab).values, [0.0; 3]);
        assert_eq!(one_hot_encode(&streams(&["d"]), &vocab).values, [0.0; 3]);
    }

    #[test]
    fn vocabulary_is_dense_and_sorted() {
        let v = Vocabulary::new(["c", "a", "c", "b"]);
        assert_eq!(v.tokens(), ["a", "b", "c"]);
        assert_eq!(v.index_of("c"), Some(2));
        assert_eq!(v.index_of("z"), None);
    }

    #[test]
    fn hashed_is_deterministic_and_normalized() {
        let s = streams(&["x.a", "x.b", "x.c"]);
        let a = hashed_context_embed(&s, 100, 42);
        let b = hashed_context_embed(&s, 100, 42);
        assert_eq!(a.values.len(), 100);
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        let norm: f64 = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_ne!(a, hashed_context_embed(&s, 100, 43));
    }

    #[test]
    fn hashed_empty_is_zero() {
        let v = hashed_context_embed(&streams(&[]), 100, 1);
        assert_eq!(v.values, vec![0.0; 100]);
    }

    #[test]
    fn hashed_odd_dimension() {
        let v = hashed_context_embed(&streams(&["a"]), 7, 1);
        assert_eq!(v.dim(), 7);
    }

    #[test]
    fn positional_bucketing_sees_order() {
        let ab = streams(&["m.alpha", "m.beta"]);
        let ba = streams(&["m.beta", "m.alpha"]);
        let pos = HashedBackend::new(100, 3);
        assert_ne!(pos.embed(&ab).values, pos.embed(&ba).values);
        let bag = pos.with_positional(false);
        assert_eq!(bag.embed(&ab).values, bag.embed(&ba).values);
    }

    #[test]
    fn pool_concat_examples() {
        assert_eq!(
            pool_concat(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap(),
            [1.0, 2.0, 0.5, 1.0]
        );
        assert_eq!(pool_concat(&[vec![3.0, 3.0]]).unwrap(), [3.0; 4]);
        assert!(matches!(pool_concat(&[]), Err(EmbeddingError::EmptySequence)));
        assert!(pool_concat(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&[tv("a", &[0.0, 0.0]), tv("b", &[2.0, 2.0])]).unwrap(), [1.0, 1.0]);
        assert_eq!(centroid(&[tv("a", &[1.0, 0.0])]).unwrap(), [1.0, 0.0]);
        let ring = [
            tv("a", &[1.0, 0.0]),
            tv("b", &[0.0, 1.0]),
            tv("c", &[-1.0, 0.0]),
            tv("d", &[0.0, -1.0]),
        ];
        assert_eq!(centroid(&ring).unwrap(), [0.0, 0.0]);
        assert!(matches!(centroid(&[]), Err(EmbeddingError::EmptySuite)));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(cosine_distance(&[3.0, 4.0], &[3.0, 4.0]).unwrap().abs() < 1e-15);
        let d = cosine_distance(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((d - 0.292893).abs() < 1e-6);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn import_round_trip_and_errors() {
        let vs: Vec<TestVector> = (0..3)
            .map(|i| {
                let values = (0..100).map(|k| (k as f64 * 0.37 + i as f64).sin() / 3.0).collect();
                TestVector::new(format!("t{i}"), values, Some(0.1 * i as f64)).unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        export_vectors(&mut buf, &vs).unwrap();
        let map = import_vectors(&buf[..]).unwrap();
        assert_eq!(map.len(), 3);
        for v in &vs {
            assert_eq!(&map[&v.test_id], v);
        }

        assert!(import_vectors(&b""[..]).unwrap().is_empty());

        let nan = r#"{"test_id":"x","dim":2,"vector":[1.0,"NaN"],"p_fail":null}"#;
        assert!(matches!(
            import_vectors(nan.as_bytes()),
            Err(EmbeddingError::NonFinite { .. })
        ));

        let mixed = "{\"test_id\":\"a\",\"dim\":2,\"vector\":[1,2],\"p_fail\":null}\n\
                     {\"test_id\":\"b\",\"dim\":3,\"vector\":[1,2,3],\"p_fail\":null}\n";
        match import_vectors(mixed.as_bytes()) {
            Err(EmbeddingError::DimensionMismatch { test_id, .. }) => {
                assert_eq!(test_id.as_deref(), Some("b"))
            }
            other => panic!("{other:?}"),
        }

        let lying = r#"{"test_id":"a","dim":3,"vector":[1,2],"p_fail":null}"#;
        assert!(import_vectors(lying.as_bytes()).is_err());

        let no_p = r#"{"test_id":"a","dim":1,"vector":[0.5]}"#;
        assert_eq!(import_vectors(no_p.as_bytes()).unwrap()["a"].p_fail, None);

        let bad_p = r#"{"test_id":"a","dim":1,"vector":[0.5],"p_fail":1.5}"#;
        assert!(import_vectors(bad_p.as_bytes()).is_err());
    }

    fn vecs(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, d)
    }

    proptest! {
        #[test]
        fn cosine_properties(a in vecs(5), b in vecs(5), c in 0.01f64..100.0) {
            let ab = cosine_distance(&a, &b).unwrap();
            let ba = cosine_distance(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&ab));
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            if a.iter().any(|x| *x != 0.0) {
                prop_assert!(cosine_distance(&a, &scaled).unwrap() < 1e-9);
            }
        }

        #[test]
        fn centroid_of_copies(v in vecs(4), n in 1usize..10) {
            let copies: Vec<_> = (0..n).map(|i| tv(&i.to_string(), &v)).collect();
            let c = centroid(&copies).unwrap();
            for (x, y) in c.iter().zip(&v) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }

        #[test]
        fn pooled_max_dominates_mean(list in prop::collection::vec(vecs(3), 1..8)) {
            let p = pool_concat(&list).unwrap();
            prop_assert_eq!(p.len(), 6);
            for i in 0..3 {
                prop_assert!(p[i] >= p[i + 3] - 1e-12);
            }
        }

        #[test]
        fn one_hot_is_binary(methods in prop::collection::vec("[a-e]", 0..10)) {
            let vocab = Vocabulary::new(["a", "b", "c"]);
            let refs: Vec<&str> = methods.iter().map(String::as_str).collect();
            let v = one_hot_encode(&streams(&refs), &vocab);
            prop_assert!(v.values.iter().all(|x| *x == 0.0 || *x == 1.0));
            let l0 = v.values.iter().filter(|x| **x == 1.0).count();
            let distinct: BTreeSet<&str> = refs.iter().copied().collect();
            prop_assert!(l0 <= vocab.len() && l0 <= distinct.len());
        }

        #[test]
        fn backends_are_deterministic(methods in prop::collection::vec("[a-z]{1,4}", 0..20), seed: u64) {
            let refs: Vec<&str> = methods.iter().map(String::as_str).collect();
            let s = streams(&refs);
            let hashed = HashedBackend::new(64, seed);
            prop_assert_eq!(hashed.embed(&s), hashed.embed(&s));
            let onehot = OneHotBackend::new(Vocabulary::from_streams([&s]));
            prop_assert_eq!(onehot.embed(&s), onehot.embed(&s));
            prop_assert_eq!(onehot.embed(&s).dim(), onehot.dimension());
        }
    }
}
