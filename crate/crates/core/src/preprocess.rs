//! Trace preprocessing: value abstraction, oracle-call stripping,
//! middle-drop truncation and the split into three aligned token streams.
//!
//! The pipeline order is fixed: strip, then truncate, then tokenize.
//! The pass/fail label never reaches a token stream.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace_model::{Context, ExecutionTrace};

/// Placeholder for a missing input or output.
pub const NO_ARG: &str = "<NO_ARG>";

pub const NBV: &str = "NBV";
pub const NV: &str = "NV";
pub const ZV: &str = "ZV";
pub const PV: &str = "PV";
pub const PBV: &str = "PBV";
pub const EMPTY_STR: &str = "EMPTY_STR";
pub const NONEMPTY_STR: &str = "NONEMPTY_STR";
pub const EMPTY_ARR: &str = "EMPTY_ARR";
pub const NONEMPTY_ARR: &str = "NONEMPTY_ARR";
pub const TRUE: &str = "TRUE";
pub const FALSE: &str = "FALSE";
pub const UNK: &str = "UNK";
pub const OBJ_PREFIX: &str = "OBJ:";

/// Separator between parameter tokens inside one input group.
pub const INPUT_SEPARATOR: char = '|';

pub const DEFAULT_MAX_CONTEXTS: usize = 128;
pub const DEFAULT_BIG_MAGNITUDE: f64 = 32768.0;
pub const DEFAULT_ZERO_EPSILON: f64 = 1e-9;

pub fn default_denylist() -> Vec<String> {
    ["assert", "fail", "exception", "error", "throwable"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("max_contexts must be >= 2, got {0}")]
    MaxContexts(usize),
    #[error("big_magnitude must be a positive finite number, got {0}")]
    BigMagnitude(f64),
    #[error("zero_epsilon must be a non-negative finite number, got {0}")]
    ZeroEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstractionThresholds {
    /// Magnitudes at or above this are "big".
    pub big_magnitude: f64,
    /// Values with smaller magnitude are zero.
    pub zero_epsilon: f64,
}

impl Default for AbstractionThresholds {
    fn default() -> Self {
        Self {
            big_magnitude: DEFAULT_BIG_MAGNITUDE,
            zero_epsilon: DEFAULT_ZERO_EPSILON,
        }
    }
}

impl AbstractionThresholds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.big_magnitude.is_finite() && self.big_magnitude > 0.0) {
            return Err(ConfigError::BigMagnitude(self.big_magnitude));
        }
        if !(self.zero_epsilon.is_finite() && self.zero_epsilon >= 0.0) {
            return Err(ConfigError::ZeroEpsilon(self.zero_epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub max_contexts: usize,
    /// Case-insensitive substrings; a context whose method contains any of
    /// them is dropped.
    pub oracle_denylist: Vec<String>,
    pub thresholds: AbstractionThresholds,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_contexts: DEFAULT_MAX_CONTEXTS,
            oracle_denylist: default_denylist(),
            thresholds: AbstractionThresholds::default(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_contexts < 2 {
            return Err(ConfigError::MaxContexts(self.max_contexts));
        }
        self.thresholds.validate()
    }
}

/// The three aligned per-trace sequences. Context `i` contributes the
/// `i`-th entry of each stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStreams {
    #[serde(rename = "test_id")]
    pub source_test_id: String,
    pub outputs: Vec<String>,
    pub methods: Vec<String>,
    pub inputs: Vec<String>,
}

impl TokenStreams {
    pub fn empty(test_id: impl Into<String>) -> Self {
        Self {
            source_test_id: test_id.into(),
            outputs: Vec::new(),
            methods: Vec::new(),
            inputs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.methods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty()
    }
}

enum TypeClass {
    Numeric,
    Text,
    Array,
    Boolean,
    Void,
    Object,
}

fn classify(type_name: &str) -> TypeClass {
    let t = type_name.trim();
    if t.ends_with("[]") || t.starts_with('[') {
        return TypeClass::Array;
    }
    let base = t.strip_prefix("java.lang.").unwrap_or(t);
    match base.to_ascii_lowercase().as_str() {
        "int" | "integer" | "short" | "long" | "double" | "float" | "byte" => TypeClass::Numeric,
        "string" | "char" | "character" | "charsequence" => TypeClass::Text,
        "boolean" | "bool" => TypeClass::Boolean,
        "void" => TypeClass::Void,
        _ => TypeClass::Object,
    }
}

fn parse_number(literal: &str) -> Option<f64> {
    let s = literal.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    // Java literal suffixes: 5L, 1.5f, 2d.
    if let Some(stripped) = s.strip_suffix(['l', 'L', 'f', 'F', 'd', 'D']) {
        if let Ok(v) = stripped.parse::<f64>() {
            return Some(v);
        }
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let hex = body
        .strip_prefix("0x")
        .or_else(|| body.strip_prefix("0X"))?;
    let v = i64::from_str_radix(hex.trim_end_matches(['l', 'L']), 16).ok()? as f64;
    Some(if neg { -v } else { v })
}

fn sanitize(token: &str) -> String {
    token.split_whitespace().collect::<Vec<_>>().join("_")
}

/// Map a typed literal to its abstract token. Total: anything unparseable
/// becomes `UNK`.
///
/// Object types keep only their type (`OBJ:<type>`); the reference value is
/// discarded.
pub fn abstract_value(type_name: &str, literal: &str, thresholds: &AbstractionThresholds) -> String {
    if literal == NO_ARG {
        return NO_ARG.to_string();
    }
    match classify(type_name) {
        TypeClass::Numeric => match parse_number(literal) {
            Some(v) if v.is_nan() => UNK,
            Some(v) if v == 0.0 || v.abs() < thresholds.zero_epsilon => ZV,
            Some(v) if v >= thresholds.big_magnitude => PBV,
            Some(v) if v > 0.0 => PV,
            Some(v) if v <= -thresholds.big_magnitude => NBV,
            Some(_) => NV,
            None => UNK,
        }
        .to_string(),
        TypeClass::Text => {
            let s = literal.trim();
            if s.is_empty() || s == "\"\"" || s == "null" {
                EMPTY_STR
            } else {
                NONEMPTY_STR
            }
            .to_string()
        }
        TypeClass::Array => {
            let s = literal.trim();
            if matches!(s, "" | "[]" | "{}" | "null") {
                EMPTY_ARR
            } else {
                NONEMPTY_ARR
            }
            .to_string()
        }
        TypeClass::Boolean => match literal.trim().to_ascii_lowercase().as_str() {
            "true" | "1" => TRUE,
            "false" | "0" => FALSE,
            _ => UNK,
        }
        .to_string(),
        TypeClass::Void => NO_ARG.to_string(),
        TypeClass::Object => format!("{OBJ_PREFIX}{}", sanitize(type_name)),
    }
}

fn is_denylisted(method: &str, denylist: &[String]) -> bool {
    let m = method.to_lowercase();
    denylist
        .iter()
        .filter(|p| !p.is_empty())
        .any(|p| m.contains(&p.to_lowercase()))
}

/// Drop every context whose method matches the denylist.
pub fn strip_oracle_calls(trace: &ExecutionTrace, denylist: &[String]) -> ExecutionTrace {
    ExecutionTrace {
        contexts: trace
            .contexts
            .iter()
            .filter(|c| !is_denylisted(&c.method, denylist))
            .cloned()
            .collect(),
        ..trace.clone()
    }
}

/// Keep the first `ceil(max/2)` and last `floor(max/2)` contexts of an
/// over-long trace.
pub fn truncate_contexts(trace: &ExecutionTrace, max_contexts: usize) -> ExecutionTrace {
    assert!(max_contexts >= 2, "max_contexts must be >= 2");
    let n = trace.contexts.len();
    if n <= max_contexts {
        return trace.clone();
    }
    let head = max_contexts.div_ceil(2);
    let tail = max_contexts / 2;
    let contexts = trace.contexts[..head]
        .iter()
        .chain(&trace.contexts[n - tail..])
        .cloned()
        .collect();
    ExecutionTrace {
        contexts,
        ..trace.clone()
    }
}

/// Strip then truncate.
pub fn preprocess_trace(trace: &ExecutionTrace, config: &PreprocessConfig) -> ExecutionTrace {
    let stripped = strip_oracle_calls(trace, &config.oracle_denylist);
    truncate_contexts(&stripped, config.max_contexts)
}

fn output_token(ctx: &Context, thresholds: &AbstractionThresholds) -> String {
    abstract_value(&ctx.out_type, &ctx.out_value, thresholds)
}

fn input_token(ctx: &Context, thresholds: &AbstractionThresholds) -> String {
    if ctx.param_types.is_empty() {
        return NO_ARG.to_string();
    }
    let mut group = String::new();
    for (i, (ty, value)) in ctx.params().enumerate() {
        if i > 0 {
            group.push(INPUT_SEPARATOR);
        }
        group.push_str(&abstract_value(ty, value, thresholds));
    }
    group
}

/// Split an already preprocessed trace into its three streams.
pub fn tokenize(trace: &ExecutionTrace, thresholds: &AbstractionThresholds) -> TokenStreams {
    let mut streams = TokenStreams::empty(trace.test_id.clone());
    for ctx in &trace.contexts {
        streams.methods.push(sanitize(&ctx.method));
        streams.outputs.push(output_token(ctx, thresholds));
        streams.inputs.push(input_token(ctx, thresholds));
    }
    streams
}

/// Full pipeline: strip, truncate, tokenize.
pub fn to_token_streams(trace: &ExecutionTrace, config: &PreprocessConfig) -> TokenStreams {
    tokenize(&preprocess_trace(trace, config), &config.thresholds)
}

pub fn write_streams<'a, W: Write>(
    mut writer: W,
    streams: impl IntoIterator<Item = &'a TokenStreams>,
) -> std::io::Result<()> {
    for s in streams {
        serde_json::to_writer(&mut writer, s)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_streams<R: BufRead>(reader: R) -> Result<Vec<TokenStreams>, StreamsError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: TokenStreams = serde_json::from_str(&line).map_err(|e| StreamsError::Format {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if s.outputs.len() != s.methods.len() || s.inputs.len() != s.methods.len() {
            return Err(StreamsError::Format {
                line: idx + 1,
                message: format!("streams of `{}` are not aligned", s.source_test_id),
            });
        }
        out.push(s);
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum StreamsError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_model::Label;
    use proptest::prelude::*;

    fn th() -> AbstractionThresholds {
        AbstractionThresholds::default()
    }

    fn ints(vals: &[&str]) -> Vec<(String, String)> {
        vals.iter().map(|v| ("int".to_string(), v.to_string())).collect()
    }

    fn trace_of(contexts: Vec<Context>) -> ExecutionTrace {
        ExecutionTrace {
            test_id: "t".into(),
            suite_id: "S".into(),
            version_id: "v".into(),
            label: Label::Pass,
            fault_id: None,
            contexts,
        }
    }

    fn numbered(n: usize) -> ExecutionTrace {
        trace_of((1..=n).map(|i| Context::void(format!("m{i}"), vec![])).collect())
    }

    #[test]
    fn numeric_categories() {
        assert_eq!(abstract_value("int", "0", &th()), ZV);
        assert_eq!(abstract_value("int", "-5", &th()), NV);
        assert_eq!(abstract_value("int", "7", &th()), PV);
        assert_eq!(abstract_value("long", "5000000", &th()), PBV);
        assert_eq!(abstract_value("long", "-5000000", &th()), NBV);
        assert_eq!(abstract_value("double", "1e-12", &th()), ZV);
        assert_eq!(abstract_value("double", "-0.0", &th()), ZV);
        assert_eq!(abstract_value("short", "32767", &th()), PV);
        assert_eq!(abstract_value("int", "32768", &th()), PBV);
        assert_eq!(abstract_value("int", "-32768", &th()), NBV);
        assert_eq!(abstract_value("java.lang.Integer", "3", &th()), PV);
        assert_eq!(abstract_value("long", "12L", &th()), PV);
        assert_eq!(abstract_value("float", "-2.5f", &th()), NV);
        assert_eq!(abstract_value("int", "0x10", &th()), PV);
        assert_eq!(abstract_value("double", "Infinity", &th()), PBV);
        assert_eq!(abstract_value("double", "NaN", &th()), UNK);
        assert_eq!(abstract_value("int", "twelve", &th()), UNK);
    }

    #[test]
    fn zero_epsilon_zero_still_maps_exact_zero() {
        let t = AbstractionThresholds {
            big_magnitude: 10.0,
            zero_epsilon: 0.0,
        };
        assert_eq!(abstract_value("int", "0", &t), ZV);
        assert_eq!(abstract_value("double", "1e-300", &t), PV);
    }

    #[test]
    fn non_numeric_categories() {
        assert_eq!(abstract_value("String", "", &th()), EMPTY_STR);
        assert_eq!(abstract_value("java.lang.String", "abc", &th()), NONEMPTY_STR);
        assert_eq!(abstract_value("int[]", "[]", &th()), EMPTY_ARR);
        assert_eq!(abstract_value("int[]", "[1, 2]", &th()), NONEMPTY_ARR);
        assert_eq!(abstract_value("boolean", "true", &th()), TRUE);
        assert_eq!(abstract_value("boolean", "False", &th()), FALSE);
        assert_eq!(abstract_value("boolean", "maybe", &th()), UNK);
        assert_eq!(abstract_value("void", "", &th()), NO_ARG);
        assert_eq!(abstract_value("com.foo.Bar", "com.foo.Bar@1f2e3d", &th()), "OBJ:com.foo.Bar");
        assert_eq!(
            abstract_value("Map<String, Integer>", "{}", &th()),
            "OBJ:Map<String,_Integer>"
        );
    }

    #[test]
    fn strip_motivating_example() {
        let t = trace_of(vec![
            Context::void("org.junit.Assert.assertEquals", ints(&["1", "1"])),
            Context::new("double", "0.67", "formula", ints(&["2", "0", "3"])),
            Context::new("int", "1", "power", ints(&["2", "0"])),
        ]);
        let stripped = strip_oracle_calls(&t, &default_denylist());
        let methods: Vec<_> = stripped.contexts.iter().map(|c| c.method.as_str()).collect();
        assert_eq!(methods, ["formula", "power"]);
        assert_eq!(stripped.label, t.label);
    }

    #[test]
    fn strip_is_case_insensitive_and_total() {
        let t = trace_of(vec![
            Context::void("new IllegalStateEXCEPTION", vec![]),
            Context::void("Fail", vec![]),
        ]);
        assert!(strip_oracle_calls(&t, &default_denylist()).contexts.is_empty());
        let clean = numbered(3);
        assert_eq!(strip_oracle_calls(&clean, &default_denylist()), clean);
    }

    #[test]
    fn truncation_keep_rule() {
        assert_eq!(truncate_contexts(&numbered(100), 128), numbered(100));

        let t = truncate_contexts(&numbered(130), 128);
        assert_eq!(t.contexts.len(), 128);
        assert_eq!(t.contexts[63].method, "m64");
        assert_eq!(t.contexts[64].method, "m67");
        assert_eq!(t.contexts[127].method, "m130");

        let t = truncate_contexts(&numbered(129), 128);
        assert_eq!(t.contexts[63].method, "m64");
        assert_eq!(t.contexts[64].method, "m66");

        // Odd limits keep the extra context at the head.
        let t = truncate_contexts(&numbered(10), 5);
        let kept: Vec<_> = t.contexts.iter().map(|c| c.method.as_str()).collect();
        assert_eq!(kept, ["m1", "m2", "m3", "m9", "m10"]);
    }

    #[test]
    fn void_no_arg_context() {
        let t = trace_of(vec![Context::void("m", vec![])]);
        let s = to_token_streams(&t, &PreprocessConfig::default());
        assert_eq!(s.methods, ["m"]);
        assert_eq!(s.outputs, [NO_ARG]);
        assert_eq!(s.inputs, [NO_ARG]);
    }

    #[test]
    fn motivating_test1_streams() {
        let t = trace_of(vec![
            Context::new("double", "0.6666", "formula", ints(&["2", "0", "3"])),
            Context::new("int", "1", "power", ints(&["2", "0"])),
            Context::new("boolean", "true", "check", ints(&["2", "0"])),
        ]);
        let s = to_token_streams(&t, &PreprocessConfig::default());
        assert_eq!(s.methods, ["formula", "power", "check"]);
        assert_eq!(s.inputs, ["PV|ZV|PV", "PV|ZV", "PV|ZV"]);
        assert_eq!(s.outputs, ["PV", "PV", "TRUE"]);
    }

    #[test]
    fn empty_trace_three_empty_streams() {
        let s = to_token_streams(&trace_of(vec![]), &PreprocessConfig::default());
        assert!(s.outputs.is_empty() && s.methods.is_empty() && s.inputs.is_empty());
        assert_eq!(s.source_test_id, "t");
    }

    #[test]
    fn config_validation() {
        let mut c = PreprocessConfig::default();
        assert!(c.validate().is_ok());
        c.max_contexts = 1;
        assert_eq!(c.validate(), Err(ConfigError::MaxContexts(1)));
        c.max_contexts = 2;
        c.thresholds.big_magnitude = 0.0;
        assert!(c.validate().is_err());
        c.thresholds.big_magnitude = 1.0;
        c.thresholds.zero_epsilon = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn streams_export_round_trip() {
        let t = trace_of(vec![Context::new("int", "3", "a b", ints(&["1"]))]);
        let s = to_token_streams(&t, &PreprocessConfig::default());
        let mut buf = Vec::new();
        write_streams(&mut buf, [&s]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"test_id\":\"t\""));
        assert_eq!(read_streams(&buf[..]).unwrap(), vec![s]);
    }

    fn arb_method() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-z]{1,6}\\.[a-z]{1,6}",
            Just("assertTrue".to_string()),
            Just("org.junit.Assert.fail".to_string()),
            Just("java.lang.RuntimeException.<init>".to_string()),
            Just("Some Error Handler".to_string()),
        ]
    }

    fn arb_trace() -> impl Strategy<Value = ExecutionTrace> {
        let ctx = (
            arb_method(),
            prop::collection::vec(("int|String|double|boolean|Foo", "-?[0-9]{0,7}|true|"), 0..3),
        )
            .prop_map(|(m, params)| Context::new("int", "4", m, params));
        prop::collection::vec(ctx, 0..300).prop_map(trace_of)
    }

    proptest! {
        #[test]
        fn pipeline_guards(t in arb_trace(), max in 2usize..150) {
            let cfg = PreprocessConfig { max_contexts: max, ..PreprocessConfig::default() };
            let s = to_token_streams(&t, &cfg);
            prop_assert!(s.methods.len() <= max);
            prop_assert_eq!(s.methods.len(), s.outputs.len());
            prop_assert_eq!(s.methods.len(), s.inputs.len());
            for m in &s.methods {
                prop_assert!(!is_denylisted(m, &cfg.oracle_denylist));
            }
            for tok in s.methods.iter().chain(&s.outputs).chain(&s.inputs) {
                prop_assert!(!tok.chars().any(char::is_whitespace));
            }
        }

        #[test]
        fn pipeline_idempotent(t in arb_trace(), max in 2usize..150) {
            let cfg = PreprocessConfig { max_contexts: max, ..PreprocessConfig::default() };
            let once = preprocess_trace(&t, &cfg);
            prop_assert_eq!(&preprocess_trace(&once, &cfg), &once);
            prop_assert_eq!(to_token_streams(&once, &cfg), to_token_streams(&t, &cfg));
        }

        #[test]
        fn truncation_keeps_prefix_and_suffix(n in 0usize..300, max in 2usize..150) {
            let t = numbered(n);
            let out = truncate_contexts(&t, max);
            let k = out.contexts.len();
            prop_assert_eq!(k, n.min(max));
            let head = if n <= max { n } else { max.div_ceil(2) };
            prop_assert_eq!(&out.contexts[..head], &t.contexts[..head]);
            let tail = k - head;
            prop_assert_eq!(&out.contexts[head..], &t.contexts[n - tail..]);
        }

        #[test]
        fn abstraction_total(ty in "\\PC{0,10}", lit in "\\PC{0,10}") {
            let a = abstract_value(&ty, &lit, &th());
            prop_assert!(!a.is_empty());
            prop_assert!(!a.chars().any(char::is_whitespace));
            prop_assert_eq!(a.clone(), abstract_value(&ty, &lit, &th()));
        }
    }
}
