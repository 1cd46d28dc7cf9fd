//! Execution traces and their on-disk JSON Lines encoding.
//!
//! One record per line:
//!
//! ```text
//! {"test_id": "...", "suite_id": "...", "version_id": "...", "label": "pass"|"fail",
//!  "fault_id": "..."|null,
//!  "contexts": [{"out_type": "...", "out_value": "...", "method": "...",
//!                "param_types": ["..."], "param_values": ["..."]}]}
//! ```
//!
//! Parsing is done against `serde_json::Value` rather than derived
//! deserializers so every error names the offending line and field path.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: invalid JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate test_id `{test_id}` in suite `{suite_id}` version `{version_id}`")]
    DuplicateId {
        line: usize,
        test_id: String,
        suite_id: String,
        version_id: String,
    },
    #[error("suite `{suite_id}`: duplicate test_id `{test_id}`")]
    DuplicateInSuite { suite_id: String, test_id: String },
    #[error("trace `{test_id}` belongs to suite `{found}`, expected `{expected}`")]
    SuiteMismatch {
        test_id: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pass,
    Fail,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pass => "pass",
            Label::Fail => "fail",
        }
    }

    pub fn is_fail(self) -> bool {
        self == Label::Fail
    }
}

/// One `<output, method, inputs>` triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub out_type: String,
    pub out_value: String,
    pub method: String,
    pub param_types: Vec<String>,
    pub param_values: Vec<String>,
}

impl Context {
    pub fn new(
        out_type: impl Into<String>,
        out_value: impl Into<String>,
        method: impl Into<String>,
        params: Vec<(String, String)>,
    ) -> Self {
        let (param_types, param_values) = params.into_iter().unzip();
        Self {
            out_type: out_type.into(),
            out_value: out_value.into(),
            method: method.into(),
            param_types,
            param_values,
        }
    }

    /// A call returning nothing.
    pub fn void(method: impl Into<String>, params: Vec<(String, String)>) -> Self {
        Self::new("void", crate::preprocess::NO_ARG, method, params)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &str)> {
        self.param_types
            .iter()
            .zip(&self.param_values)
            .map(|(t, v)| (t.as_str(), v.as_str()))
    }
}

/// One test run: its ordered contexts and its outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub test_id: String,
    pub suite_id: String,
    pub version_id: String,
    pub label: Label,
    pub fault_id: Option<String>,
    pub contexts: Vec<Context>,
}

/// Traces of one suite at one version, unique by `test_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub suite_id: String,
    pub version_id: String,
    pub traces: Vec<ExecutionTrace>,
}

impl TestSuite {
    pub fn new(
        suite_id: impl Into<String>,
        version_id: impl Into<String>,
        traces: Vec<ExecutionTrace>,
    ) -> Result<Self, TraceError> {
        let suite_id = suite_id.into();
        let mut seen = BTreeSet::new();
        for t in &traces {
            if t.suite_id != suite_id {
                return Err(TraceError::SuiteMismatch {
                    test_id: t.test_id.clone(),
                    expected: suite_id,
                    found: t.suite_id.clone(),
                });
            }
            if !seen.insert(t.test_id.as_str()) {
                return Err(TraceError::DuplicateInSuite {
                    suite_id,
                    test_id: t.test_id.clone(),
                });
            }
        }
        Ok(Self {
            suite_id,
            version_id: version_id.into(),
            traces,
        })
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn test_ids(&self) -> impl Iterator<Item = &str> {
        self.traces.iter().map(|t| t.test_id.as_str())
    }

    pub fn get(&self, test_id: &str) -> Option<&ExecutionTrace> {
        self.traces.iter().find(|t| t.test_id == test_id)
    }
}

/// Group traces into suites keyed by `(version_id, suite_id)`, in order of
/// first appearance.
pub fn group_into_suites(traces: Vec<ExecutionTrace>) -> Result<Vec<TestSuite>, TraceError> {
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut groups: Vec<(String, String, Vec<ExecutionTrace>)> = Vec::new();
    for t in traces {
        let key = (t.version_id.clone(), t.suite_id.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push((t.suite_id.clone(), t.version_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].2.push(t);
    }
    groups
        .into_iter()
        .map(|(suite, version, traces)| TestSuite::new(suite, version, traces))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Unknown keys are an error.
    #[default]
    Strict,
    /// Unknown keys are ignored.
    Lenient,
}

const RECORD_KEYS: [&str; 6] = [
    "test_id",
    "suite_id",
    "version_id",
    "label",
    "fault_id",
    "contexts",
];
const CONTEXT_KEYS: [&str; 5] = [
    "out_type",
    "out_value",
    "method",
    "param_types",
    "param_values",
];

/// Parse a JSONL trace stream. Blank lines are skipped.
pub fn parse_trace_file<R: BufRead>(
    reader: R,
    mode: ParseMode,
) -> Result<Vec<ExecutionTrace>, TraceError> {
    let mut out = Vec::new();
    let mut seen: HashMap<(String, String), BTreeSet<String>> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace = parse_trace_record(&line, line_no, mode)?;
        let ids = seen
            .entry((trace.suite_id.clone(), trace.version_id.clone()))
            .or_default();
        if !ids.insert(trace.test_id.clone()) {
            return Err(TraceError::DuplicateId {
                line: line_no,
                test_id: trace.test_id,
                suite_id: trace.suite_id,
                version_id: trace.version_id,
            });
        }
        out.push(trace);
    }
    Ok(out)
}

/// Parse a single record. `line` is only used for error reporting.
pub fn parse_trace_record(
    text: &str,
    line: usize,
    mode: ParseMode,
) -> Result<ExecutionTrace, TraceError> {
    let value: Value = serde_json::from_str(text).map_err(|e| TraceError::Json {
        line,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| TraceError::Field {
        line,
        field: "<record>".into(),
        message: "expected a JSON object".into(),
    })?;
    let f = FieldReader { line, mode };
    f.check_keys(obj, &RECORD_KEYS, "")?;

    let test_id = f.string(obj, "test_id", "")?;
    let suite_id = f.string(obj, "suite_id", "")?;
    let version_id = f.string(obj, "version_id", "")?;
    let label = match f.string(obj, "label", "")?.as_str() {
        "pass" => Label::Pass,
        "fail" => Label::Fail,
        other => {
            return Err(f.err("label", format!("expected \"pass\" or \"fail\", got {other:?}")))
        }
    };
    let fault_id = match obj.get("fault_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(f.err("fault_id", "expected string or null")),
    };
    let contexts_value = obj
        .get("contexts")
        .ok_or_else(|| f.err("contexts", "missing field"))?;
    let items = contexts_value
        .as_array()
        .ok_or_else(|| f.err("contexts", "expected an array"))?;
    let mut contexts = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let prefix = format!("contexts[{i}].");
        let ctx = item
            .as_object()
            .ok_or_else(|| f.err(&format!("contexts[{i}]"), "expected an object"))?;
        f.check_keys(ctx, &CONTEXT_KEYS, &prefix)?;
        let method = f.string(ctx, "method", &prefix)?;
        if method.is_empty() {
            return Err(f.err(&format!("{prefix}method"), "must be non-empty"));
        }
        let param_types = f.string_array(ctx, "param_types", &prefix)?;
        let param_values = f.string_array(ctx, "param_values", &prefix)?;
        if param_types.len() != param_values.len() {
            return Err(f.err(
                &format!("{prefix}param_values"),
                format!(
                    "length {} differs from param_types length {}",
                    param_values.len(),
                    param_types.len()
                ),
            ));
        }
        contexts.push(Context {
            out_type: f.string(ctx, "out_type", &prefix)?,
            out_value: f.string(ctx, "out_value", &prefix)?,
            method,
            param_types,
            param_values,
        });
    }

    Ok(ExecutionTrace {
        test_id,
        suite_id,
        version_id,
        label,
        fault_id,
        contexts,
    })
}

struct FieldReader {
    line: usize,
    mode: ParseMode,
}

impl FieldReader {
    fn err(&self, field: &str, message: impl Into<String>) -> TraceError {
        TraceError::Field {
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn check_keys(
        &self,
        obj: &Map<String, Value>,
        allowed: &[&str],
        prefix: &str,
    ) -> Result<(), TraceError> {
        if self.mode == ParseMode::Lenient {
            return Ok(());
        }
        // Report the first unknown key in the record's own order.
        match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(self.err(&format!("{prefix}{k}"), "unknown field")),
            None => Ok(()),
        }
    }

    fn string(
        &self,
        obj: &Map<String, Value>,
        key: &str,
        prefix: &str,
    ) -> Result<String, TraceError> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.err(&format!("{prefix}{key}"), "expected a string")),
            None => Err(self.err(&format!("{prefix}{key}"), "missing field")),
        }
    }

    fn string_array(
        &self,
        obj: &Map<String, Value>,
        key: &str,
        prefix: &str,
    ) -> Result<Vec<String>, TraceError> {
        let name = format!("{prefix}{key}");
        let arr = match obj.get(key) {
            Some(Value::Array(a)) => a,
            Some(_) => return Err(self.err(&name, "expected an array of strings")),
            None => return Err(self.err(&name, "missing field")),
        };
        arr.iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| self.err(&format!("{name}[{i}]"), "expected a string"))
            })
            .collect()
    }
}

/// Encode one trace as a single JSON line (no trailing newline).
pub fn serialize_trace(trace: &ExecutionTrace) -> String {
    // Derived Serialize on plain strings and vectors cannot fail.
    serde_json::to_string(trace).expect("trace serialization is infallible")
}

pub fn write_traces<'a, W: Write>(
    mut writer: W,
    traces: impl IntoIterator<Item = &'a ExecutionTrace>,
) -> std::io::Result<()> {
    for t in traces {
        writer.write_all(serialize_trace(t).as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
