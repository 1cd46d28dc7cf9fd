//! End-to-end checks of the `tracerank` binary: exit codes, config
//! precedence, manifests and the file formats passed between subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tracerank(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tracerank"));
    cmd.args(args).env_remove("T2V_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    tracerank(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert_eq!(code(&out), 0, "`tracerank {}` failed:\n{}", args.join(" "), stderr(&out));
    stdout(&out)
}

fn value_of(summary: &str, key: &str) -> String {
    summary
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}` in:\n{summary}"))
        .to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn write_vectors(path: &Path, rows: &[(&str, Vec<f64>, f64)]) {
    let text: String = rows
        .iter()
        .map(|(id, v, pf)| {
            serde_json::json!({"test_id": id, "dim": v.len(), "vector": v, "p_fail": pf}).to_string() + "\n"
        })
        .collect();
    fs::write(path, text).unwrap();
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Small corpus shared by the pipeline tests.
fn corpus(dir: &Path) -> PathBuf {
    let out = dir.join("corpus");
    ok(&["--seed", "2", "synth", "--out", p(&out), "--versions", "6", "--suites", "2", "--tests", "8..10"]);
    out
}

#[test]
fn prioritize_vectors_with_classifier() {
    let dir = TempDir::new().unwrap();
    let v = dir.path().join("v.jsonl");
    let r = dir.path().join("r.jsonl");
    write_vectors(
        &v,
        &[("a", vec![1.0, 0.0], 0.2), ("b", vec![0.0, 1.0], 0.9), ("c", vec![1.0, 1.0], 0.5)],
    );
    let summary = ok(&["prioritize", "--strategy", "classifier", "--vectors", p(&v), "--out", p(&r)]);
    assert_eq!(value_of(&summary, "suites"), "1");
    let rankings = jsonl(&r);
    assert_eq!(rankings.len(), 1);
    assert_eq!(rankings[0]["suite_id"], "v");
    assert_eq!(rankings[0]["order"], serde_json::json!(["b", "c", "a"]));
    assert!(dir.path().join("run-manifest.json").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["prioritize", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("Usage"));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn dimension_mismatch_is_a_data_error_naming_the_test() {
    let dir = TempDir::new().unwrap();
    let v = dir.path().join("v.jsonl");
    write_vectors(&v, &[("a", vec![1.0, 0.0], 0.2), ("odd_one", vec![0.0, 1.0, 2.0], 0.9)]);
    let out = run(&["prioritize", "--strategy", "classifier", "--vectors", p(&v), "--out", p(&dir.path().join("r.jsonl"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("odd_one"), "{}", stderr(&out));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "prioritize",
        "--strategy",
        "diversification",
        "--vectors",
        p(&dir.path().join("absent.jsonl")),
        "--out",
        p(&dir.path().join("r.jsonl")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("absent.jsonl"));
}

#[test]
fn combined_without_selector_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let v = dir.path().join("v.jsonl");
    write_vectors(&v, &[("a", vec![1.0, 0.0], 0.2), ("b", vec![0.0, 1.0], 0.9)]);
    let out = run(&["prioritize", "--strategy", "combined", "--vectors", p(&v), "--out", p(&dir.path().join("r.jsonl"))]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn printed_config_round_trips() {
    let dir = TempDir::new().unwrap();
    let first = ok(&["--seed", "11", "--print-config", "evaluate", "--corpus", "c", "--out", "o", "--repeats", "4", "--top-k", "3"]);
    let file = dir.path().join("run.conf");
    fs::write(&file, &first).unwrap();
    let second = ok(&["--config", p(&file), "--print-config", "evaluate", "--corpus", "c", "--out", "o"]);
    assert_eq!(first, second);
    assert_eq!(value_of(&first, "seed"), "11");
    assert_eq!(value_of(&first, "repeats"), "4");
}

#[test]
fn flags_override_file_override_environment() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("run.conf");
    fs::write(&file, "# comment\nseed = 5\ntop-k=2\n").unwrap();
    let seed_with = |extra: &[&str], env: Option<&str>| {
        let mut args = vec!["--print-config"];
        args.extend_from_slice(extra);
        args.extend(["evaluate", "--corpus", "c", "--out", "o"]);
        let mut cmd = tracerank(&args);
        if let Some(e) = env {
            cmd.env("T2V_SEED", e);
        }
        let out = cmd.output().unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        value_of(&stdout(&out), "seed")
    };
    assert_eq!(seed_with(&[], None), "0");
    assert_eq!(seed_with(&[], Some("7")), "7");
    assert_eq!(seed_with(&["--config", p(&file)], Some("7")), "5");
    assert_eq!(seed_with(&["--config", p(&file), "--seed", "3"], Some("7")), "3");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("run.conf");
    fs::write(&file, "sead=5\n").unwrap();
    let out = run(&["--config", p(&file), "--print-config", "evaluate", "--corpus", "c", "--out", "o"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("sead"));
}

#[test]
fn invalid_knob_value_is_a_usage_error() {
    let out = run(&["--print-config", "evaluate", "--corpus", "c", "--out", "o", "--repeats", "0"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn trace_pipeline_round_trip() {
    let dir = TempDir::new().unwrap();
    let corpus = corpus(dir.path());
    let traces = corpus.join("traces").join("v01.jsonl");
    let work = dir.path().join("work");
    let streams = work.join("streams.jsonl");
    let vectors = work.join("vectors.jsonl");
    let model = work.join("model.json");
    let ranked = work.join("ranked.jsonl");

    let pre = ok(&["preprocess", "--traces", p(&traces), "--suite", "S01", "--out", p(&streams)]);
    let n: usize = value_of(&pre, "traces").parse().unwrap();
    assert_eq!(jsonl(&streams).len(), n);

    let emb = ok(&["embed", "--streams", p(&streams), "--out", p(&vectors), "--dimension", "32"]);
    assert_eq!(value_of(&emb, "dimension"), "32");
    let records = jsonl(&vectors);
    assert_eq!(records.len(), n);
    assert!(records.iter().all(|r| r["dim"] == 32));

    // Embedding the traces directly gives the same vectors as going through streams.
    let direct = work.join("direct.jsonl");
    ok(&["embed", "--traces", p(&traces), "--suite", "S01", "--out", p(&direct), "--dimension", "32"]);
    assert_eq!(fs::read(&vectors).unwrap(), fs::read(&direct).unwrap());

    let all = dir.path().join("all.jsonl");
    let text: String = ["v01", "v02", "v03"]
        .iter()
        .map(|v| fs::read_to_string(corpus.join("traces").join(format!("{v}.jsonl"))).unwrap())
        .collect();
    fs::write(&all, text).unwrap();
    let train = ok(&["train", "--traces", p(&all), "--balance", "--model-out", p(&model), "--epochs", "300"]);
    assert_eq!(value_of(&train, "fail"), value_of(&train, "pass"));

    let pr = ok(&["prioritize", "--strategy", "classifier", "--traces", p(&traces), "--model", p(&model), "--out", p(&ranked)]);
    let rankings = jsonl(&ranked);
    assert_eq!(value_of(&pr, "suites"), rankings.len().to_string());
    let total: usize = rankings.iter().map(|r| r["order"].as_array().unwrap().len()).sum();
    assert_eq!(total, fs::read_to_string(&traces).unwrap().lines().count());
    assert!(rankings.iter().any(|r| r["suite_id"] == "S01.mut"));

    let manifest: Value = serde_json::from_str(&fs::read_to_string(work.join("run-manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "prioritize");
    let inputs = manifest["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 2, "traces and model");
    assert!(inputs.iter().all(|d| d["sha256"].as_str().unwrap().len() == 64));
}

#[test]
fn external_vectors_and_greedy_coverage() {
    let dir = TempDir::new().unwrap();
    let corpus = corpus(dir.path());
    let traces = corpus.join("traces").join("v02.jsonl");
    let vectors = dir.path().join("v.jsonl");
    ok(&["embed", "--traces", p(&traces), "--suite", "S01", "--out", p(&vectors), "--backend", "onehot"]);
    let external = dir.path().join("ext.jsonl");
    ok(&["embed", "--traces", p(&traces), "--suite", "S01", "--backend", "external", "--vectors", p(&vectors), "--out", p(&external)]);
    assert_eq!(jsonl(&vectors), jsonl(&external));

    let ranked = dir.path().join("greedy.jsonl");
    let coverage = corpus.join("coverage").join("v02.csv");
    ok(&["prioritize", "--strategy", "greedy_line", "--traces", p(&traces), "--suite", "S01", "--coverage", p(&coverage), "--out", p(&ranked)]);
    let rankings = jsonl(&ranked);
    assert_eq!(rankings.len(), 1);
    assert_eq!(rankings[0]["suite_id"], "S01");

    // Duplicate ids across suites cannot be matched to id-keyed vectors.
    let out = run(&["prioritize", "--strategy", "classifier", "--traces", p(&traces), "--vectors", p(&vectors), "--out", p(&ranked)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("--suite"));
    ok(&["prioritize", "--strategy", "diversification", "--traces", p(&traces), "--suite", "S01", "--vectors", p(&vectors), "--out", p(&ranked)]);
    assert_eq!(jsonl(&ranked).len(), 1);

    let out = run(&["embed", "--traces", p(&traces), "--suite", "S99", "--out", p(&vectors)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("S99"));
}

#[test]
fn evaluate_then_report() {
    let dir = TempDir::new().unwrap();
    let corpus = corpus(dir.path());
    let out = dir.path().join("eval");
    let summary = ok(&[
        "--seed", "2", "evaluate", "--corpus", p(&corpus), "--out", p(&out), "--repeats", "2", "--epochs", "200",
        "--strategies", "classifier,diversification,random",
    ]);
    assert_eq!(value_of(&summary, "empty"), "false");
    for f in ["report.csv", "pairwise.csv", "summary.json", "run-manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let pairwise = fs::read_to_string(out.join("pairwise.csv")).unwrap();
    let rows = pairwise.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows % 3, 0, "one row per strategy pair and metric:\n{pairwise}");

    let table = ok(&["report", "--report", p(&out.join("report.csv"))]);
    let header = table.lines().next().unwrap();
    assert_eq!(header, "metric,strategy,n,median,mean,min,max");
    assert!(table.lines().any(|l| l.contains(",random,")));

    let vectors = dir.path().join("v.jsonl");
    let v01 = corpus.join("traces").join("v01.jsonl");
    ok(&["embed", "--traces", p(&v01), "--suite", "S02", "--out", p(&vectors), "--dimension", "16"]);
    let csv = dir.path().join("pca.csv");
    let proj = ok(&["report", "--project-2d", p(&csv), "--vectors", p(&vectors)]);
    let lines: Vec<String> = fs::read_to_string(&csv).unwrap().lines().map(str::to_string).collect();
    assert_eq!(lines[0], "test_id,suite_id,version_id,label,pc1,pc2");
    assert_eq!(value_of(&proj, "projected"), (lines.len() - 1).to_string());

    let proj = ok(&["report", "--project-2d", p(&csv), "--traces", p(&v01)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(value_of(&proj, "projected"), (text.lines().count() - 1).to_string());
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(3).is_some_and(|label| label == "pass" || label == "fail")));
}
