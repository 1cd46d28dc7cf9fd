//! Subcommand implementations. Each writes its files, a run manifest beside
//! them, and `key=value` summary lines on stdout.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use rayon::prelude::*;
use tracerank_core::embedding::read_vectors;
use tracerank_core::harness::{balance_pool, base_suite_id, train_models, METRIC_FFR};
use tracerank_core::preprocess::{read_streams, write_streams};
use tracerank_core::prioritize::write_rankings;
use tracerank_core::seed::derive_seed;
use tracerank_core::trace_model::group_into_suites;
use tracerank_core::{
    classifier_tp, combined_tp, diversification_tp, export_vectors, greedy_coverage_tp,
    median_of_runs, parse_trace_file, random_tp, run_experiment, synth_corpus, to_token_streams,
    train_failure_model, Corpus, CoverageMatrix, EmbeddingBackend, ExecutionTrace, FailureModel,
    Granularity, LabeledVector, OneHotBackend, ParseMode, Ranking, SelectorModel, Strategy,
    TestVector, TokenStreams, Vocabulary,
};

use crate::args::{
    Backend, Cli, Command, EmbedCmd, EvaluateCmd, PreprocessCmd, PrioritizeCmd, ReportCmd,
    SynthCmd, TrainCmd,
};
use crate::config::{resolve, FileConfig, Flags, RunConfig, SEED_ENV};
use crate::error::{Invariant, Usage};
use crate::manifest::{self, dir_of};
use crate::pca::project_2d;

/// Resolve the effective configuration, then print it or run the command.
pub fn run(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let flags = flags_of(&cli.command);
    let env_seed = std::env::var(SEED_ENV).ok();
    let config = resolve(cli, &flags, &file, env_seed.as_deref())?;
    config.validate()?;
    if cli.print_config {
        print!("{}", config.render());
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Invariant(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth(c) => synth(c, &config),
        Command::Preprocess(c) => preprocess(c, &config),
        Command::Embed(c) => embed(c, &config),
        Command::Train(c) => train(c, &config),
        Command::Prioritize(c) => prioritize(c, &config),
        Command::Evaluate(c) => evaluate(c, &config),
        Command::Report(c) => report(c, &config),
    })
}

fn flags_of(command: &Command) -> Flags<'_> {
    match command {
        Command::Synth(c) => Flags {
            embed: Some(&c.embed),
            corpus: Some(&c.corpus),
            ..Flags::default()
        },
        Command::Preprocess(c) => Flags {
            pre: Some(&c.pre),
            ..Flags::default()
        },
        Command::Embed(c) => Flags {
            pre: Some(&c.pre),
            embed: Some(&c.embed),
            ..Flags::default()
        },
        Command::Train(c) => Flags {
            pre: Some(&c.pre),
            embed: Some(&c.embed),
            model: Some(&c.model),
            experiment: Some(&c.experiment),
            corpus: None,
        },
        Command::Prioritize(c) => Flags {
            pre: Some(&c.pre),
            embed: Some(&c.embed),
            ..Flags::default()
        },
        Command::Evaluate(c) => Flags {
            pre: Some(&c.pre),
            embed: Some(&c.embed),
            model: Some(&c.model),
            experiment: Some(&c.experiment),
            corpus: None,
        },
        Command::Report(c) => Flags {
            pre: Some(&c.pre),
            embed: Some(&c.embed),
            ..Flags::default()
        },
    }
}

fn parse_mode(config: &RunConfig) -> ParseMode {
    if config.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir_of(path))?;
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
}

fn read_traces(path: &Path, config: &RunConfig) -> Result<Vec<ExecutionTrace>> {
    parse_trace_file(open(path)?, parse_mode(config)).with_context(|| format!("traces {}", path.display()))
}

/// Traces of `path`, restricted to one suite when asked.
fn read_suite(path: &Path, suite: Option<&str>, config: &RunConfig) -> Result<Vec<ExecutionTrace>> {
    let mut traces = read_traces(path, config)?;
    if let Some(id) = suite {
        traces.retain(|t| t.suite_id == id);
        if traces.is_empty() {
            bail!("traces {}: no suite `{id}`", path.display());
        }
    }
    Ok(traces)
}

fn load_vectors(path: &Path) -> Result<Vec<TestVector>> {
    read_vectors(open(path)?).with_context(|| format!("vectors {}", path.display()))
}

fn load_corpus(dir: &Path, config: &RunConfig) -> Result<Corpus> {
    Corpus::load(dir, parse_mode(config)).with_context(|| format!("corpus {}", dir.display()))
}

fn load_model(path: &Path) -> Result<FailureModel> {
    FailureModel::read_json(open(path)?).with_context(|| format!("model {}", path.display()))
}

/// Test ids must be unique when vectors are matched to traces by id.
fn unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            bail!("test_id `{id}` appears in several suites; vectors are keyed by test_id alone (pick one with --suite)");
        }
    }
    Ok(())
}

/// Match external vectors to `ids`, in order; both sides must agree.
fn match_vectors(ids: &[&str], vectors: Vec<TestVector>) -> Result<Vec<TestVector>> {
    let mut by_id: BTreeMap<String, TestVector> = vectors.into_iter().map(|v| (v.test_id.clone(), v)).collect();
    let out = ids
        .iter()
        .map(|id| by_id.remove(*id).with_context(|| format!("no vector for test `{id}`")))
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = by_id.keys().next() {
        bail!("vector for unknown test `{extra}`");
    }
    Ok(out)
}

fn embed_streams(streams: &[TokenStreams], config: &RunConfig) -> Result<Vec<TestVector>> {
    let backend: Box<dyn EmbeddingBackend> = match config.backend {
        Backend::Hashed => Box::new(config.hashed_backend()),
        Backend::Onehot => Box::new(OneHotBackend::new(Vocabulary::from_streams(streams))),
        Backend::External => return Err(Usage("the external backend needs --vectors".into()).into()),
    };
    Ok(streams.par_iter().map(|s| backend.embed(s)).collect())
}

/// Vectors for `traces`: external ones when given, otherwise embedded.
fn vectors_for(traces: &[&ExecutionTrace], external: Option<&Path>, config: &RunConfig) -> Result<Vec<TestVector>> {
    match external {
        Some(path) => {
            let ids: Vec<&str> = traces.iter().map(|t| t.test_id.as_str()).collect();
            unique_ids(ids.iter().copied())?;
            match_vectors(&ids, load_vectors(path)?)
        }
        None => {
            let pre = config.preprocess();
            let streams: Vec<TokenStreams> = traces.par_iter().map(|t| to_token_streams(t, &pre)).collect();
            embed_streams(&streams, config)
        }
    }
}

fn synth(cmd: &SynthCmd, config: &RunConfig) -> Result<()> {
    let corpus = synth_corpus(&config.corpus())?.prepare()?;
    corpus.save(&cmd.out).with_context(|| format!("cannot write corpus {}", cmd.out.display()))?;
    manifest::write(&cmd.out, "synth", config, &[], &[&cmd.out])?;
    let traces = corpus.traces().count();
    println!("versions={}", corpus.versions.len());
    println!("suites={}", corpus.versions.iter().map(|v| v.suites.len()).sum::<usize>());
    println!("traces={traces}");
    println!("faults={}", corpus.registry.len());
    println!("failing={}", corpus.traces().filter(|t| t.label.is_fail()).count());
    Ok(())
}

fn preprocess(cmd: &PreprocessCmd, config: &RunConfig) -> Result<()> {
    let traces = read_suite(&cmd.traces, cmd.suite.as_deref(), config)?;
    let pre = config.preprocess();
    let streams: Vec<TokenStreams> = traces.par_iter().map(|t| to_token_streams(t, &pre)).collect();
    let mut w = create(&cmd.out)?;
    write_streams(&mut w, &streams)?;
    w.flush()?;
    manifest::write(dir_of(&cmd.out), "preprocess", config, &[&cmd.traces], &[&cmd.out])?;
    println!("traces={}", traces.len());
    println!("max_length={}", streams.iter().map(TokenStreams::len).max().unwrap_or(0));
    Ok(())
}

fn embed(cmd: &EmbedCmd, config: &RunConfig) -> Result<()> {
    let (ids, streams, input): (Vec<String>, Option<Vec<TokenStreams>>, &Path) = match (&cmd.traces, &cmd.streams) {
        (Some(path), _) => {
            let traces = read_suite(path, cmd.suite.as_deref(), config)?;
            let pre = config.preprocess();
            let streams: Vec<TokenStreams> = traces.par_iter().map(|t| to_token_streams(t, &pre)).collect();
            (traces.into_iter().map(|t| t.test_id).collect(), Some(streams), path)
        }
        (None, Some(path)) => {
            let streams = read_streams(open(path)?).with_context(|| format!("streams {}", path.display()))?;
            (streams.iter().map(|s| s.source_test_id.clone()).collect(), Some(streams), path)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    unique_ids(ids.iter().map(String::as_str))?;
    let vectors = match (config.backend, &cmd.vectors) {
        (Backend::External, Some(path)) => {
            let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
            match_vectors(&ids, load_vectors(path)?)?
        }
        (Backend::External, None) => return Err(Usage("the external backend needs --vectors".into()).into()),
        (_, Some(_)) => return Err(Usage("--vectors is only used with --backend external".into()).into()),
        (_, None) => embed_streams(streams.as_deref().unwrap_or_default(), config)?,
    };
    let mut w = create(&cmd.out)?;
    export_vectors(&mut w, &vectors)?;
    w.flush()?;
    let mut inputs = vec![input];
    inputs.extend(cmd.vectors.as_deref());
    manifest::write(dir_of(&cmd.out), "embed", config, &inputs, &[&cmd.out])?;
    println!("vectors={}", vectors.len());
    println!("dimension={}", vectors.first().map_or(0, TestVector::dim));
    println!("backend={}", config.backend.as_str());
    Ok(())
}

fn train(cmd: &TrainCmd, config: &RunConfig) -> Result<()> {
    let mut outputs: Vec<&Path> = vec![&cmd.model_out];
    let input: &Path;
    if let Some(dir) = &cmd.corpus {
        input = dir;
        let corpus = load_corpus(dir, config)?;
        let mut exp = config.experiment();
        if cmd.selector_out.is_some() && !exp.strategies.contains(&Strategy::Combined) {
            exp.strategies.push(Strategy::Combined);
        }
        let models = train_models(&corpus, &exp)?;
        let mut w = create(&cmd.model_out)?;
        models.failure.write_json(&mut w)?;
        w.flush()?;
        if let (Some(path), Some(selector)) = (&cmd.selector_out, &models.selector) {
            let mut w = create(path)?;
            selector.write_json(&mut w)?;
            w.flush()?;
            outputs.push(path);
        }
        println!("train_size={}", models.train_size);
        println!("validation_size={}", models.validation_size);
        if let Some(a) = models.validation_accuracy {
            println!("validation_accuracy={a:.6}");
        }
        if let Some(s) = &models.selector_summary {
            println!("selector_examples={}", s.training_examples);
        }
        println!("final_loss={:.6}", models.failure.meta.final_loss);
    } else {
        let path = cmd.traces.as_deref().expect("clap requires one input");
        input = path;
        let traces = read_traces(path, config)?;
        let refs: Vec<&ExecutionTrace> = traces.iter().collect();
        let kept: Vec<&ExecutionTrace> = if cmd.balance {
            balance_pool(&refs, derive_seed(config.seed, "balance", 0))?
                .into_iter()
                .map(|i| refs[i])
                .collect()
        } else {
            refs
        };
        let vectors = vectors_for(&kept, cmd.vectors.as_deref(), config)?;
        let data: Vec<LabeledVector> = vectors
            .into_iter()
            .zip(&kept)
            .map(|(v, t)| LabeledVector::new(v, t.label))
            .collect();
        let model = train_failure_model(&data, &config.hyperparams(), derive_seed(config.seed, "failure-model", 0))?;
        let mut w = create(&cmd.model_out)?;
        model.write_json(&mut w)?;
        w.flush()?;
        let fails = data.iter().filter(|d| d.label.is_fail()).count();
        println!("examples={}", data.len());
        println!("fail={fails}");
        println!("pass={}", data.len() - fails);
        println!("final_loss={:.6}", model.meta.final_loss);
    }
    let mut inputs = vec![input];
    inputs.extend(cmd.vectors.as_deref());
    manifest::write(dir_of(&cmd.model_out), "train", config, &inputs, &outputs)?;
    Ok(())
}

struct SuiteInput {
    suite_id: String,
    version_id: String,
    vectors: Vec<TestVector>,
}

fn rank_suite(
    strategy: Strategy,
    suite: &SuiteInput,
    selector: Option<&SelectorModel>,
    coverage: Option<&CoverageMatrix>,
    seed: u64,
) -> Result<Ranking> {
    let ids: Vec<&str> = suite.vectors.iter().map(|v| v.test_id.as_str()).collect();
    let sid = suite.suite_id.as_str();
    let seed = derive_seed(seed, &format!("{}/{}", suite.version_id, suite.suite_id), 0);
    let ranking = match strategy {
        Strategy::Classifier => classifier_tp(sid, &suite.vectors)?,
        Strategy::Diversification => diversification_tp(sid, &suite.vectors)?,
        Strategy::Combined => combined_tp(sid, &suite.vectors, selector.expect("checked by caller"))?,
        Strategy::GreedyLine | Strategy::GreedyBranch => {
            let mut m = coverage.expect("checked by caller").restrict_to(ids.iter().copied());
            m.suite_id = suite.suite_id.clone();
            greedy_coverage_tp(&m, seed)?
        }
        Strategy::Random => random_tp(sid, &ids, seed)?,
    };
    ranking
        .ensure_permutation(ids.iter().copied())
        .map_err(|e| Invariant(e.to_string()))?;
    Ok(ranking)
}

fn prioritize(cmd: &PrioritizeCmd, config: &RunConfig) -> Result<()> {
    let strategy = cmd.strategy;
    let selector = match (strategy, &cmd.selector) {
        (Strategy::Combined, None) => return Err(Usage("the combined strategy needs --selector".into()).into()),
        (_, Some(p)) => Some(SelectorModel::read_json(open(p)?).with_context(|| format!("selector {}", p.display()))?),
        (_, None) => None,
    };
    let coverage = match (strategy, &cmd.coverage) {
        (Strategy::GreedyLine | Strategy::GreedyBranch, None) => {
            return Err(Usage(format!("the {strategy} strategy needs --coverage")).into())
        }
        (Strategy::GreedyLine | Strategy::GreedyBranch, Some(p)) => {
            let g = if strategy == Strategy::GreedyLine { Granularity::Line } else { Granularity::Branch };
            Some(CoverageMatrix::from_csv(open(p)?, "", g).with_context(|| format!("coverage {}", p.display()))?)
        }
        _ => None,
    };
    let model = cmd.model.as_deref().map(load_model).transpose()?;

    let mut suites: Vec<SuiteInput> = match &cmd.traces {
        Some(path) => {
            let traces = read_suite(path, cmd.suite.as_deref(), config)?;
            if cmd.vectors.is_some() {
                unique_ids(traces.iter().map(|t| t.test_id.as_str()))?;
            }
            let grouped = group_into_suites(traces).with_context(|| format!("traces {}", path.display()))?;
            let mut external: Option<BTreeMap<String, TestVector>> = cmd
                .vectors
                .as_deref()
                .map(|p| load_vectors(p).map(|vs| vs.into_iter().map(|v| (v.test_id.clone(), v)).collect()))
                .transpose()?;
            let mut out = Vec::new();
            for suite in &grouped {
                let refs: Vec<&ExecutionTrace> = suite.traces.iter().collect();
                let vectors = match external.as_mut() {
                    Some(map) => refs
                        .iter()
                        .map(|t| map.remove(&t.test_id).with_context(|| format!("no vector for test `{}`", t.test_id)))
                        .collect::<Result<Vec<_>>>()?,
                    None => vectors_for(&refs, None, config)?,
                };
                out.push(SuiteInput {
                    suite_id: suite.suite_id.clone(),
                    version_id: suite.version_id.clone(),
                    vectors,
                });
            }
            if let Some(extra) = external.and_then(|m| m.into_keys().next()) {
                bail!("vector for unknown test `{extra}`");
            }
            out
        }
        None => {
            let path = cmd.vectors.as_deref().expect("clap requires one input");
            let suite_id = cmd.suite.clone().unwrap_or_else(|| {
                path.file_stem().map_or_else(|| "suite".into(), |s| s.to_string_lossy().into_owned())
            });
            vec![SuiteInput {
                suite_id,
                version_id: String::new(),
                vectors: load_vectors(path)?,
            }]
        }
    };
    if let Some(m) = &model {
        for suite in &mut suites {
            for v in &mut suite.vectors {
                let p = m
                    .predict(&v.values)
                    .with_context(|| format!("scoring test `{}`", v.test_id))?;
                v.p_fail = Some(p);
            }
        }
    }
    let rankings = suites
        .par_iter()
        .map(|s| rank_suite(strategy, s, selector.as_ref(), coverage.as_ref(), config.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(&cmd.out)?;
    write_rankings(&mut w, &rankings)?;
    w.flush()?;
    let mut inputs: Vec<&Path> = Vec::new();
    for p in [&cmd.traces, &cmd.vectors, &cmd.model, &cmd.selector, &cmd.coverage].into_iter().flatten() {
        inputs.push(p);
    }
    manifest::write(dir_of(&cmd.out), "prioritize", config, &inputs, &[&cmd.out])?;
    println!("strategy={strategy}");
    println!("suites={}", rankings.len());
    println!("tests={}", rankings.iter().map(Ranking::len).sum::<usize>());
    Ok(())
}

fn evaluate(cmd: &EvaluateCmd, config: &RunConfig) -> Result<()> {
    let corpus = load_corpus(&cmd.corpus, config)?;
    let report = run_experiment(&corpus, &config.experiment())?;
    fs::create_dir_all(&cmd.out)?;
    let report_path = cmd.out.join("report.csv");
    let pairwise_path = cmd.out.join("pairwise.csv");
    let summary_path = cmd.out.join("summary.json");

    let mut w = create(&report_path)?;
    report.write_report_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&pairwise_path)?;
    report.write_pairwise_csv(&mut w)?;
    w.flush()?;

    let mut medians = serde_json::Map::new();
    for metric in [METRIC_FFR, tracerank_core::harness::METRIC_APFD] {
        for &s in &config.strategies {
            if let Some(m) = report.median(metric, s) {
                medians.insert(format!("{metric}.{s}"), m.into());
            }
        }
    }
    let summary = serde_json::json!({
        "train_size": report.train_size,
        "validation_size": report.validation_size,
        "validation_accuracy": report.validation_accuracy,
        "selector": report.selector,
        "medians": medians,
        "empty": report.is_empty(),
    });
    let mut w = create(&summary_path)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    manifest::write(
        &cmd.out,
        "evaluate",
        config,
        &[&cmd.corpus],
        &[&report_path, &pairwise_path, &summary_path],
    )?;

    println!("rows={}", report.rows.len());
    println!("empty={}", report.is_empty());
    for (k, v) in &medians {
        println!("median.{k}={:.6}", v.as_f64().unwrap_or(f64::NAN));
    }
    if let Some(a) = report.validation_accuracy {
        println!("validation_accuracy={a:.6}");
    }
    if let Some(a) = report.selector.as_ref().and_then(|s| s.accuracy) {
        println!("selector_accuracy={a:.6}");
    }
    Ok(())
}

/// `metric,strategy,n,median,mean,min,max` over a metrics CSV.
fn summarize(path: &Path) -> Result<String> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: missing column `{name}`", path.display()))
    };
    let (strategy, metric, value) = (col("strategy")?, col("metric")?, col("value")?);
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), i + 1))?;
        let v: f64 = rec[value]
            .parse()
            .with_context(|| format!("{}: line {}: bad value `{}`", path.display(), i + 2, &rec[value]))?;
        groups
            .entry((rec[metric].to_string(), rec[strategy].to_string()))
            .or_default()
            .push(v);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "strategy", "n", "median", "mean", "min", "max"])?;
    for ((m, s), vs) in &groups {
        let mean = vs.iter().sum::<f64>() / vs.len() as f64;
        let min = vs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w.write_record([
            m.clone(),
            s.clone(),
            vs.len().to_string(),
            format!("{:.6}", median_of_runs(vs)?),
            format!("{mean:.6}"),
            format!("{min:.6}"),
            format!("{max:.6}"),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)?)
}

fn report(cmd: &ReportCmd, config: &RunConfig) -> Result<()> {
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut outputs: Vec<PathBuf> = Vec::new();
    if let Some(path) = &cmd.report {
        inputs.push(path.clone());
        let text = summarize(path)?;
        match &cmd.out {
            Some(out) => {
                fs::create_dir_all(dir_of(out))?;
                fs::write(out, &text).with_context(|| format!("cannot write {}", out.display()))?;
                outputs.push(out.clone());
            }
            None => print!("{text}"),
        }
    }
    if let Some(out) = &cmd.project_2d {
        let rows: Vec<[String; 4]>;
        let vectors: Vec<TestVector>;
        if let Some(path) = &cmd.traces {
            inputs.push(path.clone());
            let traces = read_suite(path, cmd.suite.as_deref(), config)?;
            let refs: Vec<&ExecutionTrace> = traces.iter().collect();
            vectors = vectors_for(&refs, None, config)?;
            rows = traces
                .iter()
                .map(|t| {
                    [
                        t.test_id.clone(),
                        base_suite_id(&t.suite_id).to_string(),
                        t.version_id.clone(),
                        t.label.as_str().to_string(),
                    ]
                })
                .collect();
        } else if let Some(path) = &cmd.vectors {
            inputs.push(path.clone());
            vectors = load_vectors(path)?;
            rows = vectors
                .iter()
                .map(|v| [v.test_id.clone(), String::new(), String::new(), String::new()])
                .collect();
        } else {
            return Err(Usage("--project-2d needs --vectors or --traces".into()).into());
        }
        let points = project_2d(&vectors.iter().map(|v| v.values.clone()).collect::<Vec<_>>());
        let mut w = csv::Writer::from_writer(create(out)?);
        w.write_record(["test_id", "suite_id", "version_id", "label", "pc1", "pc2"])?;
        for (r, p) in rows.iter().zip(&points) {
            w.write_record([
                r[0].as_str(),
                &r[1],
                &r[2],
                &r[3],
                &format!("{:.9}", p[0]),
                &format!("{:.9}", p[1]),
            ])?;
        }
        w.flush()?;
        outputs.push(out.clone());
        println!("projected={}", points.len());
    }
    if let Some(first) = outputs.first() {
        let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
        manifest::write(dir_of(first), "report", config, &ins, &outs)?;
    }
    Ok(())
}

