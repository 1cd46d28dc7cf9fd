//! Acceptance checks. Prints one `[PASS]` or `[FAIL]` line per criterion with
//! the measured values and the wall-clock time against its budget, and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use tracerank_core::harness::{embed_suite, is_mutant_suite, IntRange};
use tracerank_core::metrics::WilcoxonMethod;
use tracerank_core::preprocess::default_denylist;
use tracerank_core::seed::{rng, Rng as SeedRng};
use tracerank_core::{
    apfd, balance_dataset, diversification_tp, ffr, greedy_coverage_tp, median_of_runs,
    run_experiment, split_versions, synth_corpus, to_token_streams, wilcoxon_signed_rank, Context,
    CorpusConfig, CoverageMatrix, ExecutionTrace, ExperimentConfig, FaultMatrix, FaultProfile,
    Granularity, HashedBackend, Label, PreprocessConfig, Ranking, Strategy,
};

const SEED: u64 = 1;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "metric formulas match a brute-force oracle", budget: secs(5), check: metric_formulas },
        Criterion { name: "fail-first ordering attains maximal APFD", budget: secs(30), check: apfd_optimality },
        Criterion { name: "greedy coverage matches a naive oracle", budget: secs(5), check: greedy_equivalence },
        Criterion { name: "diversification ranks planted anomalies first", budget: secs(10), check: anomaly_detection },
        Criterion { name: "classifier beats random on history-like faults", budget: secs(120), check: history_classifier },
        Criterion { name: "combined strategy tracks the better strategy", budget: secs(120), check: mixed_combined },
        Criterion { name: "balancing and split properties", budget: secs(1), check: balance_split },
        Criterion { name: "Wilcoxon signed-rank conformance", budget: secs(5), check: wilcoxon_conformance },
        Criterion { name: "synth then evaluate is byte-reproducible", budget: secs(180), check: cli_determinism },
        Criterion { name: "preprocessing guards hold on random traces", budget: secs(10), check: preprocessing_guards },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over the time budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "[{}] {}: {} ({:.2}s of {}s)",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn ranking(order: &[String]) -> Ranking {
    Ranking {
        suite_id: "S".into(),
        strategy: Strategy::Random,
        ordered_test_ids: order.to_vec(),
        scores: None,
        seed: None,
    }
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("t{i}")).collect()
}

fn random_subset(tests: &[String], r: &mut SeedRng) -> BTreeSet<String> {
    loop {
        let s: BTreeSet<String> = tests.iter().filter(|_| r.gen_bool(0.3)).cloned().collect();
        if !s.is_empty() {
            return s;
        }
    }
}

fn oracle_ffr(order: &[String], failing: &BTreeSet<String>) -> f64 {
    let first = order.iter().position(|t| failing.contains(t)).expect("a failing test") + 1;
    100.0 * first as f64 / order.len() as f64
}

fn oracle_apfd(order: &[String], faults: &[BTreeSet<String>]) -> f64 {
    let n = order.len() as f64;
    let m = faults.len() as f64;
    let mut sum = 0usize;
    for f in faults {
        let mut tf = 0;
        for (i, t) in order.iter().enumerate() {
            if f.contains(t) {
                tf = i + 1;
                break;
            }
        }
        sum += tf;
    }
    100.0 * (1.0 - sum as f64 / (n * m) + 1.0 / (2.0 * n))
}

fn matrix(faults: &[BTreeSet<String>]) -> FaultMatrix {
    FaultMatrix::from_pairs(
        faults
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.iter().map(move |t| (format!("f{i}"), t.clone()))),
    )
}

fn metric_formulas() -> Outcome {
    let mut r = rng(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.gen_range(1..=60);
        let mut order = ids(n);
        order.shuffle(&mut r);
        let failing = random_subset(&order, &mut r);
        let faults: Vec<BTreeSet<String>> = (0..r.gen_range(1..=5)).map(|_| random_subset(&order, &mut r)).collect();
        let rk = ranking(&order);
        let failing_v: Vec<&String> = failing.iter().collect();
        let got_ffr = ffr(&rk, &failing_v).map_err(|e| e.to_string())?;
        let got_apfd = apfd(&rk, &matrix(&faults)).map_err(|e| e.to_string())?;
        worst = worst
            .max((got_ffr - oracle_ffr(&order, &failing)).abs())
            .max((got_apfd - oracle_apfd(&order, &faults)).abs());
    }
    let detail = format!("1000 instances, max |error| {worst:.1e} (tolerance 1e-9)");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Failing tests first, each next test the one detecting the most faults
/// not yet detected (lowest index on ties), passing tests last.
fn fail_first(tests: &[String], faults: &[BTreeSet<String>]) -> Vec<String> {
    let mut remaining: Vec<&String> = tests.iter().collect();
    let mut undetected: Vec<&BTreeSet<String>> = faults.iter().collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let gain = |t: &String| undetected.iter().filter(|f| f.contains(t)).count();
        let best = (0..remaining.len()).max_by_key(|&i| (gain(remaining[i]), std::cmp::Reverse(i))).unwrap();
        let t = remaining.remove(best);
        undetected.retain(|f| !f.contains(t));
        order.push(t.clone());
    }
    order
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Every way to give `m` faults non-empty detecting sets over `n` tests.
fn all_fault_sets(n: usize, m: usize) -> Vec<Vec<u32>> {
    let masks: Vec<u32> = (1..(1u32 << n)).collect();
    let mut out: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                masks.iter().map(move |&mk| {
                    let mut p = prefix.clone();
                    p.push(mk);
                    p
                })
            })
            .collect();
    }
    out
}

fn apfd_optimality() -> Outcome {
    let mut r = rng(SEED);
    let mut suites = 0usize;
    for n in 1..=7usize {
        let tests = ids(n);
        let perms = permutations(n);
        for m in 1..=3usize {
            let masks: Vec<Vec<u32>> = if n <= 4 {
                all_fault_sets(n, m)
            } else {
                (0..if n == 7 { 60 } else { 150 })
                    .map(|_| (0..m).map(|_| r.gen_range(1..(1u32 << n))).collect())
                    .collect()
            };
            for mk in masks {
                let faults: Vec<BTreeSet<String>> = mk
                    .iter()
                    .map(|&b| (0..n).filter(|i| b >> i & 1 == 1).map(|i| tests[i].clone()).collect())
                    .collect();
                let fm = matrix(&faults);
                let ff = apfd(&ranking(&fail_first(&tests, &faults)), &fm).map_err(|e| e.to_string())?;
                for p in &perms {
                    let order: Vec<String> = p.iter().map(|&i| tests[i].clone()).collect();
                    let v = apfd(&ranking(&order), &fm).map_err(|e| e.to_string())?;
                    if v > ff + 1e-9 {
                        return Err(format!("n={n}, faults {faults:?}: {order:?} scores {v} > fail-first {ff}"));
                    }
                }
                suites += 1;
            }
        }
    }
    Ok(format!(
        "{suites} suites (all fault assignments for n <= 4, sampled for n = 5..7), every permutation enumerated"
    ))
}

fn naive_greedy(tests: &[(String, BTreeSet<String>)], seed: u64) -> Vec<String> {
    let mut r = rng(seed);
    let mut remaining: Vec<usize> = (0..tests.len()).collect();
    let mut covered: BTreeSet<&String> = BTreeSet::new();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let mut gains: Vec<usize> = remaining
            .iter()
            .map(|&i| tests[i].1.iter().filter(|u| !covered.contains(u)).count())
            .collect();
        if gains.iter().all(|&g| g == 0) && !covered.is_empty() {
            covered.clear();
            gains = remaining.iter().map(|&i| tests[i].1.len()).collect();
        }
        let best = *gains.iter().max().unwrap();
        let tied: Vec<usize> = (0..remaining.len()).filter(|&k| gains[k] == best).collect();
        let pick = if tied.len() > 1 { tied[r.gen_range(0..tied.len())] } else { tied[0] };
        let i = remaining.remove(pick);
        covered.extend(tests[i].1.iter());
        order.push(tests[i].0.clone());
    }
    order
}

fn greedy_equivalence() -> Outcome {
    let mut r = rng(SEED);
    for case in 0..200 {
        let n_tests = r.gen_range(1..=10);
        let n_units = r.gen_range(1..=30);
        let density = r.gen_range(0.0..0.5);
        let tests: Vec<(String, BTreeSet<String>)> = (0..n_tests)
            .map(|i| {
                let units = (0..n_units).filter(|_| r.gen_bool(density)).map(|u| format!("u{u}")).collect();
                (format!("t{i}"), units)
            })
            .collect();
        let seed: u64 = r.gen();
        let m = CoverageMatrix::new("S", Granularity::Line, tests.clone());
        let got = greedy_coverage_tp(&m, seed).map_err(|e| e.to_string())?.ordered_test_ids;
        let want = naive_greedy(&tests, seed);
        if got != want {
            return Err(format!("case {case}: {got:?} != {want:?}"));
        }
    }
    Ok("200 random matrices, orders identical".into())
}

fn anomaly_detection() -> Outcome {
    let config = CorpusConfig {
        n_versions: 20,
        suites_per_version: 10,
        fault_profile: FaultProfile::AnomalyLike,
        seeded_faults_per_suite: IntRange::new(0, 0),
        seed: SEED,
        ..CorpusConfig::default()
    };
    if config.anomaly_margin < 3.0 {
        return Err("margin below 3 sigma".into());
    }
    let corpus = synth_corpus(&config).map_err(|e| e.to_string())?;
    let backend = HashedBackend::new(config.dimension, config.embedding_seed).with_positional(config.positional);
    let pre = PreprocessConfig::default();
    let (mut total, mut first) = (0usize, 0usize);
    for suite in corpus.versions.iter().flat_map(|v| &v.suites).filter(|s| !is_mutant_suite(&s.suite_id)) {
        let vectors = embed_suite(suite, &backend, &pre);
        let rk = diversification_tp(&suite.suite_id, &vectors).map_err(|e| e.to_string())?;
        let top = suite.get(&rk.ordered_test_ids[0]).expect("ranked test exists");
        total += 1;
        first += usize::from(top.label == Label::Fail);
    }
    let share = first as f64 / total as f64;
    let detail = format!(
        "{first}/{total} suites rank the failing test first ({:.1}%, need >= 95%; margin {} sigma)",
        100.0 * share,
        config.anomaly_margin
    );
    if total == 200 && share >= 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn history_classifier() -> Outcome {
    let config = CorpusConfig {
        fault_profile: FaultProfile::HistoryLike,
        seed: SEED,
        ..CorpusConfig::default()
    };
    let corpus = synth_corpus(&config).map_err(|e| e.to_string())?;
    let exp = ExperimentConfig {
        strategies: vec![Strategy::Classifier, Strategy::Random],
        ..ExperimentConfig::for_corpus(&config)
    };
    let report = run_experiment(&corpus, &exp).map_err(|e| e.to_string())?;
    let cls = report.values("ffr", Strategy::Classifier);
    let rnd = report.values("ffr", Strategy::Random);
    let mc = median_of_runs(&cls).map_err(|e| e.to_string())?;
    let mr = median_of_runs(&rnd).map_err(|e| e.to_string())?;
    // Positive effect: random's FFR exceeds the classifier's.
    let stat = wilcoxon_signed_rank(&rnd, &cls).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} suites, classifier median FFR {mc:.2} (<= 25), random {mr:.2} (40..60), p = {:.2e} (< 0.05), effect {:.3} (>= 0.5)",
        cls.len(),
        stat.p_value,
        stat.effect_size
    );
    if config.suites_per_version >= 10 && mc <= 25.0 && (40.0..=60.0).contains(&mr) && stat.p_value < 0.05 && stat.effect_size >= 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mixed_combined() -> Outcome {
    let config = CorpusConfig {
        fault_profile: FaultProfile::Mixed,
        seed: SEED,
        ..CorpusConfig::default()
    };
    let corpus = synth_corpus(&config).map_err(|e| e.to_string())?;
    let exp = ExperimentConfig {
        strategies: vec![Strategy::Classifier, Strategy::Diversification, Strategy::Combined],
        ..ExperimentConfig::for_corpus(&config)
    };
    let report = run_experiment(&corpus, &exp).map_err(|e| e.to_string())?;
    let med = |s| report.median("ffr", s).ok_or_else(|| format!("no FFR rows for {s}"));
    let (mc, md, mx) = (med(Strategy::Classifier)?, med(Strategy::Diversification)?, med(Strategy::Combined)?);
    let selector = report.selector.as_ref().ok_or("no selector summary")?;
    let acc = selector.accuracy.ok_or("selector was not evaluated")?;
    let detail = format!(
        "combined median FFR {mx:.2} vs classifier {mc:.2} / diversification {md:.2} (<= min + 5), selector accuracy {acc:.3} over {} suites (>= 0.80)",
        selector.evaluated
    );
    if mx <= mc.min(md) + 5.0 && acc >= 0.8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn balance_split() -> Outcome {
    let config = CorpusConfig {
        suites_per_version: 3,
        tests_per_suite: IntRange::new(10, 14),
        seed: SEED,
        ..CorpusConfig::default()
    };
    let corpus = synth_corpus(&config).map_err(|e| e.to_string())?;
    let corpus = balance_dataset(corpus).map_err(|e| e.to_string())?;
    let pool = corpus.balanced_pool.as_ref().ok_or("no balanced pool")?;
    let fails = pool.iter().filter(|k| corpus.trace(k).is_some_and(|t| t.label.is_fail())).count();
    let passes = pool.len() - fails;
    let split = split_versions(&corpus).map_err(|e| e.to_string())?;
    let ids: Vec<String> = corpus.version_ids().map(str::to_string).collect();
    let last5 = ids[ids.len() - 5..].to_vec();
    let (nt, nv) = (split.train.len(), split.validation.len());
    let off = (nt as f64 - 0.8 * (nt + nv) as f64).abs();
    let disjoint = split.train.iter().all(|k| !split.validation.contains(k));
    let detail = format!(
        "{fails} fail / {passes} pass, test versions {}..{}, train {nt} / validation {nv} ({off:.1} traces from 80/20)",
        last5[0], last5[4]
    );
    if fails == passes && split.test_versions == last5 && off <= 1.0 && disjoint {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn wilcoxon_conformance() -> Outcome {
    // (differences, hand-computed two-sided exact p)
    let cases: [(&[f64], f64); 5] = [
        (&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2.0 / 64.0),
        (&[1.0, 2.0, 3.0, 4.0, 5.0], 2.0 / 32.0),
        (&[1.0, 2.0, 3.0, 4.0, 5.0, -6.0], 28.0 / 64.0),
        (&[2.0, 2.0, -1.0, 3.0], 4.0 / 16.0),
        (&[0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], 2.0 / 256.0),
    ];
    for (i, (d, want)) in cases.iter().enumerate() {
        let zeros = vec![0.0; d.len()];
        let got = tracerank_core::metrics::wilcoxon_signed_rank_with(d, &zeros, WilcoxonMethod::Exact)
            .map_err(|e| e.to_string())?
            .p_value;
        if (got - want).abs() > 1e-6 {
            return Err(format!("case {i}: p = {got}, expected {want}"));
        }
    }
    let mut r = rng(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let shift = r.gen_range(-0.6..0.6);
        let x: Vec<f64> = (0..12).map(|_| r.gen_range(-1.0..1.0) + shift).collect();
        let y = vec![0.0; 12];
        let run = |m| tracerank_core::metrics::wilcoxon_signed_rank_with(&x, &y, m).map(|s| s.p_value);
        let exact = run(WilcoxonMethod::Exact).map_err(|e| e.to_string())?;
        let normal = run(WilcoxonMethod::Normal).map_err(|e| e.to_string())?;
        worst = worst.max((exact - normal).abs());
    }
    let detail = format!("5 canonical cases within 1e-6; n = 12 exact vs normal max |diff| {worst:.4} over 100 samples (<= 0.01)");
    if worst <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tracerank(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tracerank"))
        .args(args)
        .env_remove("T2V_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`tracerank {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let corpus = dir.join("corpus");
    let eval = dir.join("eval");
    let seed = SEED.to_string();
    tracerank(&["--seed", &seed, "synth", "--out", corpus.to_str().unwrap()])?;
    tracerank(&["--seed", &seed, "evaluate", "--corpus", corpus.to_str().unwrap(), "--out", eval.to_str().unwrap()])?;
    let read = |name: &str| std::fs::read(eval.join(name)).map_err(|e| e.to_string());
    Ok((read("report.csv")?, read("pairwise.csv")?))
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = pipeline(&tmp.path().join("a"))?;
    let b = pipeline(&tmp.path().join("b"))?;
    let detail = format!("report.csv {} bytes, pairwise.csv {} bytes", a.0.len(), a.1.len());
    if a.0.is_empty() || a.0.len() < 100 {
        return Err(format!("report unexpectedly small: {detail}"));
    }
    if a == b {
        Ok(format!("{detail}, identical across runs"))
    } else {
        Err(format!("{detail}, runs differ"))
    }
}

fn random_method(r: &mut SeedRng) -> String {
    const PREFIX: [&str; 4] = ["", "com.acme.Widget.", "org.junit.Assert.", "util.Helpers."];
    const NAME: [&str; 12] = [
        "compute", "assertEquals", "fail", "handleError", "getThrowable", "ExceptionMapper",
        "parse", "toString", "isEmpty", "verify", "assertThat", "render",
    ];
    let mut name: String = NAME[r.gen_range(0..NAME.len())]
        .chars()
        .map(|c| if r.gen_bool(0.3) { c.to_ascii_uppercase() } else { c })
        .collect();
    if r.gen_bool(0.1) {
        name.push_str(" spaced");
    }
    format!("{}{name}", PREFIX[r.gen_range(0..PREFIX.len())])
}

fn preprocessing_guards() -> Outcome {
    let mut r = rng(SEED);
    let pre = PreprocessConfig::default();
    let deny: Vec<String> = default_denylist();
    let mut longest = 0;
    for i in 0..10_000 {
        let n = r.gen_range(0..=400);
        let contexts = (0..n)
            .map(|_| {
                let params = (0..r.gen_range(0..3))
                    .map(|_| ("int".to_string(), r.gen_range(-100_000i64..100_000).to_string()))
                    .collect();
                Context::new("int", r.gen_range(-5i64..5).to_string(), random_method(&mut r), params)
            })
            .collect();
        let trace = ExecutionTrace {
            test_id: format!("t{i}"),
            suite_id: "S".into(),
            version_id: "v".into(),
            label: Label::Pass,
            fault_id: None,
            contexts,
        };
        let s = to_token_streams(&trace, &pre);
        if let Some(m) = s.methods.iter().find(|m| deny.iter().any(|d| m.to_lowercase().contains(d))) {
            return Err(format!("trace {i}: denylisted method `{m}` survived"));
        }
        let lens = [s.methods.len(), s.outputs.len(), s.inputs.len()];
        if lens.iter().any(|&l| l > pre.max_contexts) || lens[0] != lens[1] || lens[1] != lens[2] {
            return Err(format!("trace {i}: stream lengths {lens:?}"));
        }
        longest = longest.max(lens[0]);
    }
    Ok(format!("10000 traces, no denylisted method survived, longest stream {longest} (<= 128)"))
}

