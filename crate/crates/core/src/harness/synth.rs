//! Corpus generation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{
    version_id, Corpus, CorpusConfig, CorpusVersion, FaultKind, FaultProfile, FaultRecord,
    HarnessError, MutationOperator, Perturbation, VersionCoverage, MUTANT_SUFFIX,
};
use crate::embedding::{cosine_distance, EmbeddingBackend, HashedBackend};
use crate::preprocess::{abstract_value, default_denylist, to_token_streams, PreprocessConfig};
use crate::prioritize::{CoverageMatrix, Granularity};
use crate::seed::{derive_seed, rng, Rng};
use crate::trace_model::{Context, ExecutionTrace, Label, TestSuite};

const METHODS_PER_CLASS: usize = 8;
const MAX_ANOMALY_STEPS: usize = 32;
const ANOMALY_PROPOSALS: usize = 8;
/// Class ids for anomaly-only code, far above any configured vocabulary.
const NOVEL_CLASSES: std::ops::Range<usize> = 100_000..1_000_000;
const ORACLE_METHOD: &str = "org.junit.Assert.assertEquals";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Double,
    Text,
    Bool,
    IntArray,
    Widget,
    Void,
}

const PARAM_KINDS: [Kind; 7] = [
    Kind::Int,
    Kind::Int,
    Kind::Double,
    Kind::Text,
    Kind::Bool,
    Kind::IntArray,
    Kind::Widget,
];
const OUT_KINDS: [Kind; 7] = [
    Kind::Int,
    Kind::Double,
    Kind::Text,
    Kind::Bool,
    Kind::IntArray,
    Kind::Widget,
    Kind::Void,
];

/// Literal categories; each maps onto one abstraction token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cat {
    Pv,
    Zv,
    Nv,
    Pbv,
    Nbv,
    Text,
    EmptyText,
    Arr,
    EmptyArr,
    True,
    False,
    Obj,
    Nothing,
}

impl Kind {
    fn type_name(self) -> &'static str {
        match self {
            Kind::Int => "int",
            Kind::Double => "double",
            Kind::Text => "java.lang.String",
            Kind::Bool => "boolean",
            Kind::IntArray => "int[]",
            Kind::Widget => "com.acme.Widget",
            Kind::Void => "void",
        }
    }

    fn all_cats(self) -> &'static [Cat] {
        match self {
            Kind::Int | Kind::Double => &[Cat::Pv, Cat::Zv, Cat::Nv, Cat::Pbv, Cat::Nbv],
            Kind::Text => &[Cat::Text, Cat::EmptyText],
            Kind::Bool => &[Cat::True, Cat::False],
            Kind::IntArray => &[Cat::Arr, Cat::EmptyArr],
            Kind::Widget => &[Cat::Obj],
            Kind::Void => &[Cat::Nothing],
        }
    }

    /// Categories seen when the program behaves.
    fn normal_cats(self, r: &mut Rng) -> Vec<Cat> {
        let options: &[&[Cat]] = match self {
            Kind::Int | Kind::Double => &[
                &[Cat::Pv],
                &[Cat::Pv, Cat::Zv],
                &[Cat::Pv, Cat::Nv],
                &[Cat::Nv],
            ],
            Kind::Text => &[&[Cat::Text], &[Cat::Text, Cat::EmptyText]],
            Kind::Bool => &[&[Cat::True], &[Cat::False], &[Cat::True, Cat::False]],
            Kind::IntArray => &[&[Cat::Arr], &[Cat::Arr, Cat::EmptyArr]],
            Kind::Widget => &[&[Cat::Obj]],
            Kind::Void => &[&[Cat::Nothing]],
        };
        options.choose(r).expect("non-empty").to_vec()
    }
}

fn literal(kind: Kind, cat: Cat, r: &mut Rng) -> String {
    let num = |v: i64, r: &mut Rng| match kind {
        Kind::Double => format!("{v}.{:02}", r.gen_range(0..100)),
        _ => v.to_string(),
    };
    match cat {
        Cat::Pv => num(r.gen_range(1..5000), r),
        Cat::Nv => num(-r.gen_range(1..5000), r),
        Cat::Pbv => num(r.gen_range(40_000..900_000), r),
        Cat::Nbv => num(-r.gen_range(40_000..900_000), r),
        Cat::Zv => match kind {
            Kind::Double => "0.0".into(),
            _ => "0".into(),
        },
        Cat::Text => format!("\"item{}\"", r.gen_range(0..1000)),
        Cat::EmptyText => "\"\"".into(),
        Cat::Arr => {
            let n = r.gen_range(1..5);
            let items: Vec<String> = (0..n).map(|_| r.gen_range(0..100).to_string()).collect();
            format!("[{}]", items.join(", "))
        }
        Cat::EmptyArr => "[]".into(),
        Cat::True => "true".into(),
        Cat::False => "false".into(),
        Cat::Obj => format!("Widget@{:x}", r.gen_range(0x1000..0xffff)),
        Cat::Nothing => crate::preprocess::NO_ARG.into(),
    }
}

/// Categories a fault can switch a value to. `extreme` keeps only those
/// that never occur in passing runs of any suite.
fn flips(kind: Kind, normal: &[Cat], extreme: bool) -> Vec<Cat> {
    kind.all_cats()
        .iter()
        .copied()
        .filter(|c| !normal.contains(c))
        .filter(|c| !extreme || matches!(c, Cat::Pbv | Cat::Nbv | Cat::EmptyText | Cat::EmptyArr))
        .collect()
}

/// One position of a suite's call skeleton.
#[derive(Debug, Clone)]
struct Slot {
    method: String,
    params: Vec<Kind>,
    param_norm: Vec<Vec<Cat>>,
    out: Kind,
    out_norm: Vec<Cat>,
}

impl Slot {
    fn sample(&self, r: &mut Rng) -> Context {
        let params = self
            .params
            .iter()
            .zip(&self.param_norm)
            .map(|(k, cats)| {
                let c = *cats.choose(r).expect("non-empty");
                (k.type_name().to_string(), literal(*k, c, r))
            })
            .collect();
        if self.out == Kind::Void {
            return Context::void(self.method.clone(), params);
        }
        let c = *self.out_norm.choose(r).expect("non-empty");
        Context::new(self.out.type_name(), literal(self.out, c, r), self.method.clone(), params)
    }
}

#[derive(Debug, Clone)]
enum Target {
    Method(String),
    Input { index: usize, cat: Cat },
    Output(Cat),
    Structural,
}

#[derive(Debug, Clone)]
struct Step {
    op: MutationOperator,
    slot: usize,
    target: Target,
}

#[derive(Debug, Clone)]
struct Template {
    suite_id: String,
    profile: FaultProfile,
    slots: Vec<Slot>,
    /// Skeleton positions exercised by each test.
    tests: Vec<Vec<usize>>,
    signatures: Vec<Vec<Step>>,
    /// Swap targets reserved for signatures.
    signature_methods: Vec<String>,
}

impl Template {
    fn test_id(&self, i: usize) -> String {
        format!("{}.t{:02}", self.suite_id, i + 1)
    }

    fn make_step(
        &self,
        op: MutationOperator,
        slot: usize,
        methods: &[String],
        extreme: bool,
        r: &mut Rng,
    ) -> Option<Step> {
        let s = &self.slots[slot];
        let target = match op.perturbation() {
            Perturbation::SwapMethod => Target::Method(methods.choose(r)?.clone()),
            Perturbation::FlipInput => {
                let options: Vec<(usize, Cat)> = s
                    .params
                    .iter()
                    .zip(&s.param_norm)
                    .enumerate()
                    .flat_map(|(i, (k, n))| flips(*k, n, extreme).into_iter().map(move |c| (i, c)))
                    .collect();
                let (index, cat) = *options.choose(r)?;
                Target::Input { index, cat }
            }
            Perturbation::FlipOutput => {
                Target::Output(*flips(s.out, &s.out_norm, extreme).choose(r)?)
            }
            Perturbation::DropContext | Perturbation::DuplicateContext => Target::Structural,
        };
        Some(Step { op, slot, target })
    }

    /// A random applicable step on one of `slots`.
    fn random_step(
        &self,
        ops: &[MutationOperator],
        slots: &[usize],
        methods: &[String],
        extreme: bool,
        r: &mut Rng,
    ) -> Option<Step> {
        if slots.is_empty() {
            return None;
        }
        for _ in 0..64 {
            let op = *ops.choose(r)?;
            let slot = *slots.choose(r)?;
            if let Some(step) = self.make_step(op, slot, methods, extreme, r) {
                return Some(step);
            }
        }
        // Exhaustive fallback so sparse configurations still succeed.
        let mut all = Vec::new();
        for &op in ops {
            for &slot in slots {
                all.push((op, slot));
            }
        }
        all.shuffle(r);
        all.into_iter()
            .find_map(|(op, slot)| self.make_step(op, slot, methods, extreme, r))
    }
}

/// A test's trace under construction, with the skeleton slot of each context.
#[derive(Debug, Clone)]
struct Draft {
    slots: Vec<usize>,
    contexts: Vec<Context>,
}

impl Draft {
    fn sample(template: &Template, test: usize, r: &mut Rng) -> Self {
        let slots = template.tests[test].clone();
        let contexts = slots.iter().map(|&s| template.slots[s].sample(r)).collect();
        Self { slots, contexts }
    }

    /// Index of `slot`, inserting a freshly sampled call if the test lacks it.
    fn locate(&mut self, template: &Template, slot: usize, r: &mut Rng) -> usize {
        if let Some(i) = self.slots.iter().position(|&s| s == slot) {
            return i;
        }
        let at = self.slots.iter().position(|&s| s > slot).unwrap_or(self.slots.len());
        self.slots.insert(at, slot);
        self.contexts.insert(at, template.slots[slot].sample(r));
        at
    }

    fn apply(&mut self, template: &Template, step: &Step, r: &mut Rng) {
        let i = self.locate(template, step.slot, r);
        let s = &template.slots[step.slot];
        match (&step.target, step.op.perturbation()) {
            (Target::Method(m), _) => self.contexts[i].method = m.clone(),
            (Target::Input { index, cat }, _) => {
                self.contexts[i].param_values[*index] = literal(s.params[*index], *cat, r)
            }
            (Target::Output(cat), _) => self.contexts[i].out_value = literal(s.out, *cat, r),
            (Target::Structural, Perturbation::DropContext) => {
                self.slots.remove(i);
                self.contexts.remove(i);
            }
            (Target::Structural, _) => {
                self.slots.insert(i + 1, step.slot);
                let copy = self.contexts[i].clone();
                self.contexts.insert(i + 1, copy);
            }
        }
    }

    fn finish(
        &self,
        test_id: String,
        suite_id: &str,
        version: &str,
        fault: Option<&str>,
        r: &mut Rng,
    ) -> ExecutionTrace {
        let mut contexts = self.contexts.clone();
        let v = r.gen_range(1..100).to_string();
        contexts.push(Context::void(
            ORACLE_METHOD,
            vec![("int".into(), v.clone()), ("int".into(), v)],
        ));
        ExecutionTrace {
            test_id,
            suite_id: suite_id.to_string(),
            version_id: version.to_string(),
            label: if fault.is_some() { Label::Fail } else { Label::Pass },
            fault_id: fault.map(str::to_string),
            contexts,
        }
    }
}

fn method_name(index: usize) -> String {
    format!("C{}.m{}", index / METHODS_PER_CLASS, index % METHODS_PER_CLASS)
}

/// Coverage units of one trace: three lines per called method for
/// [`Granularity::Line`], one unit per (method, abstract inputs) for
/// [`Granularity::Branch`]. Oracle calls are not covered code.
pub fn trace_coverage(trace: &ExecutionTrace, granularity: Granularity) -> BTreeSet<String> {
    let denylist = default_denylist();
    let thresholds = Default::default();
    let mut units = BTreeSet::new();
    for c in &trace.contexts {
        let lower = c.method.to_lowercase();
        if denylist.iter().any(|d| lower.contains(d.as_str())) {
            continue;
        }
        let (file, base) = match c.method.split_once('.') {
            Some((class, m)) => {
                let line = m
                    .strip_prefix('m')
                    .and_then(|n| n.parse::<usize>().ok())
                    .map_or(1, |n| 10 * (n + 1));
                (format!("{class}.java"), line)
            }
            None => (format!("{}.java", c.method), 1),
        };
        match granularity {
            Granularity::Line => {
                for j in 0..3 {
                    units.insert(format!("{file}:{}", base + j));
                }
            }
            Granularity::Branch => {
                let inputs: Vec<String> = c
                    .params()
                    .map(|(t, v)| abstract_value(t, v, &thresholds))
                    .collect();
                let key = if inputs.is_empty() {
                    crate::preprocess::NO_ARG.to_string()
                } else {
                    inputs.join("|")
                };
                units.insert(format!("{file}:{base}#{key}"));
            }
        }
    }
    units
}

struct Generator<'a> {
    config: &'a CorpusConfig,
    backend: HashedBackend,
    preprocess: PreprocessConfig,
}

impl Generator<'_> {
    fn embed(&self, draft: &Draft) -> Vec<f64> {
        let trace = draft.finish(String::new(), "", "", None, &mut rng(0));
        self.backend.embed(&to_token_streams(&trace, &self.preprocess)).values
    }

    /// `shared` are the project's fault-prone methods: never part of a
    /// skeleton, and the swap targets of history signatures.
    fn template(
        &self,
        suite_id: String,
        profile: FaultProfile,
        shared: &[usize],
        r: &mut Rng,
    ) -> Template {
        let cfg = self.config;
        let width = cfg.contexts_per_trace.max;
        let mut vocab: Vec<usize> = (0..cfg.method_vocab_size)
            .filter(|m| !shared.contains(m))
            .collect();
        vocab.shuffle(r);
        let slots: Vec<Slot> = vocab[..width]
            .iter()
            .map(|&m| {
                let n_params = r.gen_range(0..=3);
                let params: Vec<Kind> = (0..n_params).map(|_| *PARAM_KINDS.choose(r).unwrap()).collect();
                let param_norm = params.iter().map(|k| k.normal_cats(r)).collect();
                let out = *OUT_KINDS.choose(r).unwrap();
                let out_norm = out.normal_cats(r);
                Slot {
                    method: method_name(m),
                    params,
                    param_norm,
                    out,
                    out_norm,
                }
            })
            .collect();
        let signature_methods: Vec<String> = shared.iter().map(|&m| method_name(m)).collect();

        let n_tests = r.gen_range(cfg.tests_per_suite.min..=cfg.tests_per_suite.max);
        let all: Vec<usize> = (0..width).collect();
        let tests = (0..n_tests)
            .map(|_| {
                let c = r.gen_range(cfg.contexts_per_trace.min..=cfg.contexts_per_trace.max);
                let mut pick: Vec<usize> = all.choose_multiple(r, c).copied().collect();
                pick.sort_unstable();
                pick
            })
            .collect();

        let mut template = Template {
            suite_id,
            profile,
            slots,
            tests,
            signatures: Vec::new(),
            signature_methods,
        };
        // Signatures rewrite calls rather than delete them, so the change is
        // visible in every test that carries it.
        let rewrite: Vec<MutationOperator> = cfg
            .perturbation_ops
            .iter()
            .copied()
            .filter(|op| op.perturbation() != Perturbation::DropContext)
            .collect();
        let ops = if rewrite.is_empty() { cfg.perturbation_ops.clone() } else { rewrite };
        let swaps: Vec<MutationOperator> = ops
            .iter()
            .copied()
            .filter(|op| op.perturbation() == Perturbation::SwapMethod)
            .collect();
        for k in 0..cfg.signatures_per_suite {
            let mut free: Vec<usize> = all.clone();
            let mut steps = Vec::new();
            let own = [template.signature_methods[k % template.signature_methods.len()].clone()];
            for i in 0..cfg.signature_steps.min(width) {
                // Lead with a call to the fault-prone method when the
                // operator set allows it: that is what recurs across versions.
                let step_ops = if i == 0 && !swaps.is_empty() { &swaps } else { &ops };
                if let Some(step) = template.random_step(step_ops, &free, &own, true, r) {
                    free.retain(|&s| s != step.slot);
                    steps.push(step);
                }
            }
            template.signatures.push(steps);
        }
        template
    }

    /// Try [`Self::anomaly`] on each candidate in turn; a suite's diversity
    /// can leave some tests unable to stand out. Returns the test that
    /// became the outlier and its steps.
    fn anomaly_any(
        &self,
        template: &Template,
        drafts: &mut [Draft],
        reference: &[Draft],
        candidates: &[usize],
        context: &str,
        r: &mut Rng,
    ) -> Result<(usize, Vec<Step>), HarnessError> {
        let reference: Vec<Vec<f64>> = reference.iter().map(|d| self.embed(d)).collect();
        let mut last = None;
        for &target in candidates {
            let original = drafts[target].clone();
            match self.anomaly(template, drafts, &reference, target, context, r) {
                Ok(steps) => return Ok((target, steps)),
                Err(e @ HarnessError::Infeasible(_)) => {
                    drafts[target] = original;
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| {
            HarnessError::Infeasible(format!("{context}: no candidate test for an anomaly"))
        }))
    }

    /// Perturb `drafts[target]` until it is an outlier among the other
    /// `reference` (fault-free) tests, then keep climbing while any step
    /// moves it further. Swaps go to a class no other trace calls, so the
    /// result resembles no earlier failure. Returns the steps applied.
    fn anomaly(
        &self,
        template: &Template,
        drafts: &mut [Draft],
        reference: &[Vec<f64>],
        target: usize,
        context: &str,
        r: &mut Rng,
    ) -> Result<Vec<Step>, HarnessError> {
        let passing: Vec<&[f64]> = reference
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(_, v)| v.as_slice())
            .collect();
        let (centroid, threshold) = self.outlier_bar(&passing)?;
        let score = |d: &Draft| cosine_distance(&self.embed(d), &centroid);
        // Code never exercised before: a class outside the project's vocabulary.
        let class = r.gen_range(NOVEL_CLASSES);
        let novel: Vec<String> = (0..METHODS_PER_CLASS)
            .map(|m| method_name(class * METHODS_PER_CLASS + m))
            .collect();
        let mut steps = Vec::new();
        let mut current = score(&drafts[target])?;
        for _ in 0..MAX_ANOMALY_STEPS {
            let slots: Vec<usize> = if drafts[target].slots.is_empty() {
                (0..template.slots.len()).collect()
            } else {
                drafts[target].slots.clone()
            };
            // Greedy ascent: keep the proposal that moves the trace furthest.
            let mut best: Option<(f64, Step, Draft)> = None;
            for _ in 0..ANOMALY_PROPOSALS {
                let Some(step) = template.random_step(
                    &self.config.perturbation_ops,
                    &slots,
                    &novel,
                    false,
                    r,
                ) else {
                    break;
                };
                let mut draft = drafts[target].clone();
                draft.apply(template, &step, r);
                let s = score(&draft)?;
                if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
                    best = Some((s, step, draft));
                }
            }
            let (best_score, step, draft) = best.ok_or_else(|| {
                HarnessError::Infeasible(format!(
                    "{context}: no perturbation operator applies to suite {}",
                    template.suite_id
                ))
            })?;
            if best_score <= current && current >= threshold {
                break;
            }
            drafts[target] = draft;
            steps.push(step);
            current = best_score;
        }
        if current >= threshold && !steps.is_empty() {
            return Ok(steps);
        }
        Err(HarnessError::Infeasible(format!(
            "{context}: could not move a failing trace of suite {} {} standard deviations from the centroid in {MAX_ANOMALY_STEPS} steps",
            template.suite_id, self.config.anomaly_margin
        )))
    }

    /// Centroid of the passing traces and the distance from it an outlier
    /// must reach: `margin` standard deviations above the passing traces'
    /// own mean distance.
    fn outlier_bar(&self, passing: &[&[f64]]) -> Result<(Vec<f64>, f64), HarnessError> {
        let dim = passing.first().map_or(0, |v| v.len());
        let mut c = vec![0.0; dim];
        for v in passing {
            for (a, x) in c.iter_mut().zip(v.iter()) {
                *a += x / passing.len() as f64;
            }
        }
        let d: Vec<f64> = passing
            .iter()
            .map(|v| cosine_distance(v, &c))
            .collect::<Result<_, _>>()?;
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        // A strictly positive gap also covers suites with zero spread.
        let threshold = (mean + self.config.anomaly_margin * sd).max(mean + f64::EPSILON);
        Ok((c, threshold))
    }
}

/// Generate a corpus. Deterministic in `config.seed`.
pub fn synth_corpus(config: &CorpusConfig) -> Result<Corpus, HarnessError> {
    config.validate()?;
    let generator = Generator {
        config,
        backend: HashedBackend::new(config.dimension, config.embedding_seed)
            .with_positional(config.positional),
        preprocess: PreprocessConfig::default(),
    };
    let mut r = rng(derive_seed(config.seed, "templates", 0));

    let suite_ids: Vec<String> = (1..=config.suites_per_version)
        .map(|i| format!("S{i:02}"))
        .collect();
    let profiles: Vec<FaultProfile> = match config.fault_profile {
        FaultProfile::Mixed => {
            let mut p: Vec<FaultProfile> = (0..suite_ids.len())
                .map(|i| {
                    if i % 2 == 0 {
                        FaultProfile::HistoryLike
                    } else {
                        FaultProfile::AnomalyLike
                    }
                })
                .collect();
            p.shuffle(&mut r);
            p
        }
        p => vec![p; suite_ids.len()],
    };
    let mut vocab: Vec<usize> = (0..config.method_vocab_size).collect();
    vocab.shuffle(&mut r);
    let shared = &vocab[..config.signatures_per_suite];
    let templates: Vec<Template> = suite_ids
        .iter()
        .zip(&profiles)
        .map(|(id, p)| generator.template(id.clone(), *p, shared, &mut r))
        .collect();

    let mut versions = Vec::with_capacity(config.n_versions);
    let mut registry = Vec::new();
    let mut coverage = BTreeMap::new();
    let mut seen: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); templates.len()];

    for v in 0..config.n_versions {
        let vid = version_id(v);
        let mut suites = Vec::with_capacity(2 * templates.len());
        let mut line_rows = Vec::new();
        let mut branch_rows = Vec::new();
        for (ti, template) in templates.iter().enumerate() {
            let mut r = rng(derive_seed(config.seed, &format!("{vid}/{}", template.suite_id), 0));
            let n = template.tests.len();
            let clean: Vec<Draft> = (0..n).map(|i| Draft::sample(template, i, &mut r)).collect();
            for (i, d) in clean.iter().enumerate() {
                let t = d.finish(template.test_id(i), &template.suite_id, &vid, None, &mut rng(0));
                line_rows.push((t.test_id.clone(), trace_coverage(&t, Granularity::Line)));
                branch_rows.push((t.test_id.clone(), trace_coverage(&t, Granularity::Branch)));
            }
            let context = format!("version {vid}");

            // Real fault: exactly one failing test.
            let mut drafts = clean.clone();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut r);
            let mut failing = order[0];
            let fault_id = format!("{vid}.{}.real", template.suite_id);
            let (signature, operators) = match template.profile {
                FaultProfile::HistoryLike => {
                    let pool: Vec<usize> = if seen[ti].is_empty() {
                        (0..template.signatures.len()).collect()
                    } else {
                        seen[ti].iter().copied().collect()
                    };
                    let k = *pool.choose(&mut r).expect("at least one signature");
                    for step in &template.signatures[k] {
                        drafts[failing].apply(template, step, &mut r);
                    }
                    (Some(k), template.signatures[k].iter().map(|s| s.op).collect())
                }
                _ => {
                    let (target, steps) =
                        generator.anomaly_any(template, &mut drafts, &clean, &order, &context, &mut r)?;
                    failing = target;
                    (None, steps.iter().map(|s| s.op).collect::<Vec<_>>())
                }
            };
            registry.push(FaultRecord {
                fault_id: fault_id.clone(),
                kind: FaultKind::Real,
                profile: template.profile,
                operators,
                version_id: vid.clone(),
                suite_id: template.suite_id.clone(),
                signature,
                failing_tests: vec![template.test_id(failing)],
            });
            let traces = drafts
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let f = (i == failing).then_some(fault_id.as_str());
                    d.finish(template.test_id(i), &template.suite_id, &vid, f, &mut r)
                })
                .collect();
            suites.push(TestSuite::new(template.suite_id.clone(), vid.clone(), traces)?);

            // Seeded faults on the same tests.
            let mut_id = format!("{}{MUTANT_SUFFIX}", template.suite_id);
            let mut drafts = clean.clone();
            let mut owner: Vec<Option<String>> = vec![None; n];
            let k = r.gen_range(config.seeded_faults_per_suite.min..=config.seeded_faults_per_suite.max);
            let mut new_seen = BTreeSet::new();
            for j in 0..k {
                let fault_id = format!("{vid}.{}.m{}", template.suite_id, j + 1);
                let free: Vec<usize> = (0..n).filter(|&i| owner[i].is_none()).collect();
                // Keep at least one passing test in the run.
                if free.len() < 2 {
                    break;
                }
                let mut record = FaultRecord {
                    fault_id: fault_id.clone(),
                    kind: FaultKind::Seeded,
                    profile: template.profile,
                    operators: Vec::new(),
                    version_id: vid.clone(),
                    suite_id: mut_id.clone(),
                    signature: None,
                    failing_tests: Vec::new(),
                };
                if r.gen_bool(config.equivalent_mutant_rate) {
                    record.operators.push(*config.perturbation_ops.choose(&mut r).unwrap());
                    registry.push(record);
                    continue;
                }
                let t = r
                    .gen_range(config.tests_per_seeded_fault.min..=config.tests_per_seeded_fault.max)
                    .min(free.len() - 1);
                let mut chosen: Vec<usize> = free.choose_multiple(&mut r, t).copied().collect();
                let steps = match template.profile {
                    FaultProfile::HistoryLike => {
                        let s = r.gen_range(0..template.signatures.len());
                        record.signature = Some(s);
                        new_seen.insert(s);
                        template.signatures[s].clone()
                    }
                    _ => {
                        // Any free test may carry the outlier; the others
                        // replay its steps.
                        let mut order = chosen.clone();
                        order.extend(free.iter().filter(|i| !chosen.contains(i)));
                        let (target, steps) =
                            generator.anomaly_any(template, &mut drafts, &clean, &order, &context, &mut r)?;
                        if !chosen.contains(&target) {
                            chosen[0] = target;
                        } else {
                            chosen.retain(|&i| i != target);
                            chosen.insert(0, target);
                        }
                        steps
                    }
                };
                let skip_first = template.profile != FaultProfile::HistoryLike;
                for (c, &i) in chosen.iter().enumerate() {
                    if !(skip_first && c == 0) {
                        for step in &steps {
                            drafts[i].apply(template, step, &mut r);
                        }
                    }
                    owner[i] = Some(fault_id.clone());
                }
                record.operators = steps.iter().map(|s| s.op).collect();
                let mut ids: Vec<String> = chosen.iter().map(|&i| template.test_id(i)).collect();
                ids.sort();
                record.failing_tests = ids;
                registry.push(record);
            }
            let traces = drafts
                .iter()
                .enumerate()
                .map(|(i, d)| d.finish(template.test_id(i), &mut_id, &vid, owner[i].as_deref(), &mut r))
                .collect();
            suites.push(TestSuite::new(mut_id, vid.clone(), traces)?);

            if let Some(s) = registry
                .iter()
                .rev()
                .find(|f| f.kind == FaultKind::Real && f.suite_id == template.suite_id)
                .and_then(|f| f.signature)
            {
                seen[ti].insert(s);
            }
            seen[ti].extend(new_seen);
        }
        coverage.insert(
            vid.clone(),
            VersionCoverage {
                line: CoverageMatrix::new(vid.clone(), Granularity::Line, line_rows),
                branch: CoverageMatrix::new(vid.clone(), Granularity::Branch, branch_rows),
            },
        );
        versions.push(CorpusVersion {
            version_id: vid,
            suites,
        });
    }

    Ok(Corpus {
        config: config.clone(),
        versions,
        suite_profiles: suite_ids.into_iter().zip(profiles).collect(),
        registry,
        coverage,
        balanced_pool: None,
        split: None,
    })
}

/// Centroid distance of every trace in a suite under the generator's embedding.
#[cfg(test)]
pub(crate) fn suite_distances(
    suite: &TestSuite,
    backend: &HashedBackend,
    preprocess: &PreprocessConfig,
) -> Result<Vec<f64>, HarnessError> {
    let vectors: Vec<_> = suite
        .traces
        .iter()
        .map(|t| backend.embed(&to_token_streams(t, preprocess)))
        .collect();
    let c = crate::embedding::centroid(&vectors)?;
    vectors
        .iter()
        .map(|v| cosine_distance(&v.values, &c).map_err(Into::into))
        .collect()
}
