//! Effective run configuration: command-line flags override the config
//! file, which overrides built-in defaults. `T2V_SEED` stands in for the
//! default seed.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context as _, Result};
use tracerank_core::harness::IntRange;
use tracerank_core::{
    AbstractionThresholds, CorpusConfig, ExperimentConfig, FaultProfile, HashedBackend,
    Hyperparams, MutationOperator, PreprocessConfig, Strategy,
};

use crate::args::{Backend, Cli, CorpusKnobs, EmbedKnobs, ExperimentKnobs, ModelKnobs, PreprocessKnobs};
use crate::error::Usage;

pub const SEED_ENV: &str = "T2V_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub lenient: bool,

    pub max_contexts: usize,
    pub denylist: Vec<String>,
    pub big_magnitude: f64,
    pub zero_epsilon: f64,

    pub backend: Backend,
    pub dimension: usize,
    pub embedding_seed: u64,
    pub positional: bool,

    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub epochs: usize,

    pub strategies: Vec<Strategy>,
    pub top_k: usize,
    pub repeats: usize,
    pub selector_folds: usize,

    pub project: String,
    pub profile: FaultProfile,
    pub versions: usize,
    pub suites: usize,
    pub tests: IntRange,
    pub contexts: IntRange,
    pub vocab: usize,
    pub ops: Vec<MutationOperator>,
    pub signatures: usize,
    pub signature_steps: usize,
    pub seeded_faults: IntRange,
    pub tests_per_fault: IntRange,
    pub margin: f64,
    pub equivalent_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pre = PreprocessConfig::default();
        let exp = ExperimentConfig::default();
        let corpus = CorpusConfig::default();
        Self {
            seed: 0,
            jobs: 0,
            lenient: false,
            max_contexts: pre.max_contexts,
            denylist: pre.oracle_denylist,
            big_magnitude: pre.thresholds.big_magnitude,
            zero_epsilon: pre.thresholds.zero_epsilon,
            backend: Backend::Hashed,
            dimension: exp.dimension,
            embedding_seed: exp.embedding_seed,
            positional: exp.positional,
            learning_rate: exp.hyperparams.learning_rate,
            l2_lambda: exp.hyperparams.l2_lambda,
            epochs: exp.hyperparams.epochs,
            strategies: exp.strategies,
            top_k: exp.top_k,
            repeats: exp.repeats,
            selector_folds: exp.selector_folds,
            project: corpus.project,
            profile: corpus.fault_profile,
            versions: corpus.n_versions,
            suites: corpus.suites_per_version,
            tests: corpus.tests_per_suite,
            contexts: corpus.contexts_per_trace,
            vocab: corpus.method_vocab_size,
            ops: corpus.perturbation_ops,
            signatures: corpus.signatures_per_suite,
            signature_steps: corpus.signature_steps,
            seeded_faults: corpus.seeded_faults_per_suite,
            tests_per_fault: corpus.tests_per_seeded_fault,
            margin: corpus.anomaly_margin,
            equivalent_rate: corpus.equivalent_mutant_rate,
        }
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Every setting as `(key, value)`, in a fixed order. Feeding these lines
    /// back as a config file reproduces the configuration.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
            ("lenient", self.lenient.to_string()),
            ("max_contexts", self.max_contexts.to_string()),
            ("denylist", self.denylist.join(",")),
            ("big_magnitude", self.big_magnitude.to_string()),
            ("zero_epsilon", self.zero_epsilon.to_string()),
            ("backend", self.backend.as_str().to_string()),
            ("dimension", self.dimension.to_string()),
            ("embedding_seed", self.embedding_seed.to_string()),
            ("positional", self.positional.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("l2_lambda", self.l2_lambda.to_string()),
            ("epochs", self.epochs.to_string()),
            ("strategies", join(&self.strategies)),
            ("top_k", self.top_k.to_string()),
            ("repeats", self.repeats.to_string()),
            ("selector_folds", self.selector_folds.to_string()),
            ("project", self.project.clone()),
            ("profile", self.profile.to_string()),
            ("versions", self.versions.to_string()),
            ("suites", self.suites.to_string()),
            ("tests", self.tests.to_string()),
            ("contexts", self.contexts.to_string()),
            ("vocab", self.vocab.to_string()),
            ("ops", self.ops.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(",")),
            ("signatures", self.signatures.to_string()),
            ("signature_steps", self.signature_steps.to_string()),
            ("seeded_faults", self.seeded_faults.to_string()),
            ("tests_per_fault", self.tests_per_fault.to_string()),
            ("margin", self.margin.to_string()),
            ("equivalent_rate", self.equivalent_rate.to_string()),
        ]
    }

    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            max_contexts: self.max_contexts,
            oracle_denylist: self.denylist.clone(),
            thresholds: AbstractionThresholds {
                big_magnitude: self.big_magnitude,
                zero_epsilon: self.zero_epsilon,
            },
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            learning_rate: self.learning_rate,
            l2_lambda: self.l2_lambda,
            epochs: self.epochs,
            ..Hyperparams::default()
        }
    }

    pub fn hashed_backend(&self) -> HashedBackend {
        HashedBackend::new(self.dimension, self.embedding_seed).with_positional(self.positional)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            strategies: self.strategies.clone(),
            repeats: self.repeats,
            seed: self.seed,
            top_k: self.top_k,
            dimension: self.dimension,
            embedding_seed: self.embedding_seed,
            positional: self.positional,
            hyperparams: self.hyperparams(),
            preprocess: self.preprocess(),
            selector_folds: self.selector_folds,
        }
    }

    pub fn corpus(&self) -> CorpusConfig {
        CorpusConfig {
            project: self.project.clone(),
            n_versions: self.versions,
            suites_per_version: self.suites,
            tests_per_suite: self.tests,
            contexts_per_trace: self.contexts,
            method_vocab_size: self.vocab,
            fault_profile: self.profile,
            perturbation_ops: self.ops.clone(),
            signatures_per_suite: self.signatures,
            signature_steps: self.signature_steps,
            seeded_faults_per_suite: self.seeded_faults,
            tests_per_seeded_fault: self.tests_per_fault,
            anomaly_margin: self.margin,
            equivalent_mutant_rate: self.equivalent_rate,
            dimension: self.dimension,
            embedding_seed: self.embedding_seed,
            positional: self.positional,
            seed: self.seed,
        }
    }

    /// Checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        self.preprocess().validate().map_err(|e| Usage(e.to_string()))?;
        if self.dimension == 0 {
            return Err(Usage("dimension must be >= 1".into()).into());
        }
        if self.strategies.is_empty() {
            return Err(Usage("strategies must not be empty".into()).into());
        }
        if self.top_k == 0 || self.repeats == 0 {
            return Err(Usage("top_k and repeats must be >= 1".into()).into());
        }
        Ok(())
    }
}

/// Parsed `key=value` lines. Blank lines and `#` comments are skipped;
/// `-` and `_` are interchangeable in keys.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let known: Vec<&str> = RunConfig::default().entries().into_iter().map(|(k, _)| k).collect();
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Usage(format!("config line {}: expected `key=value`", i + 1)))?;
            let key = k.trim().replace('-', "_");
            if !known.contains(&key.as_str()) {
                return Err(Usage(format!("config line {}: unknown key `{}`", i + 1, k.trim())).into());
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config file {}", path.display()))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| Usage(format!("config key `{key}`: {e}")).into()))
            .transpose()
    }

    fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|e| Usage(format!("config key `{key}`: {e}")).into()))
                    .collect()
            })
            .transpose()
    }
}

/// Optional overrides collected from one subcommand's flags.
#[derive(Default)]
pub struct Flags<'a> {
    pub pre: Option<&'a PreprocessKnobs>,
    pub embed: Option<&'a EmbedKnobs>,
    pub model: Option<&'a ModelKnobs>,
    pub experiment: Option<&'a ExperimentKnobs>,
    pub corpus: Option<&'a CorpusKnobs>,
}

pub fn resolve(cli: &Cli, flags: &Flags<'_>, file: &FileConfig, env_seed: Option<&str>) -> Result<RunConfig> {
    let d = RunConfig::default();
    let env_seed = env_seed
        .map(|s| s.trim().parse::<u64>().map_err(|e| Usage(format!("{SEED_ENV}: {e}"))))
        .transpose()?;

    macro_rules! pick {
        ($flag:expr, $key:literal, $default:expr) => {
            match $flag {
                Some(v) => v,
                None => file.get($key)?.unwrap_or($default),
            }
        };
    }
    macro_rules! pick_list {
        ($flag:expr, $key:literal, $default:expr) => {
            match $flag {
                Some(v) => v,
                None => file.get_list($key)?.unwrap_or($default),
            }
        };
    }
    let some = |b: bool| b.then_some(true);
    let pre = flags.pre;
    let emb = flags.embed;
    let model = flags.model;
    let exp = flags.experiment;
    let cor = flags.corpus;

    let denylist = match pre.and_then(|p| p.denylist.as_deref()) {
        Some(v) => v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
        None => file.get_list::<String>("denylist")?.unwrap_or(d.denylist),
    };

    Ok(RunConfig {
        seed: match cli.seed {
            Some(s) => s,
            None => file.get("seed")?.or(env_seed).unwrap_or(d.seed),
        },
        jobs: pick!(cli.jobs, "jobs", d.jobs),
        lenient: pick!(some(cli.lenient), "lenient", d.lenient),
        max_contexts: pick!(pre.and_then(|p| p.max_contexts), "max_contexts", d.max_contexts),
        denylist,
        big_magnitude: pick!(pre.and_then(|p| p.big_magnitude), "big_magnitude", d.big_magnitude),
        zero_epsilon: pick!(pre.and_then(|p| p.zero_epsilon), "zero_epsilon", d.zero_epsilon),
        backend: pick!(emb.and_then(|e| e.backend), "backend", d.backend),
        dimension: pick!(emb.and_then(|e| e.dimension), "dimension", d.dimension),
        embedding_seed: pick!(emb.and_then(|e| e.embedding_seed), "embedding_seed", d.embedding_seed),
        positional: pick!(emb.and_then(|e| some(e.positional)), "positional", d.positional),
        learning_rate: pick!(model.and_then(|m| m.learning_rate), "learning_rate", d.learning_rate),
        l2_lambda: pick!(model.and_then(|m| m.l2_lambda), "l2_lambda", d.l2_lambda),
        epochs: pick!(model.and_then(|m| m.epochs), "epochs", d.epochs),
        strategies: pick_list!(exp.and_then(|e| e.strategies.clone()), "strategies", d.strategies),
        top_k: pick!(exp.and_then(|e| e.top_k), "top_k", d.top_k),
        repeats: pick!(exp.and_then(|e| e.repeats), "repeats", d.repeats),
        selector_folds: pick!(exp.and_then(|e| e.selector_folds), "selector_folds", d.selector_folds),
        project: pick!(cor.and_then(|c| c.project.clone()), "project", d.project),
        profile: pick!(cor.and_then(|c| c.profile), "profile", d.profile),
        versions: pick!(cor.and_then(|c| c.versions), "versions", d.versions),
        suites: pick!(cor.and_then(|c| c.suites), "suites", d.suites),
        tests: pick!(cor.and_then(|c| c.tests), "tests", d.tests),
        contexts: pick!(cor.and_then(|c| c.contexts), "contexts", d.contexts),
        vocab: pick!(cor.and_then(|c| c.vocab), "vocab", d.vocab),
        ops: pick_list!(cor.and_then(|c| c.ops.clone()), "ops", d.ops),
        signatures: pick!(cor.and_then(|c| c.signatures), "signatures", d.signatures),
        signature_steps: pick!(cor.and_then(|c| c.signature_steps), "signature_steps", d.signature_steps),
        seeded_faults: pick!(cor.and_then(|c| c.seeded_faults), "seeded_faults", d.seeded_faults),
        tests_per_fault: pick!(cor.and_then(|c| c.tests_per_fault), "tests_per_fault", d.tests_per_fault),
        margin: pick!(cor.and_then(|c| c.margin), "margin", d.margin),
        equivalent_rate: pick!(cor.and_then(|c| c.equivalent_rate), "equivalent_rate", d.equivalent_rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("tracerank").chain(args.iter().copied())).unwrap()
    }

    fn resolve_evaluate(c: &Cli, file: &FileConfig, env: Option<&str>) -> RunConfig {
        let crate::args::Command::Evaluate(e) = &c.command else { panic!() };
        let flags = Flags {
            pre: Some(&e.pre),
            embed: Some(&e.embed),
            model: Some(&e.model),
            experiment: Some(&e.experiment),
            corpus: None,
        };
        resolve(c, &flags, file, env).unwrap()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file = FileConfig::parse("repeats=7\ntop-k=3\n# comment\n\ndimension = 64\n").unwrap();
        let c = cli(&["evaluate", "--corpus", "c", "--out", "o", "--repeats", "9"]);
        let r = resolve_evaluate(&c, &file, None);
        assert_eq!(r.repeats, 9);
        assert_eq!(r.top_k, 3);
        assert_eq!(r.dimension, 64);
        assert_eq!(r.epochs, RunConfig::default().epochs);
    }

    #[test]
    fn env_seed_is_only_a_default() {
        let c = cli(&["evaluate", "--corpus", "c", "--out", "o"]);
        assert_eq!(resolve_evaluate(&c, &FileConfig::default(), Some("42")).seed, 42);
        let file = FileConfig::parse("seed=5").unwrap();
        assert_eq!(resolve_evaluate(&c, &file, Some("42")).seed, 5);
        let c = cli(&["--seed", "1", "evaluate", "--corpus", "c", "--out", "o"]);
        assert_eq!(resolve_evaluate(&c, &file, Some("42")).seed, 1);
    }

    #[test]
    fn rendered_config_parses_back() {
        let r = RunConfig {
            strategies: vec![Strategy::Random, Strategy::Classifier],
            margin: 2.5,
            denylist: vec![],
            ..RunConfig::default()
        };
        let file = FileConfig::parse(&r.render()).unwrap();
        let c = cli(&["evaluate", "--corpus", "c", "--out", "o"]);
        let flags = Flags::default();
        assert_eq!(resolve(&c, &flags, &file, None).unwrap(), r);
    }

    #[test]
    fn unknown_and_malformed_keys_are_usage_errors() {
        for text in ["bogus=1", "no equals sign"] {
            let err = FileConfig::parse(text).unwrap_err();
            assert!(err.downcast_ref::<Usage>().is_some(), "{text}");
        }
        let file = FileConfig::parse("repeats=lots").unwrap();
        let c = cli(&["evaluate", "--corpus", "c", "--out", "o"]);
        let err = resolve(&c, &Flags::default(), &file, None).unwrap_err();
        assert!(err.downcast_ref::<Usage>().is_some());
    }
}
