//! Training-pool balancing and version splits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{is_mutant_suite, Corpus, HarnessError, TraceKey, TEST_VERSIONS};
use crate::seed::{derive_seed, rng};
use crate::trace_model::ExecutionTrace;

const VALIDATION_SHARE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<TraceKey>,
    pub validation: Vec<TraceKey>,
    pub test_versions: Vec<String>,
}

/// Keep one failing trace per fault and as many passing traces as failing
/// ones. Returns the kept indices in input order.
///
/// Failing traces without a `fault_id` each count as their own fault.
pub fn balance_pool(traces: &[&ExecutionTrace], seed: u64) -> Result<Vec<usize>, HarnessError> {
    let mut r = rng(seed);
    let mut by_fault: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut passing = Vec::new();
    for (i, t) in traces.iter().enumerate() {
        if t.label.is_fail() {
            let key = t.fault_id.clone().unwrap_or_else(|| format!("\u{0}{i}"));
            by_fault.entry(key).or_default().push(i);
        } else {
            passing.push(i);
        }
    }
    if by_fault.is_empty() {
        return Err(HarnessError::NoFailingTraces);
    }
    if passing.is_empty() {
        return Err(HarnessError::Infeasible(
            "the training pool has no passing traces".into(),
        ));
    }
    let mut failing: Vec<usize> = by_fault
        .values()
        .map(|group| group[r.gen_range(0..group.len())])
        .collect();
    let n = failing.len().min(passing.len());
    if passing.len() > n {
        passing = passing.choose_multiple(&mut r, n).copied().collect();
    }
    if failing.len() > n {
        failing = failing.choose_multiple(&mut r, n).copied().collect();
    }
    let mut kept: Vec<usize> = failing.into_iter().chain(passing).collect();
    kept.sort_unstable();
    Ok(kept)
}

fn check_versions(corpus: &Corpus) -> Result<(), HarnessError> {
    if corpus.versions.len() < TEST_VERSIONS + 1 {
        return Err(HarnessError::TooFewVersions {
            needed: TEST_VERSIONS + 1,
            found: corpus.versions.len(),
        });
    }
    Ok(())
}

/// Candidate training traces: everything outside the test versions, except
/// passing traces of mutant runs, which duplicate the real-fault run.
fn training_pool(corpus: &Corpus) -> Vec<&ExecutionTrace> {
    let test = corpus.test_version_ids();
    corpus
        .traces()
        .filter(|t| !test.contains(&t.version_id))
        .filter(|t| t.label.is_fail() || !is_mutant_suite(&t.suite_id))
        .collect()
}

/// Balance the training pool to an exact 50/50 label split.
pub fn balance_dataset(mut corpus: Corpus) -> Result<Corpus, HarnessError> {
    check_versions(&corpus)?;
    let pool = training_pool(&corpus);
    let kept = balance_pool(&pool, derive_seed(corpus.config.seed, "balance", 0))?;
    let keys = kept.into_iter().map(|i| TraceKey::of(pool[i])).collect();
    corpus.balanced_pool = Some(keys);
    Ok(corpus)
}

/// Last five versions for testing; the (balanced, if available) pool of the
/// rest shuffled and cut 80/20 into train and validation.
pub fn split_versions(corpus: &Corpus) -> Result<Split, HarnessError> {
    check_versions(corpus)?;
    let mut pool: Vec<TraceKey> = match &corpus.balanced_pool {
        Some(keys) => keys.clone(),
        None => training_pool(corpus).into_iter().map(TraceKey::of).collect(),
    };
    pool.shuffle(&mut rng(derive_seed(corpus.config.seed, "split", 0)));
    let n_validation = (pool.len() as f64 * VALIDATION_SHARE).round() as usize;
    let mut train = pool.split_off(n_validation);
    let mut validation = pool;
    train.sort();
    validation.sort();
    Ok(Split {
        train,
        validation,
        test_versions: corpus.test_version_ids(),
    })
}
