//! Corpus directory layout: `corpus.json`, `traces/<version>.jsonl`,
//! `coverage/<version>.csv` (line) and `coverage/<version>.branch.csv`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Corpus, CorpusConfig, CorpusVersion, FaultProfile, FaultRecord, HarnessError, Split, TraceKey,
    VersionCoverage,
};
use crate::prioritize::{CoverageMatrix, Granularity};
use crate::trace_model::{group_into_suites, parse_trace_file, write_traces, ParseMode};

pub const CORPUS_FILE: &str = "corpus.json";

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    config: CorpusConfig,
    versions: Vec<String>,
    suite_profiles: BTreeMap<String, FaultProfile>,
    registry: Vec<FaultRecord>,
    balanced_pool: Option<Vec<TraceKey>>,
    split: Option<Split>,
}

fn corrupt(path: &Path, message: impl Into<String>) -> HarnessError {
    HarnessError::Corrupt {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, HarnessError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| corrupt(path, e.to_string()))
}

impl Corpus {
    /// Write the corpus under `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir.join("traces"))?;
        fs::create_dir_all(dir.join("coverage"))?;
        let file = CorpusFile {
            config: self.config.clone(),
            versions: self.version_ids().map(str::to_string).collect(),
            suite_profiles: self.suite_profiles.clone(),
            registry: self.registry.clone(),
            balanced_pool: self.balanced_pool.clone(),
            split: self.split.clone(),
        };
        let mut w = BufWriter::new(File::create(dir.join(CORPUS_FILE))?);
        serde_json::to_writer_pretty(&mut w, &file)?;
        writeln!(w)?;
        w.flush()?;

        for v in &self.versions {
            let mut w = BufWriter::new(File::create(dir.join("traces").join(format!("{}.jsonl", v.version_id)))?);
            write_traces(&mut w, v.suites.iter().flat_map(|s| s.traces.iter()))?;
            w.flush()?;
        }
        for (vid, cov) in &self.coverage {
            cov.line.write_csv(File::create(dir.join("coverage").join(format!("{vid}.csv")))?)?;
            cov.branch
                .write_csv(File::create(dir.join("coverage").join(format!("{vid}.branch.csv")))?)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, mode: ParseMode) -> Result<Self, HarnessError> {
        let meta_path = dir.join(CORPUS_FILE);
        let file: CorpusFile =
            serde_json::from_reader(open(&meta_path)?).map_err(|e| corrupt(&meta_path, e.to_string()))?;
        file.config.validate()?;
        let mut versions = Vec::with_capacity(file.versions.len());
        let mut coverage = BTreeMap::new();
        for vid in &file.versions {
            let path = dir.join("traces").join(format!("{vid}.jsonl"));
            let traces = parse_trace_file(open(&path)?, mode).map_err(|e| corrupt(&path, e.to_string()))?;
            if let Some(t) = traces.iter().find(|t| &t.version_id != vid) {
                return Err(corrupt(
                    &path,
                    format!("test `{}` belongs to version `{}`", t.test_id, t.version_id),
                ));
            }
            let suites = group_into_suites(traces).map_err(|e| corrupt(&path, e.to_string()))?;
            versions.push(CorpusVersion {
                version_id: vid.clone(),
                suites,
            });
            let read = |name: String, g: Granularity| -> Result<CoverageMatrix, HarnessError> {
                let path = dir.join("coverage").join(name);
                CoverageMatrix::from_csv(open(&path)?, vid.clone(), g).map_err(|e| corrupt(&path, e.to_string()))
            };
            let line = read(format!("{vid}.csv"), Granularity::Line)?;
            let branch = read(format!("{vid}.branch.csv"), Granularity::Branch)?;
            coverage.insert(vid.clone(), VersionCoverage { line, branch });
        }
        Ok(Corpus {
            config: file.config,
            versions,
            suite_profiles: file.suite_profiles,
            registry: file.registry,
            coverage,
            balanced_pool: file.balanced_pool,
            split: file.split,
        })
    }
}
