//! Line-delimited run records.
//!
//! A run file holds one JSON object per line, tagged by `type`. The first line
//! is always `meta`; `iteration` and `epoch` lines follow in `(epoch,
//! iteration)` order; a run that aborts ends with one `failure` line.
//! Increment [`SCHEMA_VERSION`] whenever a field changes meaning.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{SamplerConfig, SamplerKind};
use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Meta(RunMeta),
    Iteration(IterationRecord),
    Epoch(EpochRecord),
    Failure(FailureRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema: u32,
    pub config_hash: String,
    pub label: String,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub noise_ratio: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub classes: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub warmup_epochs: usize,
    pub sampler_config: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub min: f64,
    pub max: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub epoch: usize,
    /// Global, zero-based.
    pub iteration: u64,
    pub selected: Vec<usize>,
    /// Bandit rewards, aligned with `selected`; absent outside bandit phases.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rewards: Option<Vec<f64>>,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<WeightSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Iterations completed so far.
    pub iteration: u64,
    pub test_error: f64,
    pub train_loss: f64,
    /// Cumulative per-instance selection counts, on snapshot epochs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counts: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<WeightSummary>,
    /// Per-instance sampler weights, on snapshot epochs when enabled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weight_snapshot: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub epoch: usize,
    pub iteration: u64,
    pub message: String,
}

pub fn to_jsonl(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_records(path: impl AsRef<Path>, records: &[Record]) -> Result<(), HarnessError> {
    let mut f = File::create(path)?;
    f.write_all(to_jsonl(records).as_bytes())?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<Record>, HarnessError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| HarnessError::Record {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
