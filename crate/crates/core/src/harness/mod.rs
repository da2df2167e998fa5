//! Experiment orchestration.
//!
//! One run trains a fresh model on one `(seed, noise ratio)` pair: build
//! and split the data, corrupt the training labels, run uniform warm-up
//! epochs to fill the prediction histories, then loop select, train,
//! observe, update. Everything downstream reads the emitted records.

mod config;
mod record;
mod sampler;

pub use config::{
    DatasetConfig, DatasetKind, Exp3Params, ExperimentConfig, FplParams, NoiseConfig, RunConfig, SamplerConfig,
    SamplerKind, TrainerConfig,
};
pub use record::{
    read_records, to_jsonl, write_records, EpochRecord, FailureRecord, IterationRecord, Record, RunMeta,
    WeightSummary, SCHEMA_VERSION,
};
pub use sampler::{EpochSweep, Sampler};

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::analysis::weight_entropy;
use crate::bandit::BanditError;
use crate::data::{self, BlobSpec, CsvOptions, DataError, Dataset, NoiseRecord, NoiseSpec};
use crate::metrics::{active_bias_loss_weights, reward_from_weight, MetricError, PredictionHistory};
use crate::rng::{stream, Stream};
use crate::trainer::{self, MlpModel, OptimizerState, TrainError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<Record>,
    pub manifest: Vec<NoiseRecord>,
    /// Wall-clock seconds per completed epoch. Kept out of `records` so the
    /// records stay byte-reproducible.
    pub epoch_seconds: Vec<f64>,
    pub model: Option<(MlpModel, u64)>,
}

impl RunOutput {
    pub fn failed(&self) -> bool {
        matches!(self.records.last(), Some(Record::Failure(_)))
    }
}

/// The clean test set and the corrupted, reindexed training set of a run.
pub fn build_datasets(config: &ExperimentConfig, seed: u64, noise_ratio: f64) -> Result<(Dataset, Dataset), HarnessError> {
    let d = &config.dataset;
    let data_seed = d.seed.unwrap_or(seed);
    let full = match d.kind {
        DatasetKind::Blobs => data::generate_blobs(
            BlobSpec {
                n: d.n,
                dim: d.dim,
                classes: d.classes,
                spread: d.spread,
            },
            data_seed,
        )?,
        DatasetKind::Csv => {
            let path = d.path.as_ref().ok_or_else(|| HarnessError::Config("dataset.path missing".into()))?;
            data::load_csv(
                path,
                CsvOptions {
                    has_header: d.has_header,
                    classes: None,
                },
            )?
        }
    };
    let (train, test) = data::split(&full, d.test_fraction, data_seed)?;
    if train.is_empty() || test.is_empty() {
        return Err(HarnessError::Data(DataError::Empty));
    }
    let train = data::inject_symmetric_noise(
        &train.reindexed(),
        NoiseSpec {
            ratio: noise_ratio,
            seed,
        },
    )?;
    Ok((train, test))
}

fn summarize(weights: &[f64]) -> WeightSummary {
    WeightSummary {
        min: weights.iter().copied().fold(f64::INFINITY, f64::min),
        max: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        entropy: weight_entropy(weights),
    }
}

/// Trains one model and returns its records.
///
/// Divergence does not return an error: the records end with a `failure`
/// line. Errors are reserved for setup problems (bad data, bad config).
pub fn run_seed(config: &ExperimentConfig, seed: u64, noise_ratio: f64) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    let (train, test) = build_datasets(config, seed, noise_ratio)?;
    let n = train.len();
    let run = &config.run;
    let m = run.batch_size;
    if m > n {
        return Err(HarnessError::Config(format!("batch size {m} exceeds {n} training instances")));
    }
    let per_epoch = run.iterations_per_epoch.unwrap_or_else(|| n.div_ceil(m));
    let total_iterations = (run.epochs * per_epoch) as u64;

    let tc = &config.trainer;
    let decay = tc.decay_iterations.clone().unwrap_or_else(|| {
        tc.decay_at
            .iter()
            .map(|f| (f * total_iterations as f64).round() as u64)
            .collect()
    });
    let mut model = MlpModel::init(train.dim, tc.hidden, train.classes, seed);
    let mut optimizer = OptimizerState::new(
        model.params().len(),
        tc.learning_rate,
        tc.momentum,
        tc.decay_factor,
        decay,
    )?;

    let metric = config.sampler.metric;
    let mut sampler = Sampler::new(&config.sampler, n, m, seed)?;
    let mut warmup = EpochSweep::new(n, stream(seed, Stream::Warmup));
    let mut histories = vec![PredictionHistory::new(); n];
    let mut counts = vec![0u64; n];

    let mut records = vec![Record::Meta(RunMeta {
        schema: SCHEMA_VERSION,
        config_hash: config.hash(),
        label: config.label(),
        seed,
        sampler: config.sampler.kind,
        noise_ratio,
        n_train: n,
        n_test: test.len(),
        classes: train.classes,
        batch_size: m,
        epochs: run.epochs,
        iterations_per_epoch: per_epoch,
        warmup_epochs: run.warmup_epochs,
        sampler_config: config.sampler.clone(),
    })];
    let mut epoch_seconds = Vec::with_capacity(run.epochs);
    let mut t: u64 = 0;

    for epoch in 0..run.epochs {
        let started = Instant::now();
        let warming = epoch < run.warmup_epochs;
        let mut loss_sum = 0.0;
        for _ in 0..per_epoch {
            let selection = if warming {
                warmup.next_batch(m)?
            } else {
                sampler.propose(m)?
            };
            let (features, labels) = trainer::gather(&train, selection.indices());
            let loss_weights = if !warming && sampler.kind() == SamplerKind::ActiveBias {
                let variances: Vec<f64> = selection.indices().iter().map(|&i| histories[i].variance()).collect();
                active_bias_loss_weights(&variances, metric.loss_weight_floor)
            } else {
                vec![1.0; m]
            };
            let out = model.loss_and_grads(&features, &labels, &loss_weights)?;
            let stepped = if out.loss.is_finite() && out.target_probs.iter().all(|p| p.is_finite()) {
                for (&i, &p) in selection.indices().iter().zip(&out.target_probs) {
                    histories[i].record(p.clamp(0.0, 1.0))?;
                    counts[i] += 1;
                }
                optimizer.step(&mut model, &out.grads, t)
            } else {
                Err(TrainError::Diverged { iteration: t })
            };
            if let Err(e) = stepped {
                records.push(Record::Failure(FailureRecord {
                    epoch,
                    iteration: t,
                    message: e.to_string(),
                }));
                return Ok(RunOutput {
                    records,
                    manifest: train.noise_manifest(),
                    epoch_seconds,
                    model: None,
                });
            }
            loss_sum += out.loss;

            let rewards = if !warming && sampler.kind().is_bandit() {
                let rewards: Vec<f64> = selection
                    .indices()
                    .iter()
                    .map(|&i| reward_from_weight(histories[i].variance(), &metric))
                    .collect();
                sampler.observe(&selection, &rewards)?;
                Some(rewards)
            } else {
                None
            };
            if run.log_iterations {
                records.push(Record::Iteration(IterationRecord {
                    epoch,
                    iteration: t,
                    selected: selection.into_indices(),
                    rewards,
                    loss: out.loss,
                    weights: sampler.weights().map(|w| summarize(&w)),
                }));
            }
            t += 1;
        }

        let test_error = trainer::evaluate(&model, &test)?;
        let snapshot = (epoch + 1) % run.snapshot_every == 0 || epoch + 1 == run.epochs;
        let weights = sampler.weights();
        records.push(Record::Epoch(EpochRecord {
            epoch,
            iteration: t,
            test_error,
            train_loss: loss_sum / per_epoch as f64,
            counts: snapshot.then(|| counts.clone()),
            weights: weights.as_deref().map(summarize),
            weight_snapshot: if snapshot && run.snapshot_weights { weights } else { None },
        }));
        epoch_seconds.push(started.elapsed().as_secs_f64());
    }

    Ok(RunOutput {
        records,
        manifest: train.noise_manifest(),
        epoch_seconds,
        model: Some((model, t)),
    })
}

/// File stem for one run, e.g. `fpl-noise0.40-seed3`.
pub fn run_stem(label: &str, noise_ratio: f64, seed: u64) -> String {
    format!("{label}-noise{noise_ratio:.2}-seed{seed}")
}

/// Paths written for one run.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub seed: u64,
    pub noise_ratio: f64,
    pub records: PathBuf,
    pub manifest: PathBuf,
    pub failed: bool,
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs every `(noise ratio, seed)` pair and writes its files into
/// `config.run.out`:
///
/// - `<stem>.jsonl`: run records
/// - `<stem>.noise.jsonl`: one `{index, true_label, observed_label}` line
///   per corrupted training instance
/// - `<stem>.timing.jsonl`: wall-clock seconds per epoch
/// - `<stem>.model.txt`: final checkpoint, when `run.save_model` is set
///
/// A run that fails still gets a record file ending in a `failure` line;
/// the remaining runs proceed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunFiles>, HarnessError> {
    run_experiment_with(config, run_seed)
}

/// [`run_experiment`] with a caller-supplied per-run function.
pub fn run_experiment_with<F>(config: &ExperimentConfig, mut runner: F) -> Result<Vec<RunFiles>, HarnessError>
where
    F: FnMut(&ExperimentConfig, u64, f64) -> Result<RunOutput, HarnessError>,
{
    config.validate()?;
    let out_dir = &config.run.out;
    std::fs::create_dir_all(out_dir)?;
    let label = config.label();
    let mut written = Vec::new();
    for &ratio in &config.noise.ratios {
        for &seed in &config.run.seeds {
            let stem = run_stem(&label, ratio, seed);
            let output = runner(config, seed, ratio).unwrap_or_else(|e| RunOutput {
                records: vec![Record::Failure(FailureRecord {
                    epoch: 0,
                    iteration: 0,
                    message: e.to_string(),
                })],
                manifest: Vec::new(),
                epoch_seconds: Vec::new(),
                model: None,
            });
            let records_path = out_dir.join(format!("{stem}.jsonl"));
            let manifest_path = out_dir.join(format!("{stem}.noise.jsonl"));
            let mut manifest = String::new();
            for r in &output.manifest {
                manifest.push_str(&serde_json::to_string(r).expect("manifest serializes"));
                manifest.push('\n');
            }
            write_atomic(&manifest_path, manifest.as_bytes())?;
            let timing: String = output
                .epoch_seconds
                .iter()
                .enumerate()
                .map(|(epoch, s)| format!("{{\"epoch\":{epoch},\"seconds\":{s}}}\n"))
                .collect();
            write_atomic(&out_dir.join(format!("{stem}.timing.jsonl")), timing.as_bytes())?;
            if let (true, Some((model, iteration))) = (config.run.save_model, &output.model) {
                write_atomic(
                    &out_dir.join(format!("{stem}.model.txt")),
                    model.checkpoint_text(*iteration).as_bytes(),
                )?;
            }
            write_atomic(&records_path, to_jsonl(&output.records).as_bytes())?;
            written.push(RunFiles {
                seed,
                noise_ratio: ratio,
                records: records_path,
                manifest: manifest_path,
                failed: output.failed(),
            });
        }
    }
    Ok(written)
}
