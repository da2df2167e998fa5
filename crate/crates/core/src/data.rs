//! Datasets with ground-truth bookkeeping for label noise.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream, Stream};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset size: {0}")]
    InvalidSize(String),
    #[error("dataset is empty")]
    Empty,
    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error("row {row}: label {label:?} is out of range")]
    LabelOutOfRange { row: usize, label: String },
    #[error("noise ratio {0} must be in [0, 1)")]
    InvalidRatio(f64),
    #[error("dataset already carries corrupted labels")]
    AlreadyNoised,
    #[error("test fraction {0} must be in (0, 1)")]
    InvalidFraction(f64),
    #[error("malformed noise manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub index: usize,
    pub features: Vec<f64>,
    pub observed_label: usize,
    pub true_label: usize,
}

impl Instance {
    pub fn is_corrupted(&self) -> bool {
        self.observed_label != self.true_label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub dim: usize,
    pub classes: usize,
}

/// One corrupted instance, as written to a run's noise manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub index: usize,
    pub true_label: usize,
    pub observed_label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    pub spread: f64,
}

/// Symmetric, instance-independent label noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Labels must be below this; inferred as `max label + 1` when absent.
    pub classes: Option<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn corrupted_count(&self) -> usize {
        self.instances.iter().filter(|i| i.is_corrupted()).count()
    }

    /// Renumbers instances `0..len` in their current order.
    pub fn reindexed(mut self) -> Self {
        for (i, inst) in self.instances.iter_mut().enumerate() {
            inst.index = i;
        }
        self
    }

    pub fn noise_manifest(&self) -> Vec<NoiseRecord> {
        self.instances
            .iter()
            .filter(|i| i.is_corrupted())
            .map(|i| NoiseRecord {
                index: i.index,
                true_label: i.true_label,
                observed_label: i.observed_label,
            })
            .collect()
    }
}

/// Isotropic Gaussian clusters around class means on the unit sphere.
///
/// Instance `i` belongs to class `i % classes`, so class counts differ by at
/// most one.
pub fn generate_blobs(spec: BlobSpec, seed: u64) -> Result<Dataset, DataError> {
    let BlobSpec { n, dim, classes, spread } = spec;
    if classes < 2 {
        return Err(DataError::InvalidSize(format!("need at least 2 classes, got {classes}")));
    }
    if n < classes {
        return Err(DataError::InvalidSize(format!("{n} instances for {classes} classes")));
    }
    if dim == 0 {
        return Err(DataError::InvalidSize("feature dimension must be positive".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(DataError::InvalidSize(format!("spread {spread}")));
    }
    let mut rng = stream(seed, Stream::Data);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();
    let instances = (0..n)
        .map(|i| {
            let label = i % classes;
            let features = means[label]
                .iter()
                .map(|&mu| {
                    let z: f64 = rng.sample(StandardNormal);
                    mu + spread * z
                })
                .collect();
            Instance {
                index: i,
                features,
                observed_label: label,
                true_label: label,
            }
        })
        .collect();
    Ok(Dataset { instances, dim, classes })
}

/// Corrupts exactly `round(ratio * N)` labels, each replaced by a uniform
/// draw over the other classes.
pub fn inject_symmetric_noise(dataset: &Dataset, spec: NoiseSpec) -> Result<Dataset, DataError> {
    if !(0.0..1.0).contains(&spec.ratio) {
        return Err(DataError::InvalidRatio(spec.ratio));
    }
    if dataset.corrupted_count() > 0 {
        return Err(DataError::AlreadyNoised);
    }
    let mut out = dataset.clone();
    let n = out.len();
    let flips = (spec.ratio * n as f64).round() as usize;
    if flips == 0 {
        return Ok(out);
    }
    let mut rng = stream(spec.seed, Stream::Noise);
    let mut chosen = index::sample(&mut rng, n, flips).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let inst = &mut out.instances[i];
        let draw = rng.random_range(0..out.classes - 1);
        inst.observed_label = if draw < inst.true_label { draw } else { draw + 1 };
    }
    Ok(out)
}

/// Reads `D` feature columns followed by one integer label column.
pub fn load_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1 + usize::from(options.has_header);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::Ragged {
                row,
                expected,
                found: record.len(),
            });
        }
        if expected < 2 {
            return Err(DataError::Ragged { row, expected: 2, found: expected });
        }
        let features = record
            .iter()
            .take(expected - 1)
            .enumerate()
            .map(|(column, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| DataError::NonNumeric {
                        row,
                        column: column + 1,
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let cell = &record[expected - 1];
        let label = cell.parse::<usize>().map_err(|_| DataError::LabelOutOfRange {
            row,
            label: cell.to_string(),
        })?;
        if options.classes.is_some_and(|c| label >= c) {
            return Err(DataError::LabelOutOfRange {
                row,
                label: cell.to_string(),
            });
        }
        rows.push((features, label));
    }
    let dim = width.ok_or(DataError::Empty)? - 1;
    let classes = options
        .classes
        .unwrap_or_else(|| rows.iter().map(|(_, l)| l + 1).max().unwrap_or(0));
    let instances = rows
        .into_iter()
        .enumerate()
        .map(|(index, (features, label))| Instance {
            index,
            features,
            observed_label: label,
            true_label: label,
        })
        .collect();
    Ok(Dataset { instances, dim, classes })
}

/// Seeded shuffle split into `(train, test)`; the test part holds
/// `round(test_fraction * N)` instances. Indices are preserved.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    if dataset.is_empty() {
        return Err(DataError::Empty);
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut stream(seed, Stream::Split));
    let n_test = (test_fraction * dataset.len() as f64).round() as usize;
    let pick = |ids: &[usize]| Dataset {
        instances: ids.iter().map(|&i| dataset.instances[i].clone()).collect(),
        dim: dataset.dim,
        classes: dataset.classes,
    };
    let (test, train) = order.split_at(n_test);
    Ok((pick(train), pick(test)))
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[NoiseRecord]) -> Result<(), DataError> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<NoiseRecord>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DataError::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
