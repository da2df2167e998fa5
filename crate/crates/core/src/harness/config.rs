use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::bandit::PerturbationFamily;
use crate::metrics::MetricConfig;

/// Declarative description of one experiment.
///
/// Read from TOML; every key is optional and falls back to the desk-scale
/// defaults. Sections may be written as tables (`[sampler.fpl]`) or as
/// dotted keys (`sampler.fpl.eta = 18`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub noise: NoiseConfig,
    pub sampler: SamplerConfig,
    pub trainer: TrainerConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Total instances before the train/test split (blobs only).
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    pub spread: f64,
    pub path: Option<PathBuf>,
    pub has_header: bool,
    pub test_fraction: f64,
    /// Fixes the data and split independently of the run seed.
    pub seed: Option<u64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Blobs,
            n: 4000,
            dim: 20,
            classes: 10,
            spread: 0.6,
            path: None,
            has_header: false,
            test_fraction: 0.5,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub ratios: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { ratios: vec![0.4] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    ActiveBias,
    Exp3,
    Fpl,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::ActiveBias => "active_bias",
            SamplerKind::Exp3 => "exp3",
            SamplerKind::Fpl => "fpl",
        }
    }

    pub fn is_bandit(self) -> bool {
        matches!(self, SamplerKind::Exp3 | SamplerKind::Fpl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp3Params {
    pub eta: f64,
    pub gamma: f64,
}

impl Default for Exp3Params {
    fn default() -> Self {
        Self { eta: 0.3, gamma: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FplParams {
    pub eta: f64,
    /// Perturbation scale.
    pub beta: f64,
    /// Fréchet shape.
    pub shape: f64,
    pub family: PerturbationFamily,
    /// Geometric re-sampling cap.
    pub gr_cap: u32,
}

impl Default for FplParams {
    fn default() -> Self {
        Self {
            eta: 18.0,
            beta: 20.0,
            shape: 0.45,
            family: PerturbationFamily::Frechet,
            gr_cap: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub exp3: Exp3Params,
    pub fpl: FplParams,
    pub metric: MetricConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Fpl,
            exp3: Exp3Params::default(),
            fpl: FplParams::default(),
            metric: MetricConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub decay_factor: f64,
    /// Decay points as fractions of the total iteration count.
    pub decay_at: Vec<f64>,
    /// Explicit decay iterations; overrides `decay_at` when present.
    pub decay_iterations: Option<Vec<u64>>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 0.1,
            momentum: 0.9,
            decay_factor: 0.1,
            decay_at: vec![0.5, 0.75],
            decay_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub batch_size: usize,
    /// Total epochs, warm-up included.
    pub epochs: usize,
    /// Defaults to `ceil(n_train / batch_size)`.
    pub iterations_per_epoch: Option<usize>,
    pub warmup_epochs: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// File-name prefix; defaults to the sampler name.
    pub label: Option<String>,
    /// Emit one record per training iteration.
    pub log_iterations: bool,
    /// Epoch cadence of per-instance selection-count snapshots.
    pub snapshot_every: usize,
    /// Store per-instance sampler weights alongside each count snapshot.
    pub snapshot_weights: bool,
    /// Write the final model next to the run records.
    pub save_model: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 60,
            iterations_per_epoch: None,
            warmup_epochs: 1,
            seeds: vec![0, 1, 2, 3, 4],
            out: PathBuf::from("runs"),
            label: None,
            log_iterations: false,
            snapshot_every: 1,
            snapshot_weights: false,
            save_model: false,
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml_str(&text)?;
        // Relative CSV paths are resolved against the config file.
        if let (Some(p), Some(dir)) = (config.dataset.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn label(&self) -> String {
        self.run
            .label
            .clone()
            .unwrap_or_else(|| self.sampler.kind.name().to_string())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let d = &self.dataset;
        if d.kind == DatasetKind::Csv && d.path.is_none() {
            return Err(invalid("dataset.path is required for csv datasets"));
        }
        if d.kind == DatasetKind::Blobs && (d.classes < 2 || d.n < d.classes || d.dim == 0) {
            return Err(invalid("dataset needs classes >= 2, n >= classes, dim >= 1"));
        }
        if !(d.spread >= 0.0 && d.spread.is_finite()) {
            return Err(invalid("dataset.spread must be >= 0"));
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(invalid("dataset.test_fraction must be in (0, 1)"));
        }
        if self.noise.ratios.is_empty() {
            return Err(invalid("noise.ratios must not be empty"));
        }
        if let Some(r) = self.noise.ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(invalid(format!("noise ratio {r} must be in [0, 1)")));
        }
        let s = &self.sampler;
        if !(s.exp3.gamma > 0.0 && s.exp3.gamma <= 1.0) || !(s.exp3.eta > 0.0) {
            return Err(invalid("sampler.exp3 needs eta > 0 and gamma in (0, 1]"));
        }
        if !(s.fpl.eta > 0.0 && s.fpl.beta > 0.0 && s.fpl.shape > 0.0) || s.fpl.gr_cap == 0 {
            return Err(invalid("sampler.fpl needs positive eta, beta, shape and gr_cap"));
        }
        s.metric.validate().map_err(|e| invalid(e.to_string()))?;
        let t = &self.trainer;
        if t.hidden == 0 || !(t.learning_rate > 0.0) || !(0.0..1.0).contains(&t.momentum) {
            return Err(invalid("trainer needs hidden >= 1, learning_rate > 0, momentum in [0, 1)"));
        }
        if !(t.decay_factor > 0.0 && t.decay_factor <= 1.0) {
            return Err(invalid("trainer.decay_factor must be in (0, 1]"));
        }
        if t.decay_at.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(invalid("trainer.decay_at fractions must be in [0, 1]"));
        }
        let r = &self.run;
        if r.batch_size == 0 || r.seeds.is_empty() || r.snapshot_every == 0 {
            return Err(invalid("run needs batch_size >= 1, snapshot_every >= 1 and at least one seed"));
        }
        if r.iterations_per_epoch == Some(0) {
            return Err(invalid("run.iterations_per_epoch must be positive"));
        }
        if r.label.as_deref().is_some_and(|l| l.is_empty() || l.contains(['/', '\\'])) {
            return Err(invalid("run.label must be a non-empty file-name fragment"));
        }
        Ok(())
    }

    /// Short digest of everything that affects results (the output directory
    /// is excluded).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.run.out = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
