//! A one-hidden-layer softmax classifier trained by momentum descent.
//!
//! Parameters live in one flat vector laid out as `W1 (H x D)`, `b1 (H)`,
//! `W2 (C x H)`, `b2 (C)`, all row-major. Gradients use the same layout.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::data::Dataset;
use crate::rng::{stream, Stream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite input feature")]
    NonFiniteInput,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("parameters became non-finite at iteration {iteration}")]
    Diverged { iteration: u64 },
    #[error("invalid optimizer setting {name} = {value}")]
    InvalidSetting { name: &'static str, value: f64 },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    params: Vec<f64>,
}

/// Output of one forward/backward pass over a batch.
#[derive(Debug, Clone)]
pub struct LossAndGrads {
    pub loss: f64,
    pub grads: Vec<f64>,
    /// Predicted probability of each instance's label, before any update.
    pub target_probs: Vec<f64>,
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

impl MlpModel {
    pub fn param_count(input: usize, hidden: usize, classes: usize) -> usize {
        input * hidden + hidden + hidden * classes + classes
    }

    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            input,
            hidden,
            classes,
            params: vec![0.0; Self::param_count(input, hidden, classes)],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut model = Self::zeros(input, hidden, classes);
        let mut rng = stream(seed, Stream::Init);
        let o = model.offsets();
        let l1 = (6.0 / (input + hidden) as f64).sqrt();
        for w in &mut model.params[..o.b1] {
            *w = rng.random_range(-l1..l1);
        }
        let l2 = (6.0 / (hidden + classes) as f64).sqrt();
        for w in &mut model.params[o.w2..o.b2] {
            *w = rng.random_range(-l2..l2);
        }
        model
    }

    pub fn from_params(input: usize, hidden: usize, classes: usize, params: Vec<f64>) -> Result<Self, TrainError> {
        let expected = Self::param_count(input, hidden, classes);
        if params.len() != expected {
            return Err(TrainError::LengthMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            input,
            hidden,
            classes,
            params,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn offsets(&self) -> Offsets {
        let b1 = self.input * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.classes;
        Offsets { b1, w2, b2 }
    }

    /// Hidden activations (pre-ReLU) and logits for one row.
    fn row_pass(&self, x: &[f64], z1: &mut [f64], logits: &mut [f64]) {
        let o = self.offsets();
        let (d, h) = (self.input, self.hidden);
        for j in 0..h {
            let w = &self.params[j * d..(j + 1) * d];
            z1[j] = self.params[o.b1 + j] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        for c in 0..self.classes {
            let w = &self.params[o.w2 + c * h..o.w2 + (c + 1) * h];
            logits[c] = self.params[o.b2 + c] + w.iter().zip(z1.iter()).map(|(a, &z)| a * z.max(0.0)).sum::<f64>();
        }
    }

    fn check_batch(&self, features: &[f64]) -> Result<usize, TrainError> {
        if !features.len().is_multiple_of(self.input) {
            return Err(TrainError::LengthMismatch {
                expected: (features.len() / self.input + 1) * self.input,
                got: features.len(),
            });
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(TrainError::NonFiniteInput);
        }
        Ok(features.len() / self.input)
    }

    /// Row-major `m x C` class probabilities for a row-major `m x D` batch.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>, TrainError> {
        let m = self.check_batch(features)?;
        let mut z1 = vec![0.0; self.hidden];
        let mut out = vec![0.0; m * self.classes];
        for (x, probs) in features.chunks_exact(self.input).zip(out.chunks_exact_mut(self.classes)) {
            self.row_pass(x, &mut z1, probs);
            softmax_in_place(probs);
        }
        Ok(out)
    }

    /// Weighted mean cross-entropy and its exact gradient.
    pub fn loss_and_grads(&self, features: &[f64], labels: &[usize], loss_weights: &[f64]) -> Result<LossAndGrads, TrainError> {
        let m = self.check_batch(features)?;
        for len in [labels.len(), loss_weights.len()] {
            if len != m {
                return Err(TrainError::LengthMismatch { expected: m, got: len });
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.classes) {
            return Err(TrainError::LabelOutOfRange {
                label,
                classes: self.classes,
            });
        }
        let o = self.offsets();
        let (d, h, c) = (self.input, self.hidden, self.classes);
        let mut grads = vec![0.0; self.params.len()];
        let mut target_probs = Vec::with_capacity(m);
        let mut loss = 0.0;
        let mut z1 = vec![0.0; h];
        let mut logits = vec![0.0; c];
        let mut dz1 = vec![0.0; h];
        let scale = 1.0 / m as f64;

        for ((x, &y), &weight) in features.chunks_exact(d).zip(labels).zip(loss_weights) {
            self.row_pass(x, &mut z1, &mut logits);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            loss += weight * (lse - logits[y]);
            softmax_in_place(&mut logits);
            target_probs.push(logits[y]);

            // dL/dlogits = w * (p - onehot) / m
            let probs = &mut logits;
            probs[y] -= 1.0;
            for g in probs.iter_mut() {
                *g *= weight * scale;
            }
            let dlogits = &*probs;
            dz1.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..c {
                let g = dlogits[k];
                grads[o.b2 + k] += g;
                let row = o.w2 + k * h;
                for j in 0..h {
                    let a = z1[j].max(0.0);
                    grads[row + j] += g * a;
                    dz1[j] += g * self.params[row + j];
                }
            }
            for j in 0..h {
                if z1[j] <= 0.0 {
                    continue;
                }
                let g = dz1[j];
                grads[o.b1 + j] += g;
                for (gw, &xi) in grads[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gw += g * xi;
                }
            }
        }
        Ok(LossAndGrads {
            loss: loss * scale,
            grads,
            target_probs,
        })
    }

    /// Most probable class per row, lowest index on ties.
    pub fn predict(&self, features: &[f64]) -> Result<Vec<usize>, TrainError> {
        let probs = self.forward(features)?;
        Ok(probs.chunks_exact(self.classes).map(argmax).collect())
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>, iteration: u64) -> Result<(), TrainError> {
        std::fs::write(path, self.checkpoint_text(iteration))?;
        Ok(())
    }

    /// Text checkpoint: a header of `key value` lines, then one parameter per
    /// line in round-trip decimal form.
    ///
    /// ```text
    /// bandit-batch-mlp 1
    /// dims <D> <H> <C>
    /// iteration <n>
    /// params <P>
    /// <P lines>
    /// ```
    pub fn checkpoint_text(&self, iteration: u64) -> String {
        let mut s = String::with_capacity(self.params.len() * 24 + 64);
        let _ = writeln!(s, "bandit-batch-mlp 1");
        let _ = writeln!(s, "dims {} {} {}", self.input, self.hidden, self.classes);
        let _ = writeln!(s, "iteration {iteration}");
        let _ = writeln!(s, "params {}", self.params.len());
        for p in &self.params {
            let _ = writeln!(s, "{p:?}");
        }
        s
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Self, u64), TrainError> {
        Self::parse_checkpoint(&std::fs::read_to_string(path)?)
    }

    pub fn parse_checkpoint(text: &str) -> Result<(Self, u64), TrainError> {
        let bad = |m: &str| TrainError::Checkpoint(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("bandit-batch-mlp 1") {
            return Err(bad("missing header"));
        }
        let mut field = |key: &str| -> Result<Vec<usize>, TrainError> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected `{key}`")));
            }
            parts
                .map(|p| p.parse().map_err(|_| bad(&format!("bad `{key}` value"))))
                .collect()
        };
        let dims = field("dims")?;
        let iteration = field("iteration")?;
        let count = field("params")?;
        let (&[d, h, c], &[iteration], &[count]) = (&dims[..], &iteration[..], &count[..]) else {
            return Err(bad("malformed header"));
        };
        let params = lines
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad("bad parameter")))
            .collect::<Result<Vec<_>, _>>()?;
        if params.len() != count {
            return Err(bad("parameter count mismatch"));
        }
        Ok((Self::from_params(d, h, c, params)?, iteration as u64))
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Momentum descent with a step learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<f64>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub decay_factor: f64,
    decay_iterations: Vec<u64>,
}

impl OptimizerState {
    pub fn new(
        param_count: usize,
        learning_rate: f64,
        momentum: f64,
        decay_factor: f64,
        mut decay_iterations: Vec<u64>,
    ) -> Result<Self, TrainError> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(TrainError::InvalidSetting {
                name: "learning_rate",
                value: learning_rate,
            });
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(TrainError::InvalidSetting {
                name: "momentum",
                value: momentum,
            });
        }
        if !(decay_factor > 0.0 && decay_factor <= 1.0) {
            return Err(TrainError::InvalidSetting {
                name: "decay_factor",
                value: decay_factor,
            });
        }
        decay_iterations.sort_unstable();
        Ok(Self {
            velocity: vec![0.0; param_count],
            learning_rate,
            momentum,
            decay_factor,
            decay_iterations,
        })
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn decay_iterations(&self) -> &[u64] {
        &self.decay_iterations
    }

    /// Base rate times `decay_factor` per threshold already reached.
    pub fn effective_rate(&self, iteration: u64) -> f64 {
        let passed = self.decay_iterations.iter().filter(|&&t| t <= iteration).count();
        self.learning_rate * self.decay_factor.powi(passed as i32)
    }

    /// `v = momentum * v - rate * g; params += v`.
    pub fn step(&mut self, model: &mut MlpModel, grads: &[f64], iteration: u64) -> Result<(), TrainError> {
        if grads.len() != self.velocity.len() || model.params.len() != self.velocity.len() {
            return Err(TrainError::LengthMismatch {
                expected: self.velocity.len(),
                got: grads.len(),
            });
        }
        let rate = self.effective_rate(iteration);
        for ((v, p), &g) in self.velocity.iter_mut().zip(model.params.iter_mut()).zip(grads) {
            *v = self.momentum * *v - rate * g;
            *p += *v;
        }
        if model.is_finite() {
            Ok(())
        } else {
            Err(TrainError::Diverged { iteration })
        }
    }
}

/// Row-major features and observed labels for the given instance positions.
pub fn gather(dataset: &Dataset, positions: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut features = Vec::with_capacity(positions.len() * dataset.dim);
    let mut labels = Vec::with_capacity(positions.len());
    for &i in positions {
        let inst = &dataset.instances[i];
        features.extend_from_slice(&inst.features);
        labels.push(inst.observed_label);
    }
    (features, labels)
}

/// Fraction of instances whose argmax prediction differs from the label.
pub fn evaluate(model: &MlpModel, dataset: &Dataset) -> Result<f64, TrainError> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (features, labels) = gather(dataset, &all);
    let predicted = model.predict(&features)?;
    let wrong = predicted.iter().zip(&labels).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / dataset.len() as f64)
}
