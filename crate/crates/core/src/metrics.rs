//! Prediction-variance weights and the mappings built on them.
//!
//! Every instance keeps the last [`HISTORY_CAPACITY`] predicted
//! probabilities of its (observed) target class. The population variance of
//! that window is the instance's weight; it feeds the bandits as a reward,
//! a Boltzmann sampler as an energy, or the loss as a re-weighting factor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HISTORY_CAPACITY: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("metric parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Sliding window of target-class probabilities, most recent last.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionHistory {
    window: VecDeque<f64>,
    observations: u64,
}

impl PredictionHistory {
    pub fn new() -> Self {
        Self {
            window: VecDeque::with_capacity(HISTORY_CAPACITY),
            observations: 0,
        }
    }

    pub fn record(&mut self, p_target: f64) -> Result<(), MetricError> {
        if !(0.0..=1.0).contains(&p_target) {
            return Err(MetricError::ProbabilityOutOfRange(p_target));
        }
        if self.window.len() == HISTORY_CAPACITY {
            self.window.pop_front();
        }
        self.window.push_back(p_target);
        self.observations += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Total number of probabilities ever recorded.
    pub fn observations(&self) -> u64 {
        self.observations
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    /// Population variance of the window; zero with fewer than two entries.
    pub fn variance(&self) -> f64 {
        variance_weight(self.window.iter().copied())
    }
}

/// Population variance, or zero for fewer than two values. Bounded by 0.25
/// for inputs in `[0, 1]`.
pub fn variance_weight(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Boltzmann temperature.
    pub temperature: f64,
    /// Multiplier mapping a variance to a reward before clipping at one.
    pub reward_scale: f64,
    /// Added to every variance before loss re-weighting.
    pub loss_weight_floor: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            reward_scale: 4.0,
            loss_weight_floor: 1e-3,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        for (name, value) in [
            ("temperature", self.temperature),
            ("reward_scale", self.reward_scale),
            ("loss_weight_floor", self.loss_weight_floor),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MetricError::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

/// `min(1, reward_scale * w)`.
pub fn reward_from_weight(weight: f64, config: &MetricConfig) -> f64 {
    (config.reward_scale * weight.max(0.0)).min(1.0)
}

/// `exp(w_i / tau) / Z`, shifted by the maximum before exponentiation.
pub fn boltzmann_pmf(weights: &[f64], temperature: f64) -> Vec<f64> {
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = weights.iter().map(|&w| ((w - max) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Loss weights `(v_i + eps) / mean_j(v_j + eps)`; their mean is one.
pub fn active_bias_loss_weights(variances: &[f64], floor: f64) -> Vec<f64> {
    if variances.is_empty() {
        return Vec::new();
    }
    let shifted: Vec<f64> = variances.iter().map(|v| v + floor).collect();
    let mean = shifted.iter().sum::<f64>() / shifted.len() as f64;
    shifted.into_iter().map(|v| v / mean).collect()
}
