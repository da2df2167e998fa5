use std::cmp::Ordering;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_rewards, BanditError, BatchSelection, PerturbationFamily, PerturbationSpec};

/// Reward-guided Follow the Perturbed Leader over `m`-sets.
///
/// Each round picks the `m` arms with the largest `eta * weight + noise`.
/// Picked arms receive an importance-weighted reward whose inverse inclusion
/// probability is estimated by geometric re-sampling, capped at `gr_cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FplState {
    weights: Vec<f64>,
    eta: f64,
    perturbation: PerturbationSpec,
    gr_cap: u32,
    batch_size: usize,
    round: u64,
}

/// Orders `(score, index)` pairs best-first: higher score, then lower index.
#[inline]
fn rank(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Indices of the `m` best scores, ascending by index. Ties go to the lower
/// index.
pub(crate) fn top_m(scores: &[f64], m: usize, scratch: &mut Vec<usize>) -> Vec<usize> {
    scratch.clear();
    scratch.extend(0..scores.len());
    if m < scores.len() {
        scratch.select_nth_unstable_by(m - 1, |&a, &b| rank(scores, a, b));
    }
    let mut out = scratch[..m].to_vec();
    out.sort_unstable();
    out
}

/// Per-arm uniform thresholds for a score level `level`: an arm whose
/// uniform fails its threshold scores strictly below `level`. The level is
/// set so that about `3m + 16` arms are expected to pass.
struct Pruning {
    level: f64,
    family: PerturbationFamily,
    thresholds: Vec<f64>,
}

impl Pruning {
    const SLACK: f64 = 1e-9;

    fn new(state: &FplState) -> Option<Self> {
        let d = state.arms();
        let target = (3 * state.batch_size + 16) as f64;
        // Setup costs a few passes over the arms; only worth it when most
        // arms can be skipped.
        if 4.0 * target > d as f64 {
            return None;
        }
        let spec = state.perturbation;
        let base: Vec<f64> = state.weights.iter().map(|&w| state.eta * w).collect();
        let tail = |t: f64| -> f64 {
            if t <= 0.0 {
                return 1.0;
            }
            match spec.family {
                PerturbationFamily::Frechet => -(-(t / spec.scale).powf(-spec.shape)).exp_m1(),
                PerturbationFamily::Exponential => (-t / spec.scale).exp(),
            }
        };
        let expected = |level: f64| base.iter().map(|&b| tail(level - b)).sum::<f64>();
        let mut lo = base.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = base.iter().copied().fold(f64::NEG_INFINITY, f64::max) + spec.scale;
        while expected(hi) > target {
            hi = lo + 2.0 * (hi - lo);
            if !hi.is_finite() {
                return None;
            }
        }
        // Any level is exact; closeness to the target only affects speed.
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let e = expected(mid);
            if e > target {
                lo = mid;
            } else {
                hi = mid;
                if e > 0.75 * target {
                    break;
                }
            }
        }
        let level = hi;
        let thresholds = base
            .iter()
            .map(|&b| {
                let t = level - b;
                match spec.family {
                    // rho > t  <=>  u > exp(-(t / scale)^(-shape))
                    PerturbationFamily::Frechet if t > 0.0 => {
                        (-(t / spec.scale).powf(-spec.shape)).exp() - Self::SLACK
                    }
                    PerturbationFamily::Frechet => f64::NEG_INFINITY,
                    // rho > t  <=>  u < exp(-t / scale)
                    PerturbationFamily::Exponential if t > 0.0 => (-t / spec.scale).exp() + Self::SLACK,
                    PerturbationFamily::Exponential => f64::INFINITY,
                }
            })
            .collect();
        Some(Self {
            level,
            family: spec.family,
            thresholds,
        })
    }

    #[inline]
    fn may_exceed(&self, arm: usize, u: f64) -> bool {
        match self.family {
            PerturbationFamily::Frechet => u > self.thresholds[arm],
            PerturbationFamily::Exponential => u < self.thresholds[arm],
        }
    }
}

impl FplState {
    pub fn new(
        arms: usize,
        batch_size: usize,
        eta: f64,
        perturbation: PerturbationSpec,
        gr_cap: u32,
    ) -> Result<Self, BanditError> {
        if arms == 0 {
            return Err(BanditError::NoArms);
        }
        if batch_size == 0 {
            return Err(BanditError::EmptyBatch);
        }
        if batch_size > arms {
            return Err(BanditError::BatchTooLarge { m: batch_size, k: arms });
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(BanditError::InvalidParameter { name: "eta", value: eta });
        }
        if gr_cap == 0 {
            return Err(BanditError::InvalidParameter { name: "gr_cap", value: 0.0 });
        }
        Ok(Self {
            weights: vec![0.0; arms],
            eta,
            perturbation: perturbation.validated()?,
            gr_cap,
            batch_size,
            round: 0,
        })
    }

    /// Replaces the cumulative reward estimates. Every weight must be finite
    /// and non-negative.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, BanditError> {
        if weights.len() != self.weights.len() {
            return Err(BanditError::LengthMismatch {
                expected: self.weights.len(),
                got: weights.len(),
            });
        }
        if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(BanditError::InvalidParameter { name: "weight", value: w });
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn arms(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn perturbation(&self) -> &PerturbationSpec {
        &self.perturbation
    }

    pub fn gr_cap(&self) -> u32 {
        self.gr_cap
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    fn scores_into(&self, perturbations: &[f64], out: &mut [f64]) {
        for ((s, &w), &rho) in out.iter_mut().zip(&self.weights).zip(perturbations) {
            *s = self.eta * w + rho;
        }
    }

    /// The `m`-set maximizing `<a, eta * w + perturbations>`.
    pub fn select_batch(&self, perturbations: &[f64]) -> Result<BatchSelection, BanditError> {
        if perturbations.len() != self.arms() {
            return Err(BanditError::LengthMismatch {
                expected: self.arms(),
                got: perturbations.len(),
            });
        }
        let mut scores = vec![0.0; self.arms()];
        self.scores_into(perturbations, &mut scores);
        let mut scratch = Vec::with_capacity(self.arms());
        Ok(BatchSelection::from_unchecked(top_m(&scores, self.batch_size, &mut scratch)))
    }

    /// Samples fresh perturbations and selects a batch with them.
    pub fn draw_batch<R: Rng + ?Sized>(&self, rng: &mut R) -> BatchSelection {
        let mut rho = vec![0.0; self.arms()];
        self.perturbation.fill(rng, &mut rho);
        self.select_batch(&rho).expect("perturbation length matches arms")
    }

    /// Geometric re-sampling for every arm in `selection`.
    ///
    /// One loop of at most `gr_cap` iterations draws fresh perturbations and
    /// recomputes the best `m`-set; an arm's count is the first iteration at
    /// which it is selected again. Arms that never recur get `gr_cap`. The
    /// returned counts line up with `selection.indices()`.
    ///
    /// Consumes exactly one uniform per arm per iteration and gives the same
    /// result as scoring every arm; only arms whose uniform can clear a
    /// precomputed level are scored in full.
    pub fn geometric_resample<R: Rng + ?Sized>(&self, selection: &BatchSelection, rng: &mut R) -> Vec<u32> {
        let d = self.arms();
        let m = self.batch_size;
        let mut sigmas = vec![0u32; selection.len()];
        let mut pending: Vec<usize> = (0..selection.len()).collect();
        let mut uniforms = vec![0.0; d];
        let mut scores = vec![f64::NEG_INFINITY; d];
        let mut stamp = vec![0u32; d];
        let mut candidates: Vec<usize> = Vec::with_capacity(d);
        let mut order: Vec<usize> = Vec::with_capacity(d);
        let all: Vec<usize> = (0..d).collect();
        let pruning = Pruning::new(self);

        for iteration in 1..=self.gr_cap {
            // Either every arm is scored, or only `candidates` (marked in `stamp`).
            let mut full = true;
            if let Some(p) = &pruning {
                candidates.clear();
                for (j, u) in uniforms.iter_mut().enumerate() {
                    *u = rng.sample(Open01);
                    if p.may_exceed(j, *u) {
                        candidates.push(j);
                    }
                }
                let mut above = 0usize;
                for &j in &candidates {
                    let s = self.eta * self.weights[j] + self.perturbation.from_uniform(uniforms[j]);
                    scores[j] = s;
                    stamp[j] = iteration;
                    above += usize::from(s > p.level);
                }
                if above >= m {
                    full = false;
                } else {
                    // Too few arms cleared the level; score everything.
                    for j in 0..d {
                        scores[j] = self.eta * self.weights[j] + self.perturbation.from_uniform(uniforms[j]);
                    }
                }
            } else {
                self.perturbation.fill(rng, &mut uniforms);
                self.scores_into(&uniforms, &mut scores);
            }
            // The m-th best (score, index) pair is the admission threshold.
            let pool: &[usize] = if full { &all } else { &candidates };
            let (cut_score, cut_index) = if m >= pool.len() {
                (f64::NEG_INFINITY, usize::MAX)
            } else if m == 1 {
                let best = pool
                    .iter()
                    .copied()
                    .reduce(|a, b| if rank(&scores, b, a).is_lt() { b } else { a })
                    .expect("pool is not empty");
                (scores[best], best)
            } else {
                order.clear();
                order.extend_from_slice(pool);
                order.select_nth_unstable_by(m - 1, |&a, &b| rank(&scores, a, b));
                let c = order[m - 1];
                (scores[c], c)
            };
            pending.retain(|&slot| {
                let arm = selection.indices()[slot];
                if !full && stamp[arm] != iteration {
                    return true;
                }
                let s = scores[arm];
                let admitted = s > cut_score || (s == cut_score && arm <= cut_index);
                if admitted {
                    sigmas[slot] = iteration;
                }
                !admitted
            });
            if pending.is_empty() {
                break;
            }
        }
        for slot in pending {
            sigmas[slot] = self.gr_cap;
        }
        sigmas
    }

    /// `w_i += min(M, sigma_i) * r_i` for every selected arm.
    pub fn update(&mut self, selection: &BatchSelection, rewards: &[f64], sigmas: &[u32]) -> Result<(), BanditError> {
        check_rewards(selection, rewards)?;
        if sigmas.len() != selection.len() {
            return Err(BanditError::LengthMismatch {
                expected: selection.len(),
                got: sigmas.len(),
            });
        }
        for ((&i, &r), &sigma) in selection.indices().iter().zip(rewards).zip(sigmas) {
            self.weights[i] += f64::from(sigma.min(self.gr_cap)) * r;
        }
        self.round += 1;
        Ok(())
    }
}
