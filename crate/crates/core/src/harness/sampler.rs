use std::collections::VecDeque;

use rand::seq::SliceRandom;

use super::config::{SamplerConfig, SamplerKind};
use crate::bandit::{BanditError, BatchSelection, Exp3State, FplState, PerturbationSpec};
use crate::rng::{stream, Rng, Stream};

/// Shuffled passes over `0..n`, cut into batches of distinct indices.
///
/// A batch that straddles two passes takes the tail of one and the head of
/// the next; anything already in the batch is pushed back for later.
#[derive(Debug, Clone)]
pub struct EpochSweep {
    n: usize,
    queue: VecDeque<usize>,
    rng: Rng,
    in_batch: Vec<bool>,
}

impl EpochSweep {
    pub fn new(n: usize, rng: Rng) -> Self {
        Self {
            n,
            queue: VecDeque::with_capacity(n),
            rng,
            in_batch: vec![false; n],
        }
    }

    pub fn next_batch(&mut self, m: usize) -> Result<BatchSelection, BanditError> {
        if m == 0 {
            return Err(BanditError::EmptyBatch);
        }
        if m > self.n {
            return Err(BanditError::BatchTooLarge { m, k: self.n });
        }
        let mut batch = Vec::with_capacity(m);
        let mut deferred = Vec::new();
        while batch.len() < m {
            if self.queue.is_empty() {
                let mut pass: Vec<usize> = (0..self.n).collect();
                pass.shuffle(&mut self.rng);
                self.queue.extend(pass);
            }
            let i = self.queue.pop_front().expect("queue refilled");
            if self.in_batch[i] {
                deferred.push(i);
            } else {
                self.in_batch[i] = true;
                batch.push(i);
            }
        }
        for &i in &batch {
            self.in_batch[i] = false;
        }
        for i in deferred.into_iter().rev() {
            self.queue.push_front(i);
        }
        Ok(BatchSelection::from_unchecked(batch))
    }
}

/// The batch-selection policy driven by the training loop.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Sampler {
    Uniform(EpochSweep),
    /// Uniform selection; the loss is re-weighted by prediction variance.
    ActiveBias(EpochSweep),
    Exp3 {
        state: Exp3State,
        rng: Rng,
        /// Distribution the pending batch was drawn from.
        pmf: Vec<f64>,
    },
    Fpl {
        state: FplState,
        rng: Rng,
        resample_rng: Rng,
    },
}

impl Sampler {
    pub fn new(config: &SamplerConfig, arms: usize, batch_size: usize, seed: u64) -> Result<Self, BanditError> {
        let rng = stream(seed, Stream::Sampler);
        Ok(match config.kind {
            SamplerKind::Uniform => Sampler::Uniform(EpochSweep::new(arms, rng)),
            SamplerKind::ActiveBias => Sampler::ActiveBias(EpochSweep::new(arms, rng)),
            SamplerKind::Exp3 => Sampler::Exp3 {
                state: Exp3State::new(arms, config.exp3.gamma, config.exp3.eta)?,
                rng,
                pmf: Vec::new(),
            },
            SamplerKind::Fpl => {
                let p = &config.fpl;
                let spec = PerturbationSpec {
                    family: p.family,
                    shape: p.shape,
                    scale: p.beta,
                }
                .validated()?;
                Sampler::Fpl {
                    state: FplState::new(arms, batch_size, p.eta, spec, p.gr_cap)?,
                    rng,
                    resample_rng: stream(seed, Stream::Resample),
                }
            }
        })
    }

    pub fn kind(&self) -> SamplerKind {
        match self {
            Sampler::Uniform(_) => SamplerKind::Uniform,
            Sampler::ActiveBias(_) => SamplerKind::ActiveBias,
            Sampler::Exp3 { .. } => SamplerKind::Exp3,
            Sampler::Fpl { .. } => SamplerKind::Fpl,
        }
    }

    pub fn propose(&mut self, m: usize) -> Result<BatchSelection, BanditError> {
        match self {
            Sampler::Uniform(sweep) | Sampler::ActiveBias(sweep) => sweep.next_batch(m),
            Sampler::Exp3 { state, rng, pmf } => {
                *pmf = state.pmf();
                state.sample_batch(pmf, m, rng)
            }
            Sampler::Fpl { state, rng, .. } => {
                if m != state.batch_size() {
                    return Err(BanditError::LengthMismatch {
                        expected: state.batch_size(),
                        got: m,
                    });
                }
                Ok(state.draw_batch(rng))
            }
        }
    }

    /// Feeds per-arm rewards for the batch last returned by [`propose`].
    /// A no-op for the uniform samplers.
    ///
    /// [`propose`]: Sampler::propose
    pub fn observe(&mut self, selection: &BatchSelection, rewards: &[f64]) -> Result<(), BanditError> {
        match self {
            Sampler::Uniform(_) | Sampler::ActiveBias(_) => Ok(()),
            Sampler::Exp3 { state, pmf, .. } => state.update(selection, rewards, pmf),
            Sampler::Fpl {
                state, resample_rng, ..
            } => {
                let sigmas = state.geometric_resample(selection, resample_rng);
                state.update(selection, rewards, &sigmas)
            }
        }
    }

    /// Per-arm weights, for the samplers that keep any.
    pub fn weights(&self) -> Option<Vec<f64>> {
        match self {
            Sampler::Uniform(_) | Sampler::ActiveBias(_) => None,
            Sampler::Exp3 { state, .. } => Some(state.normalized_weights()),
            Sampler::Fpl { state, .. } => Some(state.weights().to_vec()),
        }
    }
}
