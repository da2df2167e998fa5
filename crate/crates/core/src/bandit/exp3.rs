use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_rewards, BanditError, BatchSelection};

/// Exp3 with a uniform exploration floor, stored in log space.
///
/// `gamma` mixes the exponential-weights distribution with the uniform one;
/// `eta` scales the importance-weighted reward estimate in the exponent.
/// After each update the log weights are shifted so their maximum is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3State {
    log_weights: Vec<f64>,
    gamma: f64,
    eta: f64,
    round: u64,
}

impl Exp3State {
    /// All weights start equal.
    pub fn new(arms: usize, gamma: f64, eta: f64) -> Result<Self, BanditError> {
        Self::from_log_weights(vec![0.0; arms], gamma, eta)
    }

    pub fn from_log_weights(log_weights: Vec<f64>, gamma: f64, eta: f64) -> Result<Self, BanditError> {
        if log_weights.is_empty() {
            return Err(BanditError::NoArms);
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(BanditError::InvalidParameter { name: "gamma", value: gamma });
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(BanditError::InvalidParameter { name: "eta", value: eta });
        }
        if let Some(&w) = log_weights.iter().find(|w| !w.is_finite()) {
            return Err(BanditError::InvalidParameter { name: "log_weight", value: w });
        }
        let mut state = Self {
            log_weights,
            gamma,
            eta,
            round: 0,
        };
        state.normalize();
        Ok(state)
    }

    /// Builds a state from strictly positive linear-scale weights.
    pub fn from_weights(weights: &[f64], gamma: f64, eta: f64) -> Result<Self, BanditError> {
        if let Some(&w) = weights.iter().find(|&&w| !(w > 0.0)) {
            return Err(BanditError::InvalidParameter { name: "weight", value: w });
        }
        Self::from_log_weights(weights.iter().map(|w| w.ln()).collect(), gamma, eta)
    }

    pub fn arms(&self) -> usize {
        self.log_weights.len()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Weights normalized to sum to one, without the exploration floor.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let max = self.max_log_weight();
        let w: Vec<f64> = self.log_weights.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// `(1 - gamma) * w / sum(w) + gamma / K`.
    pub fn pmf(&self) -> Vec<f64> {
        let k = self.arms() as f64;
        let floor = self.gamma / k;
        self.normalized_weights()
            .into_iter()
            .map(|q| (1.0 - self.gamma) * q + floor)
            .collect()
    }

    /// Draws `m` distinct arms one at a time from `pmf`, renormalizing over
    /// the arms not yet taken after every draw.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        pmf: &[f64],
        m: usize,
        rng: &mut R,
    ) -> Result<BatchSelection, BanditError> {
        let k = self.arms();
        if pmf.len() != k {
            return Err(BanditError::LengthMismatch { expected: k, got: pmf.len() });
        }
        if m == 0 {
            return Err(BanditError::EmptyBatch);
        }
        if m > k {
            return Err(BanditError::BatchTooLarge { m, k });
        }
        let mut taken = vec![false; k];
        let mut picked = Vec::with_capacity(m);
        for _ in 0..m {
            let total: f64 = pmf.iter().zip(&taken).filter(|(_, &t)| !t).map(|(p, _)| p).sum();
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut choice = None;
            for (i, (&p, &t)) in pmf.iter().zip(&taken).enumerate() {
                if t {
                    continue;
                }
                choice = Some(i);
                acc += p;
                if target < acc {
                    break;
                }
            }
            // Rounding can leave `target` at the very end; the last free arm takes it.
            let i = choice.expect("m <= k leaves a free arm");
            taken[i] = true;
            picked.push(i);
        }
        Ok(BatchSelection::from_unchecked(picked))
    }

    /// Importance-weighted estimates `r_j / p_j` for the selected arms.
    pub fn reward_estimates(
        &self,
        selection: &BatchSelection,
        rewards: &[f64],
        pmf: &[f64],
    ) -> Result<Vec<f64>, BanditError> {
        check_rewards(selection, rewards)?;
        if pmf.len() != self.arms() {
            return Err(BanditError::LengthMismatch {
                expected: self.arms(),
                got: pmf.len(),
            });
        }
        Ok(selection
            .indices()
            .iter()
            .zip(rewards)
            .map(|(&j, &r)| r / pmf[j])
            .collect())
    }

    /// `log_weight[j] += eta * r_j / p_j` for every selected `j`, with `pmf`
    /// being the distribution the batch was drawn from.
    pub fn update(&mut self, selection: &BatchSelection, rewards: &[f64], pmf: &[f64]) -> Result<(), BanditError> {
        let estimates = self.reward_estimates(selection, rewards, pmf)?;
        for (&j, r_hat) in selection.indices().iter().zip(estimates) {
            self.log_weights[j] += self.eta * r_hat;
        }
        self.normalize();
        self.round += 1;
        Ok(())
    }

    fn max_log_weight(&self) -> f64 {
        self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn normalize(&mut self) {
        let max = self.max_log_weight();
        for l in &mut self.log_weights {
            *l -= max;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use approx::assert_abs_diff_eq;

    #[test]
    fn pmf_examples() {
        let s = Exp3State::new(2, 0.1, 0.3).unwrap();
        assert_eq!(s.pmf(), vec![0.5, 0.5]);

        let s = Exp3State::from_weights(&[2.0, 1.0, 1.0], 1e-300, 0.3).unwrap();
        let p = s.pmf();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.25, epsilon = 1e-12);

        let s = Exp3State::from_weights(&[3.0, 1.0], 0.2, 0.3).unwrap();
        let p = s.pmf();
        assert_abs_diff_eq!(p[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(Exp3State::new(0, 0.1, 0.3).is_err());
        assert!(Exp3State::new(3, 0.0, 0.3).is_err());
        assert!(Exp3State::new(3, 1.5, 0.3).is_err());
        assert!(Exp3State::new(3, 0.1, 0.0).is_err());
        assert!(Exp3State::new(3, 1.0, 0.3).is_ok());
    }

    #[test]
    fn full_batch_covers_every_arm() {
        let s = Exp3State::from_weights(&[5.0, 1.0, 0.1], 0.1, 0.3).unwrap();
        let pmf = s.pmf();
        let mut sel = s.sample_batch(&pmf, 3, &mut stream(1, Stream::Sampler)).unwrap().into_indices();
        sel.sort();
        assert_eq!(sel, vec![0, 1, 2]);
    }

    #[test]
    fn batch_too_large_is_an_error() {
        let s = Exp3State::new(3, 0.1, 0.3).unwrap();
        let pmf = s.pmf();
        assert_eq!(
            s.sample_batch(&pmf, 4, &mut stream(1, Stream::Sampler)),
            Err(BanditError::BatchTooLarge { m: 4, k: 3 })
        );
    }

    #[test]
    fn sampling_is_seeded_and_distinct() {
        let s = Exp3State::new(100, 0.1, 0.3).unwrap();
        let pmf = s.pmf();
        let a = s.sample_batch(&pmf, 10, &mut stream(5, Stream::Sampler)).unwrap();
        let b = s.sample_batch(&pmf, 10, &mut stream(5, Stream::Sampler)).unwrap();
        assert_eq!(a, b);
        assert!(BatchSelection::new(a.into_indices(), 100).is_ok());
    }

    #[test]
    fn update_examples() {
        let mut s = Exp3State::new(2, 0.1, 0.1).unwrap();
        let pmf = vec![0.5, 0.5];
        let sel = BatchSelection::new(vec![0], 2).unwrap();
        s.update(&sel, &[1.0], &pmf).unwrap();
        // +0.2 on arm 0, then shifted so the max is 0.
        assert_abs_diff_eq!(s.log_weights()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.log_weights()[1], -0.2, epsilon = 1e-15);
        assert_eq!(s.round(), 1);

        let before = s.log_weights().to_vec();
        let sel = BatchSelection::new(vec![0, 1], 2).unwrap();
        s.update(&sel, &[0.0, 0.0], &pmf).unwrap();
        assert_eq!(s.log_weights(), &before[..]);
        assert_eq!(s.round(), 2);
    }

    #[test]
    fn update_rejects_out_of_range_reward() {
        let mut s = Exp3State::new(2, 0.1, 0.1).unwrap();
        let pmf = s.pmf();
        let sel = BatchSelection::new(vec![1], 2).unwrap();
        assert!(matches!(
            s.update(&sel, &[-0.1], &pmf),
            Err(BanditError::RewardOutOfRange { arm: 1, .. })
        ));
        assert_eq!(s.round(), 0);
    }

    #[test]
    fn huge_estimates_stay_finite() {
        let mut s = Exp3State::new(1000, 0.1, 0.3).unwrap();
        let mut rng = stream(2, Stream::Sampler);
        for _ in 0..200 {
            let pmf = s.pmf();
            let sel = s.sample_batch(&pmf, 8, &mut rng).unwrap();
            s.update(&sel, &[1.0; 8], &pmf).unwrap();
        }
        assert!(s.log_weights().iter().all(|w| w.is_finite()));
        let sum: f64 = s.pmf().iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
    }
}
