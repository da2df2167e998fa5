//! Adversarial bandits over training instances.
//!
//! Each instance is a basic arm. A round picks a batch of `m` distinct arms,
//! observes one reward in `[0, 1]` per picked arm (semi-bandit feedback), and
//! updates the learner. Nothing here knows about neural networks.

mod exp3;
mod fpl;
mod perturbation;

pub use exp3::Exp3State;
pub use fpl::FplState;
pub use perturbation::{sample_perturbation, PerturbationFamily, PerturbationSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BanditError {
    #[error("batch size {m} exceeds number of arms {k}")]
    BatchTooLarge { m: usize, k: usize },
    #[error("batch size must be positive")]
    EmptyBatch,
    #[error("bandit needs at least one arm")]
    NoArms,
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("reward {reward} for arm {arm} is outside [0, 1]")]
    RewardOutOfRange { arm: usize, reward: f64 },
    #[error("arm {arm} is out of range for {k} arms")]
    ArmOutOfRange { arm: usize, k: usize },
    #[error("arm {0} appears twice in a selection")]
    DuplicateArm(usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// The support of a binary action vector with exactly `m` ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSelection {
    indices: Vec<usize>,
}

impl BatchSelection {
    /// Validates that `indices` are distinct, non-empty, and below `k`.
    pub fn new(indices: Vec<usize>, k: usize) -> Result<Self, BanditError> {
        if indices.is_empty() {
            return Err(BanditError::EmptyBatch);
        }
        let mut seen = vec![false; k];
        for &i in &indices {
            if i >= k {
                return Err(BanditError::ArmOutOfRange { arm: i, k });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(BanditError::DuplicateArm(i));
            }
        }
        Ok(Self { indices })
    }

    pub(crate) fn from_unchecked(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, arm: usize) -> bool {
        self.indices.contains(&arm)
    }

    pub fn into_indices(self) -> Vec<usize> {
        self.indices
    }
}

pub(crate) fn check_rewards(selection: &BatchSelection, rewards: &[f64]) -> Result<(), BanditError> {
    if rewards.len() != selection.len() {
        return Err(BanditError::LengthMismatch {
            expected: selection.len(),
            got: rewards.len(),
        });
    }
    for (&arm, &reward) in selection.indices().iter().zip(rewards) {
        if !(0.0..=1.0).contains(&reward) {
            return Err(BanditError::RewardOutOfRange { arm, reward });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_rejects_bad_input() {
        assert_eq!(BatchSelection::new(vec![], 3), Err(BanditError::EmptyBatch));
        assert_eq!(
            BatchSelection::new(vec![0, 3], 3),
            Err(BanditError::ArmOutOfRange { arm: 3, k: 3 })
        );
        assert_eq!(BatchSelection::new(vec![1, 1], 3), Err(BanditError::DuplicateArm(1)));
        assert!(BatchSelection::new(vec![2, 0], 3).is_ok());
    }

    #[test]
    fn reward_range_is_enforced() {
        let sel = BatchSelection::new(vec![0, 1], 2).unwrap();
        assert!(check_rewards(&sel, &[0.0, 1.0]).is_ok());
        assert_eq!(
            check_rewards(&sel, &[0.5, 1.5]),
            Err(BanditError::RewardOutOfRange { arm: 1, reward: 1.5 })
        );
        assert!(check_rewards(&sel, &[0.5]).is_err());
    }
}
