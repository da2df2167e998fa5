use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BanditError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationFamily {
    Frechet,
    Exponential,
}

/// Distribution of the additive noise FPL puts on each arm's score.
///
/// Both families are sampled by inverting their CDF at an open-interval
/// uniform, so every draw is finite and strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub family: PerturbationFamily,
    /// Fréchet shape; unused by the exponential family.
    pub shape: f64,
    /// Multiplier applied to every draw.
    pub scale: f64,
}

impl PerturbationSpec {
    pub fn frechet(shape: f64, scale: f64) -> Result<Self, BanditError> {
        Self {
            family: PerturbationFamily::Frechet,
            shape,
            scale,
        }
        .validated()
    }

    pub fn exponential(scale: f64) -> Result<Self, BanditError> {
        Self {
            family: PerturbationFamily::Exponential,
            shape: 1.0,
            scale,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, BanditError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(BanditError::InvalidParameter {
                name: "scale",
                value: self.scale,
            });
        }
        if self.family == PerturbationFamily::Frechet && !(self.shape > 0.0 && self.shape.is_finite()) {
            return Err(BanditError::InvalidParameter {
                name: "shape",
                value: self.shape,
            });
        }
        Ok(self)
    }

    /// Inverse CDF at `u` in (0, 1).
    #[inline]
    pub fn from_uniform(&self, u: f64) -> f64 {
        let e = -u.ln();
        match self.family {
            PerturbationFamily::Frechet => self.scale * e.powf(-1.0 / self.shape),
            PerturbationFamily::Exponential => self.scale * e,
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.from_uniform(rng.sample(Open01))
    }

    /// Fills `out` with fresh draws.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self.family {
            PerturbationFamily::Frechet => {
                let exponent = -1.0 / self.shape;
                for x in out.iter_mut() {
                    let u: f64 = rng.sample(Open01);
                    *x = self.scale * (-u.ln()).powf(exponent);
                }
            }
            PerturbationFamily::Exponential => {
                for x in out.iter_mut() {
                    let u: f64 = rng.sample(Open01);
                    *x = -self.scale * u.ln();
                }
            }
        }
    }
}

/// Draws `count` perturbations from `spec`.
pub fn sample_perturbation<R: Rng + ?Sized>(spec: &PerturbationSpec, count: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; count];
    spec.fill(rng, &mut out);
    out
}
