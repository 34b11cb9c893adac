use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use super::rng::{keyed_standard_normal, stream_rng, Stream};
use super::Truth;
use crate::error::{Error, Result};
use crate::math::{expit, logit};

/// Propensity "estimate" with a prescribed error rate: the true logit is
/// perturbed by `N(n^-alpha, n^-2alpha)` noise, so `RMSE ~ n^-alpha`.
///
/// The perturbation at `x` is a deterministic function of `(seed, x)`,
/// which makes the estimate an ordinary function of the covariates while
/// still giving independent errors at distinct points.
#[derive(Clone)]
pub struct RateControlledPropensity {
    pub alpha_rate: f64,
    pub n: usize,
    pub seed: u64,
    truth: Arc<dyn Truth>,
}

impl RateControlledPropensity {
    pub fn new(truth: Arc<dyn Truth>, alpha_rate: f64, n: usize, seed: u64) -> Result<Self> {
        if !(alpha_rate > 0.0) || n == 0 {
            return Err(Error::invalid("rate control needs alpha > 0 and n >= 1"));
        }
        Ok(Self {
            alpha_rate,
            n,
            seed,
            truth,
        })
    }

    /// Mean and standard deviation of the logit perturbation.
    pub fn scale(&self) -> f64 {
        perturbation_scale(self.n, self.alpha_rate)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let m = self.scale();
        let z = keyed_standard_normal(self.seed, x);
        expit(logit(self.truth.propensity(x)) + m + m * z)
    }
}

impl std::fmt::Debug for RateControlledPropensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateControlledPropensity")
            .field("alpha_rate", &self.alpha_rate)
            .field("n", &self.n)
            .field("seed", &self.seed)
            .finish()
    }
}

fn perturbation_scale(n: usize, alpha_rate: f64) -> f64 {
    (n as f64).powf(-alpha_rate)
}

/// Perturbs each true propensity independently. Output is not clipped.
pub fn rate_controlled_pihat(true_pi: &[f64], n: usize, alpha_rate: f64, seed: u64) -> Vec<f64> {
    let m = perturbation_scale(n, alpha_rate);
    let mut rng = stream_rng(seed, Stream::Propensity);
    true_pi
        .iter()
        .map(|&p| {
            let z: f64 = StandardNormal.sample(&mut rng);
            expit(logit(p) + m + m * z)
        })
        .collect()
}
