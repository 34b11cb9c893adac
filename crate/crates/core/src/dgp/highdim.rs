use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::rng::{stream_rng, Stream};
use super::{Dgp, Sample, Truth};
use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::math::expit;

/// Sparse logistic design with standard normal covariates and zero effect.
///
/// The propensity logit is the sum of the first `alpha_sparsity` covariates
/// scaled by `1 / (2 sqrt(alpha))`; both arm regressions have logit equal to
/// the sum of the first `beta_sparsity` covariates scaled by `1 / sqrt(beta)`.
#[derive(Debug, Clone, Copy)]
pub struct HighDimDgp {
    d: usize,
    alpha_sparsity: usize,
    beta_sparsity: usize,
}

impl HighDimDgp {
    pub fn new(d: usize, alpha_sparsity: usize, beta_sparsity: usize) -> Result<Self> {
        if d == 0 || alpha_sparsity == 0 || beta_sparsity == 0 {
            return Err(Error::invalid("dimension and sparsities must be positive"));
        }
        if alpha_sparsity > d || beta_sparsity > d {
            return Err(Error::invalid(format!(
                "sparsities ({alpha_sparsity}, {beta_sparsity}) exceed dimension {d}"
            )));
        }
        Ok(Self {
            d,
            alpha_sparsity,
            beta_sparsity,
        })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Sample {
        Sample {
            table: self.sample_table(n, seed),
            truth: Arc::new(*self),
        }
    }

    fn outcome_mean(&self, x: &[f64]) -> f64 {
        let s: f64 = x[..self.beta_sparsity].iter().sum();
        expit(s / (self.beta_sparsity as f64).sqrt())
    }
}

impl Truth for HighDimDgp {
    fn propensity(&self, x: &[f64]) -> f64 {
        let s: f64 = x[..self.alpha_sparsity].iter().sum();
        expit(s / (2.0 * (self.alpha_sparsity as f64).sqrt()))
    }

    fn mu0(&self, x: &[f64]) -> f64 {
        self.outcome_mean(x)
    }

    fn mu1(&self, x: &[f64]) -> f64 {
        self.outcome_mean(x)
    }

    fn tau(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

impl Dgp for HighDimDgp {
    fn name(&self) -> &'static str {
        "highdim"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn sample_table(&self, n: usize, seed: u64) -> ObservationTable {
        let mut rng = stream_rng(seed, Stream::Sample);
        let mut x = Vec::with_capacity(n * self.d);
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let start = x.len();
            x.extend((0..self.d).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
            let row = &x[start..];
            let ai = u8::from(rng.random::<f64>() < self.propensity(row));
            let yi = u8::from(rng.random::<f64>() < self.mu(ai, row));
            a.push(ai);
            y.push(f64::from(yi));
        }
        ObservationTable::new(x, self.d, a, y).expect("simulated table is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(HighDimDgp::new(5, 6, 1).is_err());
        assert!(HighDimDgp::new(5, 1, 6).is_err());
        assert!(HighDimDgp::new(5, 5, 5).is_ok());
    }

    #[test]
    fn symmetric_point_and_zero_effect() {
        let g = HighDimDgp::new(10, 4, 4).unwrap();
        assert_eq!(g.propensity(&[0.0; 10]), 0.5);
        assert_eq!(g.tau(&[0.3; 10]), 0.0);
        assert_eq!(g.mu1(&[0.3; 10]), g.mu0(&[0.3; 10]));
    }

    #[test]
    fn propensity_band() {
        let g = HighDimDgp::new(20, 10, 10).unwrap();
        let t = g.sample_table(100_000, 5);
        let inside = t.rows().filter(|r| (0.2..=0.8).contains(&g.propensity(r))).count();
        let share = inside as f64 / t.n() as f64;
        assert!(share >= 0.95, "{share}");
    }

    #[test]
    fn binary_outcomes() {
        let g = HighDimDgp::new(3, 2, 3).unwrap();
        let t = g.sample_table(200, 1);
        assert!(t.outcome().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(t, g.sample_table(200, 1));
    }
}
