use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::rng::{stream_rng, Stream};
use super::{Dgp, Sample, Truth};
use crate::data::ObservationTable;

/// Piecewise polynomial regression function on `[-1, 1]`.
///
/// Branch boundaries follow the indicator products of the reference
/// simulation exactly, so points where no indicator fires (`x = 0`,
/// `x = 0.5`) evaluate to 0.
pub fn gyorfi_mu(x: f64) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    ind(x <= -0.5) * 0.5 * (x + 2.0).powi(2)
        + (x / 2.0 + 0.875) * ind(x > -0.5 && x < 0.0)
        + ind(x > 0.0 && x < 0.5) * (-5.0 * (x - 0.2).powi(2) + 1.075)
        + ind(x > 0.5) * (x + 0.125)
}

/// One-dimensional design with equal, non-smooth arm regressions, so the
/// effect is identically zero. Treatment is assigned with probability 0.9
/// right of the origin and 0.1 elsewhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct PiecewiseDgp;

impl PiecewiseDgp {
    pub fn noise_sd(x: f64) -> f64 {
        0.2 - 0.1 * (2.0 * PI * x).cos()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Sample {
        Sample {
            table: self.sample_table(n, seed),
            truth: Arc::new(*self),
        }
    }
}

impl Truth for PiecewiseDgp {
    fn propensity(&self, x: &[f64]) -> f64 {
        if x[0] > 0.0 {
            0.9
        } else {
            0.1
        }
    }

    fn mu0(&self, x: &[f64]) -> f64 {
        gyorfi_mu(x[0])
    }

    fn mu1(&self, x: &[f64]) -> f64 {
        gyorfi_mu(x[0])
    }

    fn tau(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

impl Dgp for PiecewiseDgp {
    fn name(&self) -> &'static str {
        "piecewise"
    }

    fn dim(&self) -> usize {
        1
    }

    fn sample_table(&self, n: usize, seed: u64) -> ObservationTable {
        let mut rng = stream_rng(seed, Stream::Sample);
        let mut x = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let xi: f64 = rng.random_range(-1.0..1.0);
            let ai = u8::from(rng.random::<f64>() < self.propensity(&[xi]));
            let e: f64 = StandardNormal.sample(&mut rng);
            x.push(xi);
            a.push(ai);
            y.push(self.mu(ai, &[xi]) + Self::noise_sd(xi) * e);
        }
        ObservationTable::new(x, 1, a, y).expect("simulated table is valid")
    }
}
