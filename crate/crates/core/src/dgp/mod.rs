//! Simulation designs with closed-form truth.

mod highdim;
mod piecewise;
mod rate;
pub mod rng;

pub use highdim::HighDimDgp;
pub use piecewise::{gyorfi_mu, PiecewiseDgp};
pub use rate::{rate_controlled_pihat, RateControlledPropensity};

use std::sync::Arc;

use crate::data::ObservationTable;

/// Known nuisance functions of a data-generating process.
pub trait Truth: Send + Sync {
    fn propensity(&self, x: &[f64]) -> f64;
    fn mu0(&self, x: &[f64]) -> f64;
    fn mu1(&self, x: &[f64]) -> f64;

    fn tau(&self, x: &[f64]) -> f64 {
        self.mu1(x) - self.mu0(x)
    }

    /// `E(Y | X = x) = pi mu1 + (1 - pi) mu0`.
    fn eta(&self, x: &[f64]) -> f64 {
        let p = self.propensity(x);
        p * self.mu1(x) + (1.0 - p) * self.mu0(x)
    }

    fn mu(&self, a: u8, x: &[f64]) -> f64 {
        if a == 1 {
            self.mu1(x)
        } else {
            self.mu0(x)
        }
    }
}

/// A simulated table together with the process that generated it.
#[derive(Clone)]
pub struct Sample {
    pub table: ObservationTable,
    pub truth: Arc<dyn Truth>,
}

/// A simulation design that can be sampled.
pub trait Dgp: Truth {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn sample_table(&self, n: usize, seed: u64) -> ObservationTable;
}

impl std::fmt::Debug for Sample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sample")
            .field("table", &self.table)
            .finish_non_exhaustive()
    }
}
