//! Regression estimators used for nuisance functions and second stages.
//!
//! Every estimator here is exposed through [`Predictor`]. The local
//! polynomial and smoothing spline are linear smoothers and report their
//! weights through [`Predictor::weights_at`]; the lasso does not.

mod basis;
mod lasso;
mod local_poly;
mod spline;

pub use basis::Basis;
pub use lasso::{kkt_violation, lasso_fit, lasso_path, Family, LassoConfig, LassoFit, LassoPath};
pub use local_poly::{local_poly_fit, select_bandwidth, Kernel, LocalPolyConfig, LocalPolyFit};
pub use spline::{smoothing_spline_fit, SplineConfig, SplineFit};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Selected tuning parameters, by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tuning(pub Vec<(String, f64)>);

impl Tuning {
    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.0.push((name.into(), value));
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }

    /// Appends `other` with every name prefixed by `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &Tuning) {
        for (k, v) in &other.0 {
            self.0.push((format!("{prefix}.{k}"), *v));
        }
    }
}

/// A fitted regression function.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<f64>;

    /// Weights over the training rows such that the prediction at `x` is
    /// their inner product with the training responses.
    fn weights_at(&self, _x: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }

    fn tuning(&self) -> Tuning {
        Tuning::default()
    }
}

impl<P: Predictor + ?Sized> Predictor for Arc<P> {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        (**self).predict(x)
    }

    fn weights_at(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        (**self).weights_at(x)
    }

    fn tuning(&self) -> Tuning {
        (**self).tuning()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuisanceKind {
    Propensity,
    OutcomeMu0,
    OutcomeMu1,
    MarginalEta,
}

/// A nuisance estimate. Propensities are stored unclipped; clipping is
/// applied by [`NuisanceFit::evaluate_clipped`] at use time.
#[derive(Clone)]
pub struct NuisanceFit {
    pub kind: NuisanceKind,
    model: Arc<dyn Predictor>,
}

impl NuisanceFit {
    pub fn new(kind: NuisanceKind, model: Arc<dyn Predictor>) -> Self {
        Self { kind, model }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.model.predict(x)
    }

    pub fn evaluate_clipped(&self, x: &[f64], eps: f64) -> Result<f64> {
        Ok(crate::pseudo::clip_propensity(self.model.predict(x)?, eps))
    }

    pub fn weights_at(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        self.model.weights_at(x)
    }

    pub fn tuning(&self) -> Tuning {
        self.model.tuning()
    }

    pub fn model(&self) -> &Arc<dyn Predictor> {
        &self.model
    }
}

impl fmt::Debug for NuisanceFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NuisanceFit")
            .field("kind", &self.kind)
            .field("tuning", &self.tuning())
            .finish()
    }
}

/// A regression estimator together with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressionMethod {
    LocalPoly(LocalPolyConfig),
    Spline(SplineConfig),
    Lasso(LassoConfig),
}

impl RegressionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            RegressionMethod::LocalPoly(_) => "local_poly",
            RegressionMethod::Spline(_) => "spline",
            RegressionMethod::Lasso(_) => "lasso",
        }
    }
}

/// Fits `method` to responses over row-major covariates with `d` columns.
pub fn fit_regression(method: &RegressionMethod, x: &[f64], d: usize, response: &[f64]) -> Result<Arc<dyn Predictor>> {
    if response.is_empty() || x.len() != response.len() * d {
        return Err(Error::invalid(format!(
            "design has {} values but {} responses for d={d}",
            x.len(),
            response.len()
        )));
    }
    Ok(match method {
        RegressionMethod::LocalPoly(cfg) => {
            let weights = vec![1.0; response.len()];
            Arc::new(local_poly_fit(x, d, response, &weights, cfg)?)
        }
        RegressionMethod::Spline(cfg) => {
            if d != 1 {
                return Err(Error::invalid(format!("smoothing spline needs one covariate, got {d}")));
            }
            Arc::new(smoothing_spline_fit(x, response, cfg)?)
        }
        RegressionMethod::Lasso(cfg) => Arc::new(lasso_fit(x, d, response, cfg)?),
    })
}

/// Second-stage regression of pseudo-outcomes on covariates.
pub fn stage2_regress(pseudo: &[f64], x: &[f64], d: usize, method: &RegressionMethod) -> Result<Arc<dyn Predictor>> {
    fit_regression(method, x, d, pseudo)
}
