//! Cross-validated lasso by cyclic coordinate descent.
//!
//! The objective follows the usual glmnet convention: for the Gaussian
//! family `(1/2n)|y - b0 - X b|^2 + lambda |b|_1`, and for the logistic family
//! the mean negative log-likelihood plus the same penalty, solved by
//! iteratively reweighted coordinate descent. With standardization the
//! penalty applies to coefficients of unit-variance columns, and returned
//! coefficients are mapped back to the original scale.

use super::{Predictor, Tuning};
use crate::error::{Error, Result};
use crate::math::expit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Family {
    #[default]
    Gaussian,
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoConfig {
    /// Explicit descending penalty grid; generated from the data when `None`.
    pub lambda_grid: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub cv_folds: usize,
    /// Coordinate-descent passes allowed per penalty value.
    pub max_iter: usize,
    /// Coordinate descent stops once no update changes the objective by more
    /// than `tol` times the null variance of the working response.
    pub tol: f64,
    pub family: Family,
    pub standardize: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda_grid: None,
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            cv_folds: 10,
            max_iter: 100_000,
            tol: 1e-7,
            family: Family::Gaussian,
            standardize: true,
        }
    }
}

impl LassoConfig {
    pub fn logistic() -> Self {
        Self {
            family: Family::Logistic,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("lasso tol must be positive, got {}", self.tol)));
        }
        if self.cv_folds < 2 {
            return Err(Error::invalid("lasso needs at least 2 CV folds"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("lasso max_iter must be positive"));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() {
                return Err(Error::invalid("lasso lambda grid is empty"));
            }
            if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::invalid("lasso lambdas must be finite and non-negative"));
            }
            if grid.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::invalid("lasso lambda grid must be strictly descending"));
            }
        } else if self.n_lambda == 0 || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::invalid(
                "lasso needs n_lambda >= 1 and lambda_min_ratio in (0, 1)",
            ));
        }
        Ok(())
    }
}

/// A single fitted lasso model on the original covariate scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub family: Family,
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub lambda: f64,
    pub standardize: bool,
}

impl LassoFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn nonzero(&self) -> usize {
        self.coef.iter().filter(|b| **b != 0.0).count()
    }
}

impl Predictor for LassoFit {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coef.len() {
            return Err(Error::invalid(format!(
                "lasso expects {} covariates, got {}",
                self.coef.len(),
                x.len()
            )));
        }
        let eta = self.linear_predictor(x);
        Ok(match self.family {
            Family::Gaussian => eta,
            Family::Logistic => expit(eta),
        })
    }

    fn tuning(&self) -> Tuning {
        Tuning::default()
            .with("lambda", self.lambda)
            .with("nonzero", self.nonzero() as f64)
    }
}

/// Solutions along a penalty path.
#[derive(Debug, Clone)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub fits: Vec<LassoFit>,
}

/// Centered (and optionally scaled) columns of the design.
struct Design {
    n: usize,
    cols: Vec<Vec<f64>>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Columns with zero variance carry no information and stay at zero.
    live: Vec<bool>,
}

impl Design {
    fn new(x: &[f64], d: usize, rows: &[usize], standardize: bool) -> Self {
        let n = rows.len();
        let mut cols = Vec::with_capacity(d);
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        let mut live = vec![true; d];
        for j in 0..d {
            let mut c: Vec<f64> = rows.iter().map(|&i| x[i * d + j]).collect();
            let m = c.iter().sum::<f64>() / n as f64;
            c.iter_mut().for_each(|v| *v -= m);
            let sd = (c.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            // relative test so that a constant column with rounding noise is dropped
            if !(sd > 1e-12 * (1.0 + m.abs())) {
                live[j] = false;
                c.clear();
            } else if standardize {
                c.iter_mut().for_each(|v| *v /= sd);
                scale[j] = sd;
            }
            mean[j] = m;
            cols.push(c);
        }
        Self {
            n,
            cols,
            mean,
            scale,
            live,
        }
    }

    fn lambda_max(&self, y: &[f64]) -> f64 {
        let ybar = y.iter().sum::<f64>() / self.n as f64;
        (0..self.cols.len())
            .filter(|&j| self.live[j])
            .map(|j| {
                self.cols[j]
                    .iter()
                    .zip(y)
                    .map(|(z, v)| z * (v - ybar))
                    .sum::<f64>()
                    .abs()
                    / self.n as f64
            })
            .fold(0.0, f64::max)
    }

    fn to_original(&self, family: Family, b0: f64, beta: &[f64], lambda: f64, standardize: bool) -> LassoFit {
        let coef: Vec<f64> = beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let intercept = b0 - coef.iter().zip(&self.mean).map(|(b, m)| b * m).sum::<f64>();
        LassoFit {
            family,
            intercept,
            coef,
            lambda,
            standardize,
        }
    }
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// State of a penalized weighted least-squares problem in the working
/// coordinates; `r` is the weighted residual of the working response.
struct Cd<'a> {
    design: &'a Design,
    w: Vec<f64>,
    v: Vec<f64>,
    r: Vec<f64>,
    /// Convergence threshold on the largest objective change `v_j delta_j^2`.
    thresh: f64,
    max_passes: usize,
}

impl Cd<'_> {
    fn refresh_curvature(&mut self) {
        let n = self.design.n as f64;
        for j in 0..self.design.cols.len() {
            self.v[j] = if self.design.live[j] {
                self.design.cols[j]
                    .iter()
                    .zip(&self.w)
                    .map(|(z, w)| w * z * z)
                    .sum::<f64>()
                    / n
            } else {
                0.0
            };
        }
    }

    fn update(&mut self, j: usize, beta: &mut [f64], lambda: f64) -> f64 {
        let n = self.design.n as f64;
        let col = &self.design.cols[j];
        let grad = col
            .iter()
            .zip(&self.r)
            .zip(&self.w)
            .map(|((z, r), w)| w * z * r)
            .sum::<f64>()
            / n;
        let old = beta[j];
        let new = soft_threshold(grad + self.v[j] * old, lambda) / self.v[j];
        let delta = new - old;
        if delta != 0.0 {
            beta[j] = new;
            for (r, z) in self.r.iter_mut().zip(col) {
                *r -= delta * z;
            }
        }
        self.v[j] * delta * delta
    }

    fn update_intercept(&mut self, b0: &mut f64) -> f64 {
        let sw: f64 = self.w.iter().sum();
        let delta = self.r.iter().zip(&self.w).map(|(r, w)| w * r).sum::<f64>() / sw;
        *b0 += delta;
        self.r.iter_mut().for_each(|r| *r -= delta);
        delta * delta * sw / self.design.n as f64
    }

    /// Runs active-set cycles with periodic full sweeps until a full sweep
    /// moves no coordinate by more than the threshold. Returns the number of
    /// passes used and whether it converged, plus the largest move seen.
    fn solve(&mut self, beta: &mut [f64], b0: &mut f64, lambda: f64, fit_intercept: bool) -> (bool, f64) {
        let p = beta.len();
        let mut passes = 0;
        let mut biggest = 0.0f64;
        loop {
            // full sweep
            let mut moved = 0.0f64;
            for j in 0..p {
                if self.design.live[j] {
                    moved = moved.max(self.update(j, beta, lambda));
                }
            }
            if fit_intercept {
                moved = moved.max(self.update_intercept(b0));
            }
            passes += 1;
            biggest = biggest.max(moved);
            if moved < self.thresh {
                return (true, biggest);
            }
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            loop {
                if passes >= self.max_passes {
                    return (false, biggest);
                }
                let mut moved = 0.0f64;
                for &j in &active {
                    moved = moved.max(self.update(j, beta, lambda));
                }
                if fit_intercept {
                    moved = moved.max(self.update_intercept(b0));
                }
                passes += 1;
                if moved < self.thresh {
                    break;
                }
            }
            if passes >= self.max_passes {
                return (false, biggest);
            }
        }
    }
}

fn validate_inputs(x: &[f64], d: usize, y: &[f64], family: Family) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("lasso needs at least one covariate"));
    }
    if y.is_empty() {
        return Err(Error::NoObservations);
    }
    if x.len() != y.len() * d {
        return Err(Error::invalid("lasso design and response lengths disagree"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("lasso inputs must be finite"));
    }
    if family == Family::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("logistic lasso needs a 0/1 response"));
    }
    Ok(())
}

const P_CLIP: f64 = 1e-5;

fn deviance(y: &[f64], eta: &[f64]) -> f64 {
    -2.0 * y
        .iter()
        .zip(eta)
        .map(|(&yi, &e)| {
            let p = expit(e).clamp(P_CLIP, 1.0 - P_CLIP);
            yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
        })
        .sum::<f64>()
}

/// Fits the path on the given rows. `auto` enables early stopping once the
/// deviance explained saturates, as done for generated grids.
fn path_on_rows(
    x: &[f64],
    d: usize,
    y_all: &[f64],
    rows: &[usize],
    lambdas: &[f64],
    cfg: &LassoConfig,
    auto: bool,
) -> Vec<LassoFit> {
    let design = Design::new(x, d, rows, cfg.standardize);
    let y: Vec<f64> = rows.iter().map(|&i| y_all[i]).collect();
    let n = y.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut beta = vec![0.0; d];
    let mut fits = Vec::with_capacity(lambdas.len());

    match cfg.family {
        Family::Gaussian => {
            let r: Vec<f64> = y.iter().map(|v| v - ybar).collect();
            let null = r.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let mut b0 = ybar;
            let mut cd = Cd {
                design: &design,
                w: vec![1.0; n],
                v: vec![0.0; d],
                r,
                thresh: cfg.tol * null.max(f64::MIN_POSITIVE),
                max_passes: cfg.max_iter,
            };
            cd.refresh_curvature();
            for &lambda in lambdas {
                if null == 0.0 {
                    fits.push(design.to_original(cfg.family, b0, &beta, lambda, cfg.standardize));
                    continue;
                }
                let (ok, _) = cd.solve(&mut beta, &mut b0, lambda, false);
                if !ok {
                    log::warn!(
                        "lasso did not converge at lambda {lambda:.3e} within {} passes",
                        cfg.max_iter
                    );
                }
                fits.push(design.to_original(cfg.family, b0, &beta, lambda, cfg.standardize));
                let rss = cd.r.iter().map(|v| v * v).sum::<f64>() / n as f64;
                if auto && 1.0 - rss / null > 0.999 {
                    break;
                }
            }
        }
        Family::Logistic => {
            let pbar = ybar.clamp(P_CLIP, 1.0 - P_CLIP);
            let mut b0 = (pbar / (1.0 - pbar)).ln();
            let null_eta = vec![b0; n];
            let null_dev = deviance(&y, &null_eta);
            let degenerate = ybar == 0.0 || ybar == 1.0;
            let mut cd = Cd {
                design: &design,
                w: vec![0.0; n],
                v: vec![0.0; d],
                r: vec![0.0; n],
                thresh: cfg.tol * pbar * (1.0 - pbar),
                max_passes: cfg.max_iter,
            };
            for &lambda in lambdas {
                if degenerate {
                    fits.push(design.to_original(cfg.family, b0, &beta, lambda, cfg.standardize));
                    continue;
                }
                let mut converged = false;
                let mut eta = vec![0.0; n];
                for _ in 0..100 {
                    for (i, e) in eta.iter_mut().enumerate() {
                        *e = b0
                            + (0..d)
                                .filter(|&j| beta[j] != 0.0)
                                .map(|j| beta[j] * design.cols[j][i])
                                .sum::<f64>();
                        // clipping only the weight keeps the fixed point at the true optimum
                        let p = expit(*e);
                        let pc = p.clamp(P_CLIP, 1.0 - P_CLIP);
                        let w = pc * (1.0 - pc);
                        cd.w[i] = w;
                        cd.r[i] = (y[i] - p) / w;
                    }
                    cd.refresh_curvature();
                    let (ok, moved) = cd.solve(&mut beta, &mut b0, lambda, true);
                    if !ok {
                        break;
                    }
                    if moved < cd.thresh {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    log::warn!("logistic lasso did not converge at lambda {lambda:.3e}");
                }
                fits.push(design.to_original(cfg.family, b0, &beta, lambda, cfg.standardize));
                if auto {
                    for (i, e) in eta.iter_mut().enumerate() {
                        *e = b0
                            + (0..d)
                                .filter(|&j| beta[j] != 0.0)
                                .map(|j| beta[j] * design.cols[j][i])
                                .sum::<f64>();
                    }
                    if 1.0 - deviance(&y, &eta) / null_dev > 0.999 {
                        break;
                    }
                }
            }
        }
    }
    fits
}

fn grid_for(x: &[f64], d: usize, y: &[f64], cfg: &LassoConfig) -> (Vec<f64>, bool) {
    if let Some(grid) = &cfg.lambda_grid {
        return (grid.clone(), false);
    }
    let rows: Vec<usize> = (0..y.len()).collect();
    let design = Design::new(x, d, &rows, cfg.standardize);
    let top = design.lambda_max(y);
    if top == 0.0 {
        return (vec![0.0], true);
    }
    let k = cfg.n_lambda;
    let grid = (0..k)
        .map(|i| {
            let t = if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
            top * cfg.lambda_min_ratio.powf(t)
        })
        .collect();
    (grid, true)
}

/// Solutions over the configured or generated penalty grid, with warm starts.
pub fn lasso_path(x: &[f64], d: usize, y: &[f64], cfg: &LassoConfig) -> Result<LassoPath> {
    cfg.validate()?;
    validate_inputs(x, d, y, cfg.family)?;
    let (grid, auto) = grid_for(x, d, y, cfg);
    let rows: Vec<usize> = (0..y.len()).collect();
    let fits = path_on_rows(x, d, y, &rows, &grid, cfg, auto);
    Ok(LassoPath {
        lambdas: fits.iter().map(|f| f.lambda).collect(),
        fits,
    })
}

fn held_out_loss(fit: &LassoFit, x: &[f64], d: usize, y: &[f64], rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&i| {
            let eta = fit.linear_predictor(&x[i * d..(i + 1) * d]);
            match fit.family {
                Family::Gaussian => (y[i] - eta).powi(2),
                Family::Logistic => {
                    let p = expit(eta).clamp(P_CLIP, 1.0 - P_CLIP);
                    -2.0 * (y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln())
                }
            }
        })
        .sum()
}

/// Lasso with the penalty chosen by K-fold cross-validation (minimum mean
/// held-out squared error or deviance). Rows are assigned to folds by index
/// modulo K. A single-value grid skips cross-validation.
pub fn lasso_fit(x: &[f64], d: usize, y: &[f64], cfg: &LassoConfig) -> Result<LassoFit> {
    let path = lasso_path(x, d, y, cfg)?;
    if path.fits.len() == 1 {
        return Ok(path.fits.into_iter().next().expect("one fit"));
    }
    let n = y.len();
    let k = cfg.cv_folds.min(n);
    if k < 2 {
        return Err(Error::invalid("too few rows for lasso cross-validation"));
    }
    let lambdas = &path.lambdas;
    let mut loss = vec![0.0; lambdas.len()];
    let mut usable = lambdas.len();
    for fold in 0..k {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % k == fold);
        let fits = path_on_rows(x, d, y, &train, lambdas, cfg, false);
        usable = usable.min(fits.len());
        for (l, fit) in loss.iter_mut().zip(&fits) {
            *l += held_out_loss(fit, x, d, y, &test);
        }
    }
    let best = (0..usable)
        .min_by(|&a, &b| loss[a].total_cmp(&loss[b]))
        .expect("non-empty path");
    Ok(path.fits[best].clone())
}

/// Largest violation of the lasso optimality conditions at `fit`, measured
/// in the penalized coordinates: `|g_j| - lambda` for zero coefficients and
/// `|g_j - lambda sign(b_j)|` for active ones, where `g_j` is the gradient of
/// the smooth part with respect to coefficient `j`.
pub fn kkt_violation(x: &[f64], d: usize, y: &[f64], fit: &LassoFit) -> f64 {
    let rows: Vec<usize> = (0..y.len()).collect();
    let design = Design::new(x, d, &rows, fit.standardize);
    let n = y.len() as f64;
    let resid: Vec<f64> = (0..y.len())
        .map(|i| {
            let eta = fit.linear_predictor(&x[i * d..(i + 1) * d]);
            match fit.family {
                Family::Gaussian => y[i] - eta,
                Family::Logistic => y[i] - expit(eta),
            }
        })
        .collect();
    let mut worst = 0.0f64;
    for j in 0..d {
        if !design.live[j] {
            continue;
        }
        let g = design.cols[j].iter().zip(&resid).map(|(z, r)| z * r).sum::<f64>() / n;
        let b = fit.coef[j] * design.scale[j];
        let v = if b == 0.0 {
            (g.abs() - fit.lambda).max(0.0)
        } else {
            (g - fit.lambda * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}
