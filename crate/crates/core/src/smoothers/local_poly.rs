use nalgebra::{DMatrix, DVector};

use super::{Basis, Predictor, Tuning};
use crate::error::{Error, Result};
use crate::math::{GuardedInverse, RESCUE_RIDGE};

/// Product kernels supported on `[-1, 1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `prod_j (1 - u_j^2)_+`
    #[default]
    Epanechnikov,
    /// `prod_j 1{|u_j| <= 1}`
    Boxcar,
}

impl Kernel {
    pub fn weight(self, u: &[f64]) -> f64 {
        match self {
            Kernel::Epanechnikov => u.iter().map(|v| (1.0 - v * v).max(0.0)).product(),
            Kernel::Boxcar => {
                if u.iter().all(|v| v.abs() <= 1.0) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPolyConfig {
    pub degree: usize,
    /// `None` selects the bandwidth by 5-fold cross-validation, or by the
    /// rate rule when `c_h` is set.
    pub bandwidth: Option<f64>,
    /// Rate rule `h = c_h * range * n^{-1/(2 degree + d)}`.
    pub c_h: Option<f64>,
    pub kernel: Kernel,
    /// Relative ridge used to rescue nearly singular local designs.
    pub ridge: f64,
}

impl Default for LocalPolyConfig {
    fn default() -> Self {
        Self {
            degree: 1,
            bandwidth: None,
            c_h: None,
            kernel: Kernel::Epanechnikov,
            ridge: RESCUE_RIDGE,
        }
    }
}

impl LocalPolyConfig {
    pub fn with_bandwidth(degree: usize, h: f64) -> Self {
        Self {
            degree,
            bandwidth: Some(h),
            ..Self::default()
        }
    }
}

/// Kernel-weighted local polynomial regression; the estimate at `x` is the
/// intercept of a weighted polynomial fit in `(X - x) / h`.
#[derive(Debug, Clone)]
pub struct LocalPolyFit {
    x: Vec<f64>,
    d: usize,
    response: Vec<f64>,
    weight: Vec<f64>,
    kernel: Kernel,
    h: f64,
    ridge: f64,
    degree: usize,
    basis: Basis,
    /// Training rows sorted by their first coordinate.
    order: Vec<usize>,
    sorted_first: Vec<f64>,
}

struct LocalSystem {
    q: DMatrix<f64>,
    rhs: DVector<f64>,
    rows: Vec<usize>,
    kw: Vec<f64>,
}

impl LocalPolyFit {
    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn degree_terms(&self) -> usize {
        self.basis.len()
    }

    pub fn n_train(&self) -> usize {
        self.response.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn window(&self, x: &[f64]) -> &[usize] {
        let lo = self.sorted_first.partition_point(|&v| v < x[0] - self.h);
        let hi = self.sorted_first.partition_point(|&v| v <= x[0] + self.h);
        &self.order[lo..hi]
    }

    fn local_system(&self, x: &[f64]) -> LocalSystem {
        let p = self.basis.len();
        let mut q = DMatrix::zeros(p, p);
        let mut rhs = DVector::zeros(p);
        let mut rows = Vec::new();
        let mut kw = Vec::new();
        let mut u = vec![0.0; self.d];
        let mut b = vec![0.0; p];
        for &i in self.window(x) {
            for ((uj, &xij), &xj) in u.iter_mut().zip(self.row(i)).zip(x) {
                *uj = (xij - xj) / self.h;
            }
            let k = self.kernel.weight(&u) * self.weight[i];
            if k == 0.0 {
                continue;
            }
            self.basis.eval_into(&u, &mut b);
            for r in 0..p {
                let br = k * b[r];
                rhs[r] += br * self.response[i];
                for c in 0..=r {
                    q[(r, c)] += br * b[c];
                }
            }
            rows.push(i);
            kw.push(k);
        }
        for r in 0..p {
            for c in 0..r {
                q[(c, r)] = q[(r, c)];
            }
        }
        LocalSystem { q, rhs, rows, kw }
    }

    /// `Q^{-1} e_0` for the local design at `x`.
    fn intercept_row(&self, x: &[f64], sys: &LocalSystem) -> Result<DVector<f64>> {
        let p = self.basis.len();
        let inv = GuardedInverse::new(&sys.q, self.ridge).ok_or_else(|| {
            let (condition, _) = GuardedInverse::diagnose(&sys.q);
            Error::SingularDesign {
                query: x.to_vec(),
                condition,
            }
        })?;
        let mut e0 = DVector::zeros(p);
        e0[0] = 1.0;
        Ok(inv.solve(&e0))
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::invalid(format!(
                "query has {} coordinates, model has {}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }
}

impl Predictor for LocalPolyFit {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_query(x)?;
        let sys = self.local_system(x);
        let v = self.intercept_row(x, &sys)?;
        Ok(v.dot(&sys.rhs))
    }

    fn weights_at(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        let run = || -> Result<Vec<f64>> {
            self.check_query(x)?;
            let sys = self.local_system(x);
            let v = self.intercept_row(x, &sys)?;
            let mut w = vec![0.0; self.response.len()];
            let mut u = vec![0.0; self.d];
            let mut b = vec![0.0; self.basis.len()];
            for (&i, &k) in sys.rows.iter().zip(&sys.kw) {
                for ((uj, &xij), &xj) in u.iter_mut().zip(self.row(i)).zip(x) {
                    *uj = (xij - xj) / self.h;
                }
                self.basis.eval_into(&u, &mut b);
                w[i] = k * b.iter().zip(v.iter()).map(|(a, c)| a * c).sum::<f64>();
            }
            Ok(w)
        };
        Some(run())
    }

    fn tuning(&self) -> Tuning {
        Tuning::default()
            .with("bandwidth", self.h)
            .with("degree", self.degree as f64)
    }
}

/// Fits a local polynomial smoother to `(x_i, response_i)` with per-row
/// weights multiplying the kernel.
pub fn local_poly_fit(
    x: &[f64],
    d: usize,
    response: &[f64],
    weight: &[f64],
    cfg: &LocalPolyConfig,
) -> Result<LocalPolyFit> {
    let n = response.len();
    if n == 0 || d == 0 || x.len() != n * d || weight.len() != n {
        return Err(Error::invalid("local polynomial: inconsistent training data"));
    }
    if weight.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid(
            "local polynomial: weights must be finite and non-negative",
        ));
    }
    if !(cfg.ridge >= 0.0) {
        return Err(Error::invalid("local polynomial: ridge must be non-negative"));
    }
    let h = match (cfg.bandwidth, cfg.c_h) {
        (Some(h), _) => h,
        (None, Some(c)) => c * rate_bandwidth(x, d, n, cfg.degree),
        (None, None) => select_bandwidth(x, d, response, weight, cfg)?,
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[i * d].total_cmp(&x[j * d]));
    let sorted_first = order.iter().map(|&i| x[i * d]).collect();
    Ok(LocalPolyFit {
        x: x.to_vec(),
        d,
        response: response.to_vec(),
        weight: weight.to_vec(),
        kernel: cfg.kernel,
        h,
        ridge: cfg.ridge,
        degree: cfg.degree,
        basis: Basis::new(d, cfg.degree),
        order,
        sorted_first,
    })
}

const CV_FOLDS: usize = 5;
const CV_GRID: usize = 20;

/// `range * n^{-1/(2 degree + d)}`, `range` being the mean covariate range.
fn rate_bandwidth(x: &[f64], d: usize, n: usize, degree: usize) -> f64 {
    let range = (0..d)
        .map(|j| {
            let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                (lo.min(x[i * d + j]), hi.max(x[i * d + j]))
            });
            hi - lo
        })
        .sum::<f64>()
        / d as f64;
    let range = if range > 0.0 { range } else { 1.0 };
    range * (n as f64).powf(-1.0 / (2.0 * degree as f64 + d as f64))
}

/// Bandwidth by 5-fold cross-validation over a geometric grid of 20 values
/// spanning `[c / 4, 4 c]`, `c = n^{-1/(2 degree + d)}` times the mean
/// covariate range.
pub fn select_bandwidth(x: &[f64], d: usize, response: &[f64], weight: &[f64], cfg: &LocalPolyConfig) -> Result<f64> {
    let n = response.len();
    let center = rate_bandwidth(x, d, n, cfg.degree);
    let grid: Vec<f64> = (0..CV_GRID)
        .map(|k| center / 4.0 * 16f64.powf(k as f64 / (CV_GRID - 1) as f64))
        .collect();
    if n < 2 * CV_FOLDS {
        return Ok(center);
    }

    let folds: Vec<(Vec<usize>, Vec<usize>)> = (0..CV_FOLDS).map(|f| (0..n).partition(|i| i % CV_FOLDS != f)).collect();
    let losses: Vec<f64> = grid
        .iter()
        .map(|&h| {
            let mut sse = 0.0;
            let mut scored = 0usize;
            for (train, test) in &folds {
                let sub = |v: &[f64], w: usize| -> Vec<f64> {
                    train
                        .iter()
                        .flat_map(|&i| v[i * w..(i + 1) * w].iter().copied())
                        .collect()
                };
                let fold_cfg = LocalPolyConfig {
                    bandwidth: Some(h),
                    ..cfg.clone()
                };
                let Ok(fit) = local_poly_fit(&sub(x, d), d, &sub(response, 1), &sub(weight, 1), &fold_cfg) else {
                    continue;
                };
                for &i in test {
                    if let Ok(p) = fit.predict(&x[i * d..(i + 1) * d]) {
                        sse += weight[i] * (response[i] - p).powi(2);
                        scored += 1;
                    }
                }
            }
            // bandwidths that leave many held-out points unscored are not eligible
            if (scored as f64) < 0.9 * n as f64 {
                f64::INFINITY
            } else {
                sse / scored as f64
            }
        })
        .collect();
    let best = losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(CV_GRID / 2);
    Ok(if losses[best].is_finite() {
        grid[best]
    } else {
        grid[CV_GRID - 1]
    })
}
