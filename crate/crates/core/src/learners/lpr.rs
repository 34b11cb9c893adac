//! Local polynomial R-Learner with double sample splitting.
//!
//! At a query `x` the estimate is the first coordinate of the solution of
//!
//! ```text
//! P_n{ b K phi_a b' } theta = P_n{ b K phi },
//! phi_a = (A - pi_a)(A - pi_b),   phi = (A - pi_a)(Y - eta)
//! ```
//!
//! where `pi_a` is fitted on one nuisance fold, `pi_b` and `eta` on the
//! other, and the average runs over the regression fold.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{outcome_model, CateFit, Crossfit, LearnerContext, LearnerKind, OutcomeMethod, Rotation};
use crate::data::Role;
use crate::error::{Error, Result};
use crate::math::{GuardedInverse, RESCUE_RIDGE};
use crate::pseudo::{check_eps, clip_propensity};
use crate::smoothers::{Basis, Kernel, LocalPolyConfig, Predictor, RegressionMethod, Tuning};

/// `h = c_h n^{-1/(2 gamma + d)}` and `k = n / ln(n)^2`.
pub fn cor3_preset(n: usize, gamma: f64, d: usize, c_h: f64) -> (f64, f64) {
    let nf = n as f64;
    let h = c_h * nf.powf(-1.0 / (2.0 * gamma + d as f64));
    let k = nf / nf.ln().powi(2);
    (h, k)
}

/// `h = c_h n^{-3s/(2 s gamma + (s + gamma) d)}` and
/// `k = n^{(3 gamma d / 2)/(2 s gamma + (s + gamma) d)}`.
pub fn cor4_preset(n: usize, gamma: f64, s: f64, d: usize, c_h: f64) -> (f64, f64) {
    let nf = n as f64;
    let denom = 2.0 * s * gamma + (s + gamma) * d as f64;
    let h = c_h * nf.powf(-3.0 * s / denom);
    let k = nf.powf(1.5 * gamma * d as f64 / denom);
    (h, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    Fixed(f64),
    /// Smooth nuisances; `c_h` is relative to the covariate range.
    Cor3 {
        c_h: f64,
    },
    /// Nuisances of smoothness `s`; `c_h` is relative to the covariate range.
    Cor4 {
        s: f64,
        c_h: f64,
    },
}

impl BandwidthRule {
    /// Bandwidth and nuisance tuning `k` (if the rule implies one) for a
    /// regression fold of `n` rows.
    pub fn resolve(&self, n: usize, gamma: f64, d: usize, range: f64) -> (f64, Option<f64>) {
        match *self {
            BandwidthRule::Fixed(h) => (h, None),
            BandwidthRule::Cor3 { c_h } => {
                let (h, k) = cor3_preset(n, gamma, d, c_h * range);
                (h, Some(k))
            }
            BandwidthRule::Cor4 { s, c_h } => {
                let (h, k) = cor4_preset(n, gamma, s, d, c_h * range);
                (h, Some(k))
            }
        }
    }
}

/// Which matrix multiplies `theta` in the normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QVariant {
    /// Built from the estimated `phi_a`.
    #[default]
    Estimated,
    /// Built from the true `nu = pi(1 - pi)`; a diagnostic needing known truth.
    TrueNu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRConfig {
    /// Target smoothness; the basis degree is its floor.
    pub gamma: f64,
    pub bandwidth: BandwidthRule,
    pub kernel: Kernel,
    /// Method for `pi_a`, `pi_b` and `eta`.
    pub nuisance: OutcomeMethod,
    /// When the rule yields `k` and the nuisance method is a local polynomial
    /// without a bandwidth, use `range * k^{-1/d}` for it.
    pub nuisance_from_rule: bool,
    pub ridge: f64,
    pub clip_eps: f64,
    pub crossfit: Crossfit,
    pub q_variant: QVariant,
}

impl LpRConfig {
    pub fn new(gamma: f64, bandwidth: BandwidthRule, nuisance: OutcomeMethod) -> Self {
        Self {
            gamma,
            bandwidth,
            kernel: Kernel::default(),
            nuisance,
            nuisance_from_rule: true,
            ridge: RESCUE_RIDGE,
            clip_eps: crate::pseudo::DEFAULT_CLIP,
            crossfit: Crossfit::Single,
            q_variant: QVariant::Estimated,
        }
    }

    pub fn degree(&self) -> usize {
        self.gamma.floor() as usize
    }
}

/// Local design at one query point.
#[derive(Debug, Clone)]
pub struct QMatrices {
    pub q: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub min_eigenvalue: f64,
    pub condition: f64,
    /// Regression rows with positive kernel weight.
    pub window: usize,
    pub treated_in_window: usize,
}

/// Fitted lp-R-Learner for one split. Each query solves its own local system.
#[derive(Debug, Clone)]
pub struct LpRModel {
    x: Vec<f64>,
    d: usize,
    a: Vec<u8>,
    /// Per-row factor multiplying `b b'` in `Q`.
    q_weight: Vec<f64>,
    /// Per-row factor multiplying `b` in the right-hand side.
    phi: Vec<f64>,
    basis: Basis,
    kernel: Kernel,
    h: f64,
    ridge: f64,
    order: Vec<usize>,
    sorted_first: Vec<f64>,
}

impl LpRModel {
    /// Builds the model from per-row quantities on the regression fold.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        x: Vec<f64>,
        d: usize,
        a: Vec<u8>,
        q_weight: Vec<f64>,
        phi: Vec<f64>,
        degree: usize,
        kernel: Kernel,
        h: f64,
        ridge: f64,
    ) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::NoObservations);
        }
        if x.len() != n * d || q_weight.len() != n || phi.len() != n {
            return Err(Error::invalid("lp-R inputs have inconsistent lengths"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| x[i * d].total_cmp(&x[j * d]));
        let sorted_first = order.iter().map(|&i| x[i * d]).collect();
        Ok(Self {
            x,
            d,
            a,
            q_weight,
            phi,
            basis: Basis::new(d, degree),
            kernel,
            h,
            ridge,
            order,
            sorted_first,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn q_matrices(&self, x: &[f64]) -> Result<QMatrices> {
        if x.len() != self.d {
            return Err(Error::invalid(format!(
                "query has {} coordinates, model has {}",
                x.len(),
                self.d
            )));
        }
        let p = self.basis.len();
        let n = self.n() as f64;
        let mut q = DMatrix::zeros(p, p);
        let mut rhs = DVector::zeros(p);
        let mut u = vec![0.0; self.d];
        let mut b = vec![0.0; p];
        let lo = self.sorted_first.partition_point(|&v| v < x[0] - self.h);
        let hi = self.sorted_first.partition_point(|&v| v <= x[0] + self.h);
        let (mut window, mut treated) = (0, 0);
        for &i in &self.order[lo..hi] {
            let row = &self.x[i * self.d..(i + 1) * self.d];
            for ((uj, &xij), &xj) in u.iter_mut().zip(row).zip(x) {
                *uj = (xij - xj) / self.h;
            }
            let k = self.kernel.weight(&u);
            if k == 0.0 {
                continue;
            }
            window += 1;
            treated += usize::from(self.a[i]);
            self.basis.eval_into(&u, &mut b);
            let kq = k * self.q_weight[i] / n;
            let kr = k * self.phi[i] / n;
            for r in 0..p {
                rhs[r] += kr * b[r];
                for c in 0..=r {
                    q[(r, c)] += kq * b[r] * b[c];
                }
            }
        }
        for r in 0..p {
            for c in 0..r {
                q[(c, r)] = q[(r, c)];
            }
        }
        let (condition, min_eigenvalue) = GuardedInverse::diagnose(&q);
        Ok(QMatrices {
            q,
            rhs,
            min_eigenvalue,
            condition,
            window,
            treated_in_window: treated,
        })
    }

    /// Full local coefficient vector at `x`; the estimate is its first entry.
    pub fn theta(&self, x: &[f64]) -> Result<DVector<f64>> {
        let m = self.q_matrices(x)?;
        let fail = |reason: String| Error::IllConditioned {
            query: x.to_vec(),
            reason,
        };
        if m.window == 0 {
            return Err(fail("no regression rows in the kernel window".into()));
        }
        if m.treated_in_window == 0 || m.treated_in_window == m.window {
            return Err(fail(format!(
                "all {} rows in the kernel window share one treatment value",
                m.window
            )));
        }
        let inv =
            GuardedInverse::new(&m.q, self.ridge).ok_or_else(|| fail(format!("condition number {:e}", m.condition)))?;
        Ok(inv.solve(&m.rhs))
    }
}

impl Predictor for LpRModel {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.theta(x)?[0])
    }

    fn tuning(&self) -> Tuning {
        Tuning::default()
            .with("bandwidth", self.h)
            .with("degree", self.degree() as f64)
    }
}

impl LpRModel {
    fn degree(&self) -> usize {
        self.basis
            .exponents()
            .last()
            .map_or(0, |e| e.iter().sum::<u32>() as usize)
    }
}

fn covariate_range(ctx: &LearnerContext<'_>) -> f64 {
    let bounds = ctx.table.covariate_bounds();
    bounds.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / bounds.len() as f64
}

/// Fits the lp-R-Learner. Queries whose local system fails the positivity
/// or conditioning checks return [`Error::IllConditioned`] at evaluation.
pub fn fit_lp_r_learner(ctx: &LearnerContext<'_>, cfg: &LpRConfig) -> Result<CateFit> {
    check_eps(cfg.clip_eps)?;
    if !(cfg.gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {}", cfg.gamma)));
    }
    let d = ctx.table.d();
    let range = covariate_range(ctx);
    let schedule = Rotation::schedule(cfg.crossfit);
    let mut parts: Vec<Arc<dyn Predictor>> = Vec::with_capacity(schedule.len());
    for rot in schedule {
        let rows = ctx.folds.require(rot.regress)?;
        let (h, k) = cfg.bandwidth.resolve(rows.len(), cfg.gamma, d, range);
        let nuisance = match (&cfg.nuisance, k) {
            (OutcomeMethod::Fit(RegressionMethod::LocalPoly(lp)), Some(k))
                if cfg.nuisance_from_rule && lp.bandwidth.is_none() =>
            {
                OutcomeMethod::Fit(RegressionMethod::LocalPoly(LocalPolyConfig {
                    bandwidth: Some(range * k.powf(-1.0 / d as f64)),
                    ..lp.clone()
                }))
            }
            (m, _) => m.clone(),
        };
        let pi_a = propensity_for(ctx, &nuisance, rot.first)?;
        let pi_b = propensity_for(ctx, &nuisance, rot.second)?;
        let eta = outcome_model(ctx, &nuisance, rot.second, None)?;
        let truth = match cfg.q_variant {
            QVariant::TrueNu => Some(ctx.truth("the true-nu design matrix")?),
            QVariant::Estimated => None,
        };
        let mut q_weight = Vec::with_capacity(rows.len());
        let mut phi = Vec::with_capacity(rows.len());
        for &i in &rows {
            let x = ctx.table.row(i);
            let a = f64::from(ctx.table.a(i));
            let pa = clip_propensity(pi_a.predict(x)?, cfg.clip_eps);
            let pb = clip_propensity(pi_b.predict(x)?, cfg.clip_eps);
            q_weight.push(match &truth {
                Some(t) => {
                    let p = t.propensity(x);
                    p * (1.0 - p)
                }
                None => (a - pa) * (a - pb),
            });
            phi.push((a - pa) * (ctx.table.y(i) - eta.predict(x)?));
        }
        let model = LpRModel::from_parts(
            ctx.design(&rows),
            d,
            rows.iter().map(|&i| ctx.table.a(i)).collect(),
            q_weight,
            phi,
            cfg.degree(),
            cfg.kernel,
            h,
            cfg.ridge,
        )?;
        parts.push(Arc::new(model));
    }
    Ok(CateFit::new(LearnerKind::Lpr, cfg.crossfit, parts))
}

fn propensity_for(ctx: &LearnerContext<'_>, method: &OutcomeMethod, role: Role) -> Result<Arc<dyn Predictor>> {
    let m = match method {
        OutcomeMethod::Known => super::PropensityMethod::Known,
        OutcomeMethod::Fit(m) => super::PropensityMethod::Fit(m.clone()),
    };
    super::propensity_model(ctx, &m, role, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_arithmetic() {
        let (h, _) = cor3_preset(1000, 1.0, 1, 1.0);
        assert!((h - 0.1).abs() < 1e-12);
        let (h1, _) = cor3_preset(1000, 1.0, 2, 1.0);
        let (h2, _) = cor3_preset(1000, 2.0, 2, 1.0);
        assert!(h2 > h1);
        let (h, _) = cor3_preset(1000, 1e9, 1, 0.7);
        assert!((h - 0.7).abs() < 1e-6);
        let (h, k) = cor4_preset(1000, 2.0, 1.0, 2, 1.0);
        assert!((h - 1000f64.powf(-0.3)).abs() < 1e-12);
        assert!((k - 1000f64.powf(0.6)).abs() < 1e-9);
        for &(g, s, d) in &[(1.0, 1.0, 1usize), (2.5, 0.3, 4), (0.5, 3.0, 2)] {
            let (h, k) = cor4_preset(500, g, s, d, 1.0);
            assert!(h < 1.0 && k > 1.0);
            // with s = gamma the exponent reduces to -3/(2 gamma + 2d)
            let (hs, _) = cor4_preset(500, g, g, d, 1.0);
            assert!((hs - 500f64.powf(-3.0 / (2.0 * g + 2.0 * d as f64))).abs() < 1e-12);
        }
    }

    fn toy(a: Vec<u8>) -> LpRModel {
        let n = a.len();
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let phi = vec![1.0; n];
        LpRModel::from_parts(x, 1, a, vec![0.25; n], phi, 1, Kernel::Epanechnikov, 0.3, RESCUE_RIDGE).unwrap()
    }

    #[test]
    fn positivity_failures_are_per_query() {
        let m = toy(vec![1; 20]);
        assert!(matches!(m.predict(&[0.5]), Err(Error::IllConditioned { .. })));
        let m = toy((0..20).map(|i| (i % 2) as u8).collect());
        assert!(m.predict(&[0.5]).is_ok());
        assert!(matches!(m.predict(&[5.0]), Err(Error::IllConditioned { .. })));
    }
}
