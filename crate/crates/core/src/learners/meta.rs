use std::sync::Arc;

use super::{
    outcome_model, propensity_model, CateFit, Crossfit, LearnerContext, LearnerKind, OutcomeMethod, PropensityMethod,
    Rotation,
};
use crate::data::Role;
use crate::error::Result;
use crate::pseudo::{check_eps, clip_propensity, dr_pseudo, ipw_pseudo};
use crate::smoothers::{Predictor, RegressionMethod, Tuning};

#[derive(Debug, Clone, PartialEq)]
pub struct DrLearnerConfig {
    pub propensity: PropensityMethod,
    pub outcome: OutcomeMethod,
    pub stage2: RegressionMethod,
    pub clip_eps: f64,
    pub crossfit: Crossfit,
}

impl DrLearnerConfig {
    /// Oracle variant: both nuisances taken from the generating process.
    pub fn oracle(stage2: RegressionMethod) -> Self {
        Self {
            propensity: PropensityMethod::Known,
            outcome: OutcomeMethod::Known,
            stage2,
            clip_eps: crate::pseudo::DEFAULT_CLIP,
            crossfit: Crossfit::Single,
        }
    }

    pub fn is_oracle(&self) -> bool {
        self.propensity == PropensityMethod::Known && self.outcome == OutcomeMethod::Known
    }
}

/// A stage-2 model carrying the tuning of the nuisances that produced it.
struct Tuned {
    inner: Arc<dyn Predictor>,
    tuning: Tuning,
}

impl Predictor for Tuned {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.inner.predict(x)
    }

    fn weights_at(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        self.inner.weights_at(x)
    }

    fn tuning(&self) -> Tuning {
        self.tuning.clone()
    }
}

fn tuned(inner: Arc<dyn Predictor>, nuisances: &[(&str, &Arc<dyn Predictor>)]) -> Arc<dyn Predictor> {
    let mut tuning = Tuning::default();
    for (name, m) in nuisances {
        tuning.extend_prefixed(name, &m.tuning());
    }
    tuning.extend_prefixed("stage2", &inner.tuning());
    Arc::new(Tuned { inner, tuning })
}

struct Difference {
    mu1: Arc<dyn Predictor>,
    mu0: Arc<dyn Predictor>,
}

impl Predictor for Difference {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.mu1.predict(x)? - self.mu0.predict(x)?)
    }

    fn tuning(&self) -> Tuning {
        let mut t = Tuning::default();
        t.extend_prefixed("mu1", &self.mu1.tuning());
        t.extend_prefixed("mu0", &self.mu0.tuning());
        t
    }
}

/// Plug-in: difference of arm-wise outcome regressions fitted on D1B.
pub fn fit_t_learner(ctx: &LearnerContext<'_>, outcome: &OutcomeMethod) -> Result<CateFit> {
    let mu0 = outcome_model(ctx, outcome, Role::D1B, Some(0))?;
    let mu1 = outcome_model(ctx, outcome, Role::D1B, Some(1))?;
    Ok(CateFit::new(
        LearnerKind::T,
        Crossfit::Single,
        vec![Arc::new(Difference { mu1, mu0 })],
    ))
}

struct XCombination {
    pi: Arc<dyn Predictor>,
    x0: Arc<dyn Predictor>,
    x1: Arc<dyn Predictor>,
    eps: f64,
}

impl Predictor for XCombination {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        let p = clip_propensity(self.pi.predict(x)?, self.eps);
        Ok(p * self.x0.predict(x)? + (1.0 - p) * self.x1.predict(x)?)
    }

    fn tuning(&self) -> Tuning {
        let mut t = Tuning::default();
        t.extend_prefixed("pi", &self.pi.tuning());
        t.extend_prefixed("x0", &self.x0.tuning());
        t.extend_prefixed("x1", &self.x1.tuning());
        t
    }
}

/// X-Learner: imputed effects regressed within each arm of the regression
/// fold, combined with propensity weights.
pub fn fit_x_learner(ctx: &LearnerContext<'_>, cfg: &DrLearnerConfig) -> Result<CateFit> {
    check_eps(cfg.clip_eps)?;
    let schedule = Rotation::schedule(cfg.crossfit);
    let mut parts: Vec<Arc<dyn Predictor>> = Vec::with_capacity(schedule.len());
    for (k, rot) in schedule.iter().enumerate() {
        let pi = propensity_model(ctx, &cfg.propensity, rot.first, k as u64 + 1)?;
        let mu0 = outcome_model(ctx, &cfg.outcome, rot.second, Some(0))?;
        let mu1 = outcome_model(ctx, &cfg.outcome, rot.second, Some(1))?;
        let treated = ctx.arm_rows(rot.regress, 1)?;
        let control = ctx.arm_rows(rot.regress, 0)?;
        let imputed1 = treated
            .iter()
            .map(|&i| Ok(ctx.table.y(i) - mu0.predict(ctx.table.row(i))?))
            .collect::<Result<Vec<f64>>>()?;
        let imputed0 = control
            .iter()
            .map(|&i| Ok(mu1.predict(ctx.table.row(i))? - ctx.table.y(i)))
            .collect::<Result<Vec<f64>>>()?;
        let x1 = ctx.fit_on(&cfg.stage2, &treated, &imputed1)?;
        let x0 = ctx.fit_on(&cfg.stage2, &control, &imputed0)?;
        parts.push(Arc::new(XCombination {
            pi,
            x0,
            x1,
            eps: cfg.clip_eps,
        }));
    }
    Ok(CateFit::new(LearnerKind::X, cfg.crossfit, parts))
}

/// Regression of the inverse-probability-weighted pseudo-outcome on D2,
/// with the propensity from D1A.
pub fn fit_ipw_learner(
    ctx: &LearnerContext<'_>,
    propensity: &PropensityMethod,
    stage2: &RegressionMethod,
    clip_eps: f64,
) -> Result<CateFit> {
    check_eps(clip_eps)?;
    let rot = Rotation::BASE;
    let pi = propensity_model(ctx, propensity, rot.first, 1)?;
    let rows = ctx.folds.require(rot.regress)?;
    let pseudo = rows
        .iter()
        .map(|&i| {
            let p = clip_propensity(pi.predict(ctx.table.row(i))?, clip_eps);
            Ok(ipw_pseudo(ctx.table.a(i), ctx.table.y(i), p))
        })
        .collect::<Result<Vec<f64>>>()?;
    let model = ctx.fit_on(stage2, &rows, &pseudo)?;
    Ok(CateFit::new(
        LearnerKind::Ipw,
        Crossfit::Single,
        vec![tuned(model, &[("pi", &pi)])],
    ))
}

/// The DR-Learner: propensity on the first nuisance fold, outcome
/// regressions on the second, doubly robust pseudo-outcomes regressed on the
/// third. With cross-fitting the three role rotations are averaged.
pub fn fit_dr_learner(ctx: &LearnerContext<'_>, cfg: &DrLearnerConfig) -> Result<CateFit> {
    check_eps(cfg.clip_eps)?;
    let schedule = Rotation::schedule(cfg.crossfit);
    let mut parts = Vec::with_capacity(schedule.len());
    for (k, rot) in schedule.iter().enumerate() {
        let pi = propensity_model(ctx, &cfg.propensity, rot.first, k as u64 + 1)?;
        let mu0 = outcome_model(ctx, &cfg.outcome, rot.second, Some(0))?;
        let mu1 = outcome_model(ctx, &cfg.outcome, rot.second, Some(1))?;
        let rows = ctx.folds.require(rot.regress)?;
        let pseudo = rows
            .iter()
            .map(|&i| {
                let x = ctx.table.row(i);
                let p = clip_propensity(pi.predict(x)?, cfg.clip_eps);
                Ok(dr_pseudo(
                    ctx.table.a(i),
                    ctx.table.y(i),
                    p,
                    mu0.predict(x)?,
                    mu1.predict(x)?,
                ))
            })
            .collect::<Result<Vec<f64>>>()?;
        let model = ctx.fit_on(&cfg.stage2, &rows, &pseudo)?;
        parts.push(tuned(model, &[("pi", &pi), ("mu0", &mu0), ("mu1", &mu1)]));
    }
    let kind = if cfg.is_oracle() {
        LearnerKind::OracleDr
    } else {
        LearnerKind::Dr
    };
    Ok(CateFit::new(kind, cfg.crossfit, parts))
}
