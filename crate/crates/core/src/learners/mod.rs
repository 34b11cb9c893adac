//! CATE learners: plug-in baselines, the DR-Learner and the lp-R-Learner.

mod lpr;
mod meta;

pub use lpr::{cor3_preset, cor4_preset, fit_lp_r_learner, BandwidthRule, LpRConfig, LpRModel, QMatrices, QVariant};
pub use meta::{fit_dr_learner, fit_ipw_learner, fit_t_learner, fit_x_learner, DrLearnerConfig};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::data::{FoldAssignment, ObservationTable, Role};
use crate::dgp::rng::splitmix64;
use crate::dgp::{RateControlledPropensity, Truth};
use crate::error::{Error, Result};
use crate::smoothers::{fit_regression, Predictor, RegressionMethod, Tuning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LearnerKind {
    T,
    X,
    Ipw,
    Dr,
    OracleDr,
    Lpr,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::T,
        LearnerKind::X,
        LearnerKind::Ipw,
        LearnerKind::Dr,
        LearnerKind::OracleDr,
        LearnerKind::Lpr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::T => "t",
            LearnerKind::X => "x",
            LearnerKind::Ipw => "ipw",
            LearnerKind::Dr => "dr",
            LearnerKind::OracleDr => "oracle_dr",
            LearnerKind::Lpr => "lpr",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown learner '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossfit {
    Single,
    Averaged3,
}

/// Nuisance and regression folds for one pass of a sample-splitting learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rotation {
    pub first: Role,
    pub second: Role,
    pub regress: Role,
}

impl Rotation {
    pub const BASE: Rotation = Rotation {
        first: Role::D1A,
        second: Role::D1B,
        regress: Role::D2,
    };

    /// The base split followed by the two role rotations used for cross-fitting.
    pub const ALL: [Rotation; 3] = [
        Rotation::BASE,
        Rotation {
            first: Role::D1B,
            second: Role::D2,
            regress: Role::D1A,
        },
        Rotation {
            first: Role::D1A,
            second: Role::D2,
            regress: Role::D1B,
        },
    ];

    pub fn schedule(crossfit: Crossfit) -> &'static [Rotation] {
        match crossfit {
            Crossfit::Single => &Self::ALL[..1],
            Crossfit::Averaged3 => &Self::ALL,
        }
    }
}

/// Inputs shared by every learner.
#[derive(Clone)]
pub struct LearnerContext<'a> {
    pub table: &'a ObservationTable,
    pub folds: &'a FoldAssignment,
    /// Known nuisance functions, needed by oracle and rate-controlled variants.
    pub truth: Option<Arc<dyn Truth>>,
    pub seed: u64,
}

impl<'a> LearnerContext<'a> {
    pub fn new(table: &'a ObservationTable, folds: &'a FoldAssignment) -> Result<Self> {
        if folds.len() != table.n() {
            return Err(Error::invalid(format!(
                "fold assignment has {} labels for {} rows",
                folds.len(),
                table.n()
            )));
        }
        Ok(Self {
            table,
            folds,
            truth: None,
            seed: folds.seed(),
        })
    }

    pub fn with_truth(mut self, truth: Arc<dyn Truth>) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn truth(&self, what: &'static str) -> Result<Arc<dyn Truth>> {
        self.truth.clone().ok_or(Error::TruthRequired { what })
    }

    /// Rows of `role` with treatment `arm`, failing when there are none.
    fn arm_rows(&self, role: Role, arm: u8) -> Result<Vec<usize>> {
        let rows: Vec<usize> = self
            .folds
            .require(role)?
            .into_iter()
            .filter(|&i| self.table.a(i) == arm)
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyArm { role, arm });
        }
        Ok(rows)
    }

    fn design(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().flat_map(|&i| self.table.row(i).iter().copied()).collect()
    }

    fn fit_on(&self, method: &RegressionMethod, rows: &[usize], response: &[f64]) -> Result<Arc<dyn Predictor>> {
        fit_regression(method, &self.design(rows), self.table.d(), response)
    }
}

/// How a propensity score is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum PropensityMethod {
    /// Regression of `A` on `X` in the propensity fold.
    Fit(RegressionMethod),
    /// The true propensity of the generating process.
    Known,
    /// The truth perturbed on the logit scale with error of order `m^-alpha`,
    /// `m` being the propensity fold size.
    RateControlled { alpha: f64 },
}

/// How outcome regressions are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeMethod {
    Fit(RegressionMethod),
    Known,
}

struct KnownPropensity(Arc<dyn Truth>);

impl Predictor for KnownPropensity {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.0.propensity(x))
    }
}

struct KnownOutcome {
    truth: Arc<dyn Truth>,
    arm: Option<u8>,
}

impl Predictor for KnownOutcome {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(match self.arm {
            Some(a) => self.truth.mu(a, x),
            None => self.truth.eta(x),
        })
    }
}

impl Predictor for RateControlledPropensity {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x))
    }

    fn tuning(&self) -> Tuning {
        Tuning::default().with("alpha", self.alpha_rate)
    }
}

fn propensity_model(
    ctx: &LearnerContext<'_>,
    method: &PropensityMethod,
    role: Role,
    salt: u64,
) -> Result<Arc<dyn Predictor>> {
    Ok(match method {
        PropensityMethod::Fit(m) => {
            let rows = ctx.folds.require(role)?;
            let a: Vec<f64> = rows.iter().map(|&i| f64::from(ctx.table.a(i))).collect();
            ctx.fit_on(m, &rows, &a)?
        }
        PropensityMethod::Known => Arc::new(KnownPropensity(ctx.truth("known propensity")?)),
        PropensityMethod::RateControlled { alpha } => {
            let m = ctx.folds.require(role)?.len();
            Arc::new(RateControlledPropensity::new(
                ctx.truth("rate-controlled propensity")?,
                *alpha,
                m,
                splitmix64(ctx.seed ^ salt),
            )?)
        }
    })
}

/// Outcome regression for one arm, or the marginal regression when `arm` is `None`.
fn outcome_model(
    ctx: &LearnerContext<'_>,
    method: &OutcomeMethod,
    role: Role,
    arm: Option<u8>,
) -> Result<Arc<dyn Predictor>> {
    match method {
        OutcomeMethod::Known => Ok(Arc::new(KnownOutcome {
            truth: ctx.truth("known outcome regression")?,
            arm,
        })),
        OutcomeMethod::Fit(m) => {
            let rows = match arm {
                Some(a) => ctx.arm_rows(role, a)?,
                None => ctx.folds.require(role)?,
            };
            let y: Vec<f64> = rows.iter().map(|&i| ctx.table.y(i)).collect();
            ctx.fit_on(m, &rows, &y)
        }
    }
}

/// A fitted CATE function. Cross-fitted learners hold one model per
/// rotation and report their pointwise mean.
#[derive(Clone)]
pub struct CateFit {
    pub learner: LearnerKind,
    pub crossfit: Crossfit,
    pub tuning: Tuning,
    parts: Vec<Arc<dyn Predictor>>,
}

impl CateFit {
    pub fn new(learner: LearnerKind, crossfit: Crossfit, parts: Vec<Arc<dyn Predictor>>) -> Self {
        let mut tuning = Tuning::default();
        for (k, p) in parts.iter().enumerate() {
            let t = p.tuning();
            if parts.len() == 1 {
                tuning.0.extend(t.0);
            } else {
                tuning.extend_prefixed(&format!("fold{}", k + 1), &t);
            }
        }
        Self {
            learner,
            crossfit,
            tuning,
            parts,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.parts {
            total += p.predict(x)?;
        }
        Ok(total / self.parts.len() as f64)
    }

    pub fn parts(&self) -> &[Arc<dyn Predictor>] {
        &self.parts
    }
}

impl fmt::Debug for CateFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CateFit")
            .field("learner", &self.learner)
            .field("crossfit", &self.crossfit)
            .field("tuning", &self.tuning)
            .finish()
    }
}

impl Predictor for CateFit {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.evaluate(x)
    }

    fn tuning(&self) -> Tuning {
        self.tuning.clone()
    }
}

/// A learner together with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerSpec {
    T {
        outcome: OutcomeMethod,
    },
    X(DrLearnerConfig),
    Ipw {
        propensity: PropensityMethod,
        stage2: RegressionMethod,
        clip_eps: f64,
    },
    Dr(DrLearnerConfig),
    Lpr(LpRConfig),
}

impl LearnerSpec {
    pub fn fit(&self, ctx: &LearnerContext<'_>) -> Result<CateFit> {
        match self {
            LearnerSpec::T { outcome } => fit_t_learner(ctx, outcome),
            LearnerSpec::X(cfg) => fit_x_learner(ctx, cfg),
            LearnerSpec::Ipw {
                propensity,
                stage2,
                clip_eps,
            } => fit_ipw_learner(ctx, propensity, stage2, *clip_eps),
            LearnerSpec::Dr(cfg) => fit_dr_learner(ctx, cfg),
            LearnerSpec::Lpr(cfg) => fit_lp_r_learner(ctx, cfg),
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerSpec::T { .. } => LearnerKind::T,
            LearnerSpec::X(_) => LearnerKind::X,
            LearnerSpec::Ipw { .. } => LearnerKind::Ipw,
            LearnerSpec::Dr(cfg) if cfg.is_oracle() => LearnerKind::OracleDr,
            LearnerSpec::Dr(_) => LearnerKind::Dr,
            LearnerSpec::Lpr(_) => LearnerKind::Lpr,
        }
    }
}
