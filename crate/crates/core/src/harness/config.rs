//! Experiment configuration files.
//!
//! ```text
//! [experiment]
//! dgp = piecewise
//! n = 8000
//! reps = 100
//! seed = 1234
//! sweep = alpha_rate: 0.1:0.5:0.1
//! scaling = n_over_4
//! summary = mean
//!
//! [learner]
//! name = dr
//! kind = dr
//! propensity = rate_controlled
//! outcome = spline
//! stage2 = spline
//! ```
//!
//! `#` and `;` start comments. Each `[learner]` section adds one learner.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::learners::{
    BandwidthRule, Crossfit, DrLearnerConfig, LearnerKind, LearnerSpec, LpRConfig, OutcomeMethod, PropensityMethod,
    QVariant,
};
use crate::pseudo::{check_eps, DEFAULT_CLIP};
use crate::smoothers::{Family, LassoConfig, RegressionMethod, SplineConfig};

use super::spec::{
    parse_flag, parse_grid, parse_kernel, parse_outcome, parse_propensity, parse_real, parse_regression, MethodSpec,
};
use super::DgpSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    Raw,
    NOver4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryMode {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    AlphaRate,
    /// Total sample size.
    N,
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVar::AlphaRate => "alpha_rate",
            SweepVar::N => "n",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerEntry {
    pub label: String,
    pub spec: LearnerSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dgp: DgpSpec,
    /// Total rows per replication, split into four equal folds.
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub sweep: Sweep,
    pub scaling: Scaling,
    pub summary: SummaryMode,
    pub learners: Vec<LearnerEntry>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config { line: 0, message: m });
        if self.reps == 0 {
            return err("reps must be at least 1".into());
        }
        if self.learners.is_empty() {
            return err("no [learner] sections".into());
        }
        if self.sweep.values.is_empty() {
            return err("sweep grid is empty".into());
        }
        for v in &self.sweep.values {
            let ok = match self.sweep.var {
                SweepVar::AlphaRate => *v > 0.0,
                SweepVar::N => *v >= 4.0 && v.fract() == 0.0,
            };
            if !ok {
                return err(format!("invalid {} sweep value {v}", self.sweep.var));
            }
        }
        if self.sweep.var != SweepVar::N && self.n < 4 {
            return err("n must be at least 4".into());
        }
        for l in &self.learners {
            if needs_alpha(&l.spec) && self.sweep.var != SweepVar::AlphaRate {
                return err(format!(
                    "learner '{}' uses rate_controlled without alpha but the sweep is not alpha_rate",
                    l.label
                ));
            }
        }
        Ok(())
    }

    /// Total sample size at a sweep value.
    pub fn n_at(&self, value: f64) -> usize {
        match self.sweep.var {
            SweepVar::N => value as usize,
            SweepVar::AlphaRate => self.n,
        }
    }

    /// Learner spec with sweep-provided settings filled in.
    pub fn spec_at(&self, spec: &LearnerSpec, value: f64) -> LearnerSpec {
        if self.sweep.var != SweepVar::AlphaRate {
            return spec.clone();
        }
        let fill = |p: &PropensityMethod| match p {
            PropensityMethod::RateControlled { alpha } if alpha.is_nan() => {
                PropensityMethod::RateControlled { alpha: value }
            }
            other => other.clone(),
        };
        match spec {
            LearnerSpec::X(c) => LearnerSpec::X(DrLearnerConfig {
                propensity: fill(&c.propensity),
                ..c.clone()
            }),
            LearnerSpec::Dr(c) => LearnerSpec::Dr(DrLearnerConfig {
                propensity: fill(&c.propensity),
                ..c.clone()
            }),
            LearnerSpec::Ipw {
                propensity,
                stage2,
                clip_eps,
            } => LearnerSpec::Ipw {
                propensity: fill(propensity),
                stage2: stage2.clone(),
                clip_eps: *clip_eps,
            },
            other => other.clone(),
        }
    }
}

fn needs_alpha(spec: &LearnerSpec) -> bool {
    let open = |p: &PropensityMethod| matches!(p, PropensityMethod::RateControlled { alpha } if alpha.is_nan());
    match spec {
        LearnerSpec::X(c) | LearnerSpec::Dr(c) => open(&c.propensity),
        LearnerSpec::Ipw { propensity, .. } => open(propensity),
        _ => false,
    }
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<(usize, String, String)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let pos = self.entries.iter().position(|(_, k, _)| k == key)?;
        let (line, _, v) = self.entries.remove(pos);
        Some((line, v))
    }

    fn finish(self) -> Result<()> {
        match self.entries.first() {
            Some((line, k, _)) => Err(Error::Config {
                line: *line,
                message: format!("unknown key '{k}' in [{}]", self.name),
            }),
            None => Ok(()),
        }
    }
}

fn at<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidInput(message) => Error::Config { line, message },
        other => other,
    })
}

fn sections(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config {
                    line,
                    message: format!("malformed section header '{body}'"),
                })?
                .trim()
                .to_ascii_lowercase();
            out.push(Section {
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected key = value, got '{body}'"),
        })?;
        let key = k.trim().to_ascii_lowercase();
        let section = out.last_mut().ok_or_else(|| Error::Config {
            line,
            message: "key outside of any section".into(),
        })?;
        if section.entries.iter().any(|(_, seen, _)| *seen == key) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key '{key}'"),
            });
        }
        section.entries.push((line, key, v.trim().to_string()));
    }
    Ok(out)
}

fn count(line: usize, key: &str, v: &str) -> Result<u64> {
    v.trim().parse::<u64>().map_err(|_| Error::Config {
        line,
        message: format!("{key}: expected a non-negative integer, got '{v}'"),
    })
}

fn parse_sweep(line: usize, v: &str) -> Result<Sweep> {
    let (name, grid) = v.split_once(':').ok_or_else(|| Error::Config {
        line,
        message: format!("sweep: expected 'variable: grid', got '{v}'"),
    })?;
    let var = match name.trim().to_ascii_lowercase().as_str() {
        "alpha_rate" | "alpha" => SweepVar::AlphaRate,
        "n" => SweepVar::N,
        other => {
            return Err(Error::Config {
                line,
                message: format!("unknown sweep variable '{other}' (expected alpha_rate or n)"),
            })
        }
    };
    Ok(Sweep {
        var,
        values: at(line, parse_grid(grid))?,
    })
}

fn default_regression(d: usize) -> RegressionMethod {
    if d == 1 {
        RegressionMethod::Spline(SplineConfig::default())
    } else {
        RegressionMethod::Lasso(LassoConfig::default())
    }
}

fn default_propensity(d: usize) -> PropensityMethod {
    if d == 1 {
        PropensityMethod::Fit(RegressionMethod::Spline(SplineConfig::default()))
    } else {
        PropensityMethod::Fit(RegressionMethod::Lasso(LassoConfig {
            family: Family::Logistic,
            ..LassoConfig::default()
        }))
    }
}

fn learner(mut s: Section, d: usize) -> Result<LearnerEntry> {
    let (kline, kind) = s.take("kind").ok_or_else(|| Error::Config {
        line: s.line,
        message: "[learner] needs a kind".into(),
    })?;
    let kind: LearnerKind = at(kline, kind.parse())?;
    let label = s.take("name").map_or_else(|| kind.name().to_string(), |(_, v)| v);
    let mut get = |key: &str| s.take(key);
    let clip_eps = match get("clip_eps") {
        Some((l, v)) => {
            let e = at(l, parse_real("clip_eps", &v))?;
            at(l, check_eps(e))?;
            e
        }
        None => DEFAULT_CLIP,
    };
    let crossfit = match get("crossfit") {
        Some((l, v)) if at(l, parse_flag("crossfit", &v))? => Crossfit::Averaged3,
        _ => Crossfit::Single,
    };
    let regression = |entry: Option<(usize, String)>| match entry {
        Some((l, v)) => at(l, parse_regression(&v)),
        None => Ok(default_regression(d)),
    };
    let outcome = |entry: Option<(usize, String)>| match entry {
        Some((l, v)) => at(l, parse_outcome(&v)),
        None => Ok(OutcomeMethod::Fit(default_regression(d))),
    };
    let propensity = |entry: Option<(usize, String)>| match entry {
        Some((l, v)) => at(l, parse_propensity(&v)),
        None => Ok(default_propensity(d)),
    };
    let spec = match kind {
        LearnerKind::T => LearnerSpec::T {
            outcome: outcome(get("outcome"))?,
        },
        LearnerKind::Ipw => LearnerSpec::Ipw {
            propensity: propensity(get("propensity"))?,
            stage2: regression(get("stage2"))?,
            clip_eps,
        },
        LearnerKind::X | LearnerKind::Dr => {
            let cfg = DrLearnerConfig {
                propensity: propensity(get("propensity"))?,
                outcome: outcome(get("outcome"))?,
                stage2: regression(get("stage2"))?,
                clip_eps,
                crossfit,
            };
            if kind == LearnerKind::X {
                LearnerSpec::X(cfg)
            } else {
                LearnerSpec::Dr(cfg)
            }
        }
        LearnerKind::OracleDr => LearnerSpec::Dr(DrLearnerConfig {
            clip_eps,
            crossfit,
            ..DrLearnerConfig::oracle(regression(get("stage2"))?)
        }),
        LearnerKind::Lpr => {
            let gamma = match get("gamma") {
                Some((l, v)) => at(l, parse_real("gamma", &v))?,
                None => 1.0,
            };
            if !(gamma > 0.0) {
                return Err(Error::Config {
                    line: s.line,
                    message: "gamma must be positive".into(),
                });
            }
            let bandwidth = match get("bandwidth") {
                Some((l, v)) => at(l, parse_bandwidth(&v))?,
                None => BandwidthRule::Cor3 { c_h: 1.0 },
            };
            let mut cfg = LpRConfig::new(gamma, bandwidth, outcome(get("nuisance"))?);
            cfg.clip_eps = clip_eps;
            cfg.crossfit = crossfit;
            if let Some((l, v)) = get("kernel") {
                cfg.kernel = at(l, parse_kernel(&v))?;
            }
            if let Some((l, v)) = get("ridge") {
                cfg.ridge = at(l, parse_real("ridge", &v))?;
            }
            if let Some((l, v)) = get("nuisance_from_rule") {
                cfg.nuisance_from_rule = at(l, parse_flag("nuisance_from_rule", &v))?;
            }
            if let Some((l, v)) = get("q_variant") {
                cfg.q_variant = match v.to_ascii_lowercase().as_str() {
                    "estimated" => QVariant::Estimated,
                    "true_nu" => QVariant::TrueNu,
                    other => {
                        return Err(Error::Config {
                            line: l,
                            message: format!("unknown q_variant '{other}'"),
                        })
                    }
                };
            }
            LearnerSpec::Lpr(cfg)
        }
    };
    s.finish()?;
    Ok(LearnerEntry { label, spec })
}

/// A fixed bandwidth, `cor3(c_h=...)` or `cor4(s=..., c_h=...)`.
pub fn parse_bandwidth(text: &str) -> Result<BandwidthRule> {
    if let Ok(h) = parse_real("bandwidth", text) {
        if h > 0.0 {
            return Ok(BandwidthRule::Fixed(h));
        }
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    let spec = MethodSpec::parse(text)?;
    let c_h = spec.real("c_h")?.unwrap_or(1.0);
    if !(c_h > 0.0) {
        return Err(Error::invalid("c_h must be positive"));
    }
    match spec.name.as_str() {
        "cor3" => Ok(BandwidthRule::Cor3 { c_h }),
        "cor4" => {
            let s = spec
                .real("s")?
                .ok_or_else(|| Error::invalid("cor4 needs the nuisance smoothness s"))?;
            if !(s > 0.0) {
                return Err(Error::invalid("s must be positive"));
            }
            Ok(BandwidthRule::Cor4 { s, c_h })
        }
        other => Err(Error::invalid(format!("unknown bandwidth rule '{other}'"))),
    }
}

/// Parses and validates a configuration file's text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut all = sections(text)?;
    let pos = all.iter().position(|s| s.name == "experiment").ok_or(Error::Config {
        line: 0,
        message: "missing [experiment] section".into(),
    })?;
    let mut exp = all.remove(pos);
    let require = |exp: &mut Section, key: &str| {
        exp.take(key).ok_or(Error::Config {
            line: exp.line,
            message: format!("[experiment] needs '{key}'"),
        })
    };
    let (l, v) = require(&mut exp, "dgp")?;
    let dgp = at(l, DgpSpec::parse(&v))?;
    let d = dgp.dim();
    let sweep = match exp.take("sweep") {
        Some((l, v)) => parse_sweep(l, &v)?,
        None => Sweep {
            var: SweepVar::N,
            values: Vec::new(),
        },
    };
    let n = match exp.take("n") {
        Some((l, v)) => count(l, "n", &v)? as usize,
        None if sweep.var == SweepVar::N && !sweep.values.is_empty() => 0,
        None => return Err(require(&mut exp, "n").unwrap_err()),
    };
    let mut sweep = sweep;
    if sweep.values.is_empty() {
        sweep.values.push(n as f64);
    }
    let reps = match exp.take("reps") {
        Some((l, v)) => count(l, "reps", &v)? as usize,
        None => 1,
    };
    let seed = match exp.take("seed") {
        Some((l, v)) => count(l, "seed", &v)?,
        None => 0,
    };
    let scaling = match exp.take("scaling") {
        None => Scaling::NOver4,
        Some((l, v)) => match v.to_ascii_lowercase().as_str() {
            "raw" => Scaling::Raw,
            "n_over_4" => Scaling::NOver4,
            other => {
                return Err(Error::Config {
                    line: l,
                    message: format!("unknown scaling '{other}' (expected raw or n_over_4)"),
                })
            }
        },
    };
    let summary = match exp.take("summary") {
        None => SummaryMode::Mean,
        Some((l, v)) => match v.to_ascii_lowercase().as_str() {
            "mean" => SummaryMode::Mean,
            "median" => SummaryMode::Median,
            other => {
                return Err(Error::Config {
                    line: l,
                    message: format!("unknown summary '{other}' (expected mean or median)"),
                })
            }
        },
    };
    let output = exp.take("output").map(|(_, v)| PathBuf::from(v));
    exp.finish()?;

    let mut learners = Vec::new();
    for s in all {
        if s.name != "learner" {
            return Err(Error::Config {
                line: s.line,
                message: format!("unknown section [{}]", s.name),
            });
        }
        learners.push(learner(s, d)?);
    }
    let mut labels: Vec<&str> = learners.iter().map(|l: &LearnerEntry| l.label.as_str()).collect();
    labels.sort_unstable();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config {
            line: 0,
            message: format!("duplicate learner name '{}'", w[0]),
        });
    }
    let cfg = ExperimentConfig {
        dgp,
        n,
        reps,
        seed,
        sweep,
        scaling,
        summary,
        learners,
        output,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
