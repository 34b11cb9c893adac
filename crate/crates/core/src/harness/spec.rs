//! Text forms of methods, grids and data-generating processes.
//!
//! A method is written `name` or `name(key=value, ...)`, for example
//! `local_poly(degree=2, bandwidth=0.3, kernel=boxcar)`, `local_poly(degree=2, c_h=0.5)` or
//! `lasso(family=logistic, folds=5)`.

use crate::error::{Error, Result};
use crate::learners::{OutcomeMethod, PropensityMethod};
use crate::smoothers::{Family, Kernel, LassoConfig, LocalPolyConfig, RegressionMethod, SplineConfig};

/// Largest grid accepted from text, to keep typos from exhausting memory.
pub const MAX_GRID: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub name: String,
    pub args: Vec<(String, String)>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl MethodSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (name, rest) = match text.find('(') {
            Some(open) => {
                let inner = text[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::invalid(format!("'{text}': missing closing parenthesis")))?;
                (text[..open].trim(), Some(inner))
            }
            None => (text, None),
        };
        if !is_ident(name) {
            return Err(Error::invalid(format!("'{text}': bad method name '{name}'")));
        }
        let mut args = Vec::new();
        if let Some(inner) = rest {
            if inner.contains(['(', ')']) {
                return Err(Error::invalid(format!("'{text}': nested parentheses")));
            }
            for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("'{part}': expected key=value")))?;
                let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                if !is_ident(&k) || v.is_empty() {
                    return Err(Error::invalid(format!("'{part}': expected key=value")));
                }
                if args.iter().any(|(seen, _)| *seen == k) {
                    return Err(Error::invalid(format!("'{text}': duplicate argument '{k}'")));
                }
                args.push((k, v));
            }
        }
        Ok(Self {
            name: name.to_ascii_lowercase(),
            args,
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.args.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.args.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            Some((k, _)) => Err(Error::invalid(format!(
                "{}: unknown argument '{k}' (expected one of {})",
                self.name,
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn real(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_real(key, v)).transpose()
    }

    pub fn count(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::invalid(format!("{key}: expected a non-negative integer, got '{v}'")))
            })
            .transpose()
    }

    pub fn flag(&self, key: &str) -> Result<Option<bool>> {
        self.get(key).map(|v| parse_flag(key, v)).transpose()
    }
}

pub fn parse_real(key: &str, v: &str) -> Result<f64> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(Error::invalid(format!("{key}: expected a finite number, got '{v}'"))),
    }
}

pub fn parse_flag(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("{key}: expected true or false, got '{v}'"))),
    }
}

pub fn parse_kernel(v: &str) -> Result<Kernel> {
    match v.trim().to_ascii_lowercase().as_str() {
        "epanechnikov" => Ok(Kernel::Epanechnikov),
        "boxcar" | "uniform" => Ok(Kernel::Boxcar),
        other => Err(Error::invalid(format!("unknown kernel '{other}'"))),
    }
}

pub fn parse_regression(text: &str) -> Result<RegressionMethod> {
    regression_from(&MethodSpec::parse(text)?)
}

fn positive(key: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if x <= 0.0 => Err(Error::invalid(format!("{key} must be positive, got {x}"))),
        other => Ok(other),
    }
}

fn regression_from(spec: &MethodSpec) -> Result<RegressionMethod> {
    match spec.name.as_str() {
        "local_poly" | "local_linear" => {
            spec.check_keys(&["degree", "bandwidth", "c_h", "kernel", "ridge"])?;
            let default_degree = if spec.name == "local_linear" {
                1
            } else {
                LocalPolyConfig::default().degree
            };
            let ridge = spec.real("ridge")?.unwrap_or(LocalPolyConfig::default().ridge);
            if ridge < 0.0 {
                return Err(Error::invalid("ridge must be non-negative"));
            }
            Ok(RegressionMethod::LocalPoly(LocalPolyConfig {
                degree: spec.count("degree")?.unwrap_or(default_degree),
                bandwidth: positive("bandwidth", spec.real("bandwidth")?)?,
                c_h: positive("c_h", spec.real("c_h")?)?,
                kernel: spec.get("kernel").map(parse_kernel).transpose()?.unwrap_or_default(),
                ridge,
            }))
        }
        "spline" | "smoothing_spline" => {
            spec.check_keys(&["lambda"])?;
            Ok(RegressionMethod::Spline(SplineConfig {
                lambda: positive("lambda", spec.real("lambda")?)?,
            }))
        }
        "lasso" => {
            spec.check_keys(&[
                "family",
                "folds",
                "n_lambda",
                "ratio",
                "tol",
                "max_iter",
                "standardize",
                "lambda",
            ])?;
            let base = LassoConfig::default();
            let family = match spec.get("family").map(str::to_ascii_lowercase).as_deref() {
                None | Some("gaussian") => Family::Gaussian,
                Some("logistic") | Some("binomial") => Family::Logistic,
                Some(other) => return Err(Error::invalid(format!("unknown lasso family '{other}'"))),
            };
            let lambda = spec.real("lambda")?;
            if lambda.is_some_and(|l| l < 0.0) {
                return Err(Error::invalid("lambda must be non-negative"));
            }
            let cv_folds = spec.count("folds")?.unwrap_or(base.cv_folds);
            if cv_folds < 2 {
                return Err(Error::invalid("lasso folds must be at least 2"));
            }
            let ratio = spec.real("ratio")?.unwrap_or(base.lambda_min_ratio);
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::invalid("lasso ratio must lie in (0, 1)"));
            }
            let n_lambda = spec.count("n_lambda")?.unwrap_or(base.n_lambda);
            let max_iter = spec.count("max_iter")?.unwrap_or(base.max_iter);
            if n_lambda == 0 || max_iter == 0 {
                return Err(Error::invalid("lasso n_lambda and max_iter must be positive"));
            }
            Ok(RegressionMethod::Lasso(LassoConfig {
                lambda_grid: lambda.map(|l| vec![l]),
                n_lambda,
                lambda_min_ratio: ratio,
                cv_folds,
                max_iter,
                tol: positive("tol", spec.real("tol")?)?.unwrap_or(base.tol),
                family,
                standardize: spec.flag("standardize")?.unwrap_or(base.standardize),
            }))
        }
        other => Err(Error::invalid(format!(
            "unknown regression method '{other}' (expected local_poly, spline or lasso)"
        ))),
    }
}

/// `known`, `rate_controlled[(alpha=...)]` or a regression method. A
/// rate-controlled propensity without `alpha` takes it from the sweep and is
/// returned with `alpha = NaN`.
pub fn parse_propensity(text: &str) -> Result<PropensityMethod> {
    let spec = MethodSpec::parse(text)?;
    match spec.name.as_str() {
        "known" => {
            spec.check_keys(&[])?;
            Ok(PropensityMethod::Known)
        }
        "rate_controlled" => {
            spec.check_keys(&["alpha"])?;
            let alpha = positive("alpha", spec.real("alpha")?)?.unwrap_or(f64::NAN);
            Ok(PropensityMethod::RateControlled { alpha })
        }
        _ => Ok(PropensityMethod::Fit(regression_from(&spec)?)),
    }
}

pub fn parse_outcome(text: &str) -> Result<OutcomeMethod> {
    let spec = MethodSpec::parse(text)?;
    match spec.name.as_str() {
        "known" => {
            spec.check_keys(&[])?;
            Ok(OutcomeMethod::Known)
        }
        _ => Ok(OutcomeMethod::Fit(regression_from(&spec)?)),
    }
}

/// `start:stop:step` (inclusive of `stop` up to rounding) or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [single] => single
            .split(',')
            .map(|v| parse_real("grid", v))
            .collect::<Result<Vec<f64>>>()?,
        [a, b, step] => {
            let (a, b, step) = (
                parse_real("grid", a)?,
                parse_real("grid", b)?,
                parse_real("grid", step)?,
            );
            if !(step > 0.0) || b < a {
                return Err(Error::invalid(format!(
                    "grid '{text}': need start <= stop and step > 0"
                )));
            }
            let span = (b - a) / step;
            if !(span < MAX_GRID as f64) {
                return Err(Error::invalid(format!("grid '{text}' has too many points")));
            }
            let count = (span + 1e-9).floor() as usize + 1;
            (0..count).map(|k| a + step * k as f64).collect()
        }
        _ => {
            return Err(Error::invalid(format!(
                "grid '{text}': expected start:stop:step or a list"
            )))
        }
    };
    if grid.len() > MAX_GRID {
        return Err(Error::invalid(format!("grid '{text}' has too many points")));
    }
    Ok(grid)
}
