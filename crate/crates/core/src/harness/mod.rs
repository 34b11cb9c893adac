//! Monte-Carlo experiments: running learners over replications, scoring
//! them against the known effect and summarizing the results.

mod config;
mod spec;

pub use config::{
    parse_bandwidth, parse_config, read_config, ExperimentConfig, LearnerEntry, Scaling, SummaryMode, Sweep, SweepVar,
};
pub use spec::{parse_grid, parse_outcome, parse_propensity, parse_regression, MethodSpec, MAX_GRID};

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::data::{assign_folds, fmt_real, ResultRecord, Role, QUARTERS};
use crate::dgp::rng::{replication_seed, stream_rng, Stream};
use crate::dgp::{HighDimDgp, PiecewiseDgp, Sample, Truth};
use crate::error::{Error, Result};
use crate::learners::{CateFit, LearnerContext, LearnerSpec};
use crate::math::{mean, median, ols_line, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpSpec {
    Piecewise,
    HighDim { d: usize, alpha: usize, beta: usize },
}

impl DgpSpec {
    /// `piecewise` or `highdim(d=..., alpha=..., beta=...)`; sparsities
    /// default to `d / 10`.
    pub fn parse(text: &str) -> Result<Self> {
        let spec = MethodSpec::parse(text)?;
        match spec.name.as_str() {
            "piecewise" => {
                if !spec.args.is_empty() {
                    return Err(Error::invalid("piecewise takes no arguments"));
                }
                Ok(DgpSpec::Piecewise)
            }
            "highdim" => {
                if let Some((k, _)) = spec
                    .args
                    .iter()
                    .find(|(k, _)| !["d", "alpha", "beta"].contains(&k.as_str()))
                {
                    return Err(Error::invalid(format!("highdim: unknown argument '{k}'")));
                }
                let d = spec.count("d")?.unwrap_or(500);
                let alpha = spec.count("alpha")?.unwrap_or((d / 10).max(1));
                let beta = spec.count("beta")?.unwrap_or(alpha);
                HighDimDgp::new(d, alpha, beta)?;
                Ok(DgpSpec::HighDim { d, alpha, beta })
            }
            other => Err(Error::invalid(format!(
                "unknown dgp '{other}' (expected piecewise or highdim)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DgpSpec::Piecewise => "piecewise",
            DgpSpec::HighDim { .. } => "highdim",
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            DgpSpec::Piecewise => 1,
            DgpSpec::HighDim { d, .. } => d,
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Sample {
        match *self {
            DgpSpec::Piecewise => PiecewiseDgp.sample(n, seed),
            DgpSpec::HighDim { d, alpha, beta } => HighDimDgp::new(d, alpha, beta)
                .expect("validated at parse time")
                .sample(n, seed),
        }
    }
}

/// Mean squared error of a fit on a set of points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mse {
    pub scaled: f64,
    pub raw: f64,
    pub failed: usize,
}

/// Scores `fit` against `truth` on row-major `points`. Points whose local
/// system fails are skipped and counted; any other error is returned.
/// `n` is the total sample size used by [`Scaling::NOver4`].
pub fn mse(fit: &CateFit, truth: &dyn Truth, points: &[f64], d: usize, scaling: Scaling, n: usize) -> Result<Mse> {
    if points.is_empty() || d == 0 || !points.len().is_multiple_of(d) {
        return Err(Error::invalid("evaluation points must be a non-empty row-major matrix"));
    }
    let mut sum = 0.0;
    let mut scored = 0usize;
    let mut failed = 0usize;
    for x in points.chunks(d) {
        match fit.evaluate(x) {
            Ok(v) => {
                sum += (v - truth.tau(x)).powi(2);
                scored += 1;
            }
            Err(e) if e.is_query_failure() => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if scored == 0 {
        return Err(Error::EvaluationEmpty);
    }
    let raw = sum / scored as f64;
    let scaled = match scaling {
        Scaling::Raw => raw,
        Scaling::NOver4 => raw * n as f64 / 4.0,
    };
    Ok(Mse { scaled, raw, failed })
}

/// One replication of every learner at one sweep value. Sample, folds and
/// any rate-controlled propensity noise depend only on `(seed, rep)`, so all
/// sweep values see the same data.
pub fn run_replication(cfg: &ExperimentConfig, value: f64, rep: usize) -> Vec<ResultRecord> {
    let n = cfg.n_at(value);
    let seed = replication_seed(cfg.seed, rep as u64);
    let sample = cfg.dgp.sample(n, seed);
    let d = sample.table.d();
    let record = |label: &str, outcome: Result<Mse>| {
        let (mse_scaled, mse_raw, failed_query_count, error) = match outcome {
            Ok(m) => (m.scaled, m.raw, m.failed, None),
            Err(e) => (f64::NAN, f64::NAN, 0, Some(e.to_string())),
        };
        ResultRecord {
            dgp: cfg.dgp.name().to_string(),
            learner: label.to_string(),
            n,
            d,
            rep,
            seed,
            param_name: cfg.sweep.var.to_string(),
            param_value: value,
            mse_scaled,
            mse_raw,
            failed_query_count,
            error,
        }
    };
    let folds = match assign_folds(n, &QUARTERS, seed) {
        Ok(f) => f,
        Err(e) => {
            let msg = e.to_string();
            return cfg
                .learners
                .iter()
                .map(|l| record(&l.label, Err(Error::invalid(msg.clone()))))
                .collect();
        }
    };
    let eval: Vec<f64> = folds
        .rows(Role::Eval)
        .iter()
        .flat_map(|&i| sample.table.row(i).iter().copied())
        .collect();
    let ctx = LearnerContext {
        table: &sample.table,
        folds: &folds,
        truth: Some(sample.truth.clone()),
        seed,
    };
    cfg.learners
        .iter()
        .map(|l| {
            let spec = cfg.spec_at(&l.spec, value);
            let outcome = spec
                .fit(&ctx)
                .and_then(|fit| mse(&fit, sample.truth.as_ref(), &eval, d, cfg.scaling, n));
            if let Err(e) = &outcome {
                log::warn!("{} failed on rep {rep} at {}={value}: {e}", l.label, cfg.sweep.var);
            }
            record(&l.label, outcome)
        })
        .collect()
}

/// Runs every (sweep value, replication) pair, in parallel, and returns the
/// records ordered by sweep value, replication and learner.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let jobs: Vec<(usize, f64, usize)> = cfg
        .sweep
        .values
        .iter()
        .enumerate()
        .flat_map(|(k, &v)| (0..cfg.reps).map(move |r| (k, v, r)))
        .collect();
    let mut out: Vec<(usize, usize, Vec<ResultRecord>)> = jobs
        .par_iter()
        .map(|&(k, v, r)| (k, r, run_replication(cfg, v, r)))
        .collect();
    out.sort_by_key(|&(k, r, _)| (k, r));
    Ok(out.into_iter().flat_map(|(_, _, recs)| recs).collect())
}

/// Summary of one (learner, sweep value) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub learner: String,
    pub param_name: String,
    pub param_value: f64,
    pub mode: SummaryMode,
    /// Mean or median of `mse_scaled` over successful replications.
    pub value: f64,
    /// Monte-Carlo standard error of `value`.
    pub mc_se: f64,
    /// Mean of `mse_raw` over successful replications.
    pub raw_mean: f64,
    pub reps: usize,
    pub failed_reps: usize,
    pub failed_queries: usize,
}

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Bootstrap standard error of the median.
pub fn median_se(values: &[f64], seed: u64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut rng = stream_rng(seed, Stream::Bootstrap);
    let mut draw = vec![0.0; values.len()];
    let medians: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for v in draw.iter_mut() {
                *v = values[rng.random_range(0..values.len())];
            }
            median(&draw)
        })
        .collect();
    variance(&medians).sqrt()
}

/// Groups records by learner and sweep value, in order of first appearance.
/// Failed replications are excluded from the statistic and counted. A group
/// with no successful replication yields NaN statistics and a warning.
pub fn summarize(records: &[ResultRecord], mode: SummaryMode, seed: u64) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, u64)> = Vec::new();
    for r in records {
        let key = (r.learner.clone(), r.param_value.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(learner, bits)| {
            let group: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| r.learner == learner && r.param_value.to_bits() == bits)
                .collect();
            let ok: Vec<f64> = group.iter().filter(|r| r.is_ok()).map(|r| r.mse_scaled).collect();
            let raw: Vec<f64> = group.iter().filter(|r| r.is_ok()).map(|r| r.mse_raw).collect();
            let (value, mc_se) = if ok.is_empty() {
                log::warn!("no successful replication for {learner} at {}", f64::from_bits(bits));
                (f64::NAN, f64::NAN)
            } else {
                match mode {
                    SummaryMode::Mean => (mean(&ok), (variance(&ok) / ok.len() as f64).sqrt()),
                    SummaryMode::Median => (median(&ok), median_se(&ok, seed ^ bits)),
                }
            };
            SummaryRow {
                param_name: group[0].param_name.clone(),
                param_value: f64::from_bits(bits),
                mode,
                value,
                mc_se,
                raw_mean: if raw.is_empty() { f64::NAN } else { mean(&raw) },
                reps: ok.len(),
                failed_reps: group.len() - ok.len(),
                failed_queries: group.iter().map(|r| r.failed_query_count).sum(),
                learner,
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "learner",
    "param_name",
    "param_value",
    "statistic",
    "mse_scaled",
    "mc_se",
    "mse_raw_mean",
    "reps",
    "failed_reps",
    "failed_queries",
];

pub fn write_summary_to<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.learner.clone(),
            r.param_name.clone(),
            fmt_real(r.param_value),
            match r.mode {
                SummaryMode::Mean => "mean".into(),
                SummaryMode::Median => "median".into(),
            },
            fmt_real(r.value),
            fmt_real(r.mc_se),
            fmt_real(r.raw_mean),
            r.reps.to_string(),
            r.failed_reps.to_string(),
            r.failed_queries.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_summary_to(rows, file)
}

/// Least-squares slope of `log mse` on `log n`.
pub fn rate_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    if let Some(&(n, m)) = pairs
        .iter()
        .find(|(n, m)| !(*n > 0.0 && *m > 0.0 && n.is_finite() && m.is_finite()))
    {
        return Err(Error::invalid(format!(
            "rate slope needs positive values, got n={n}, mse={m}"
        )));
    }
    let mut distinct: Vec<u64> = pairs.iter().map(|p| p.0.to_bits()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::invalid("rate slope needs at least 3 distinct sample sizes"));
    }
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    Ok(ols_line(&lx, &ly).0)
}

/// Integrated squared bias and integrated variance of a family of fitted
/// curves on a common grid, averaged uniformly over the grid.
pub fn bias_variance(curves: &[Vec<f64>], truth: &[f64]) -> Result<(f64, f64)> {
    if curves.len() < 2 || curves.iter().any(|c| c.len() != truth.len()) || truth.is_empty() {
        return Err(Error::invalid("need at least two curves of the grid's length"));
    }
    let mut bias2 = 0.0;
    let mut var = 0.0;
    for (g, t) in truth.iter().enumerate() {
        let column: Vec<f64> = curves.iter().map(|c| c[g]).collect();
        bias2 += (mean(&column) - t).powi(2);
        var += variance(&column);
    }
    let m = truth.len() as f64;
    Ok((bias2 / m, var / m))
}

/// Fits `spec` on `reps` independent samples and evaluates each fit on
/// `grid` (row-major). Replications use [`replication_seed`] of `seed`.
pub fn curves_on_grid(
    dgp: &DgpSpec,
    n: usize,
    reps: usize,
    seed: u64,
    specs: &[LearnerSpec],
    grid: &[f64],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let d = dgp.dim();
    let per_rep: Vec<Result<Vec<Vec<f64>>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let s = replication_seed(seed, rep as u64);
            let sample = dgp.sample(n, s);
            let folds = assign_folds(n, &QUARTERS, s)?;
            let ctx = LearnerContext {
                table: &sample.table,
                folds: &folds,
                truth: Some(sample.truth.clone()),
                seed: s,
            };
            specs
                .iter()
                .map(|spec| {
                    let fit = spec.fit(&ctx)?;
                    grid.chunks(d).map(|x| fit.evaluate(x)).collect()
                })
                .collect()
        })
        .collect();
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..specs.len())
        .map(|k| per_rep.iter().map(|r| r[k].clone()).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Crossfit, LearnerKind};
    use crate::smoothers::{Predictor, Tuning};
    use std::sync::Arc;

    struct Constant(f64);

    impl Predictor for Constant {
        fn predict(&self, _x: &[f64]) -> Result<f64> {
            Ok(self.0)
        }

        fn tuning(&self) -> Tuning {
            Tuning::default()
        }
    }

    fn constant(c: f64) -> CateFit {
        CateFit::new(LearnerKind::T, Crossfit::Single, vec![Arc::new(Constant(c))])
    }

    #[test]
    fn mse_hand_values() {
        let pts = [0.1, -0.4, 0.7];
        let zero = mse(&constant(0.0), &PiecewiseDgp, &pts, 1, Scaling::Raw, 2000).unwrap();
        assert_eq!((zero.raw, zero.scaled), (0.0, 0.0));
        let c = mse(&constant(0.3), &PiecewiseDgp, &pts, 1, Scaling::Raw, 2000).unwrap();
        assert!((c.raw - 0.09).abs() < 1e-15);
        let c = mse(&constant(0.3), &PiecewiseDgp, &pts, 1, Scaling::NOver4, 2000).unwrap();
        assert!((c.scaled - 500.0 * 0.09).abs() < 1e-12);
    }

    fn rec(learner: &str, value: f64, mse: f64) -> ResultRecord {
        ResultRecord {
            dgp: "piecewise".into(),
            learner: learner.into(),
            n: 100,
            d: 1,
            rep: 0,
            seed: 0,
            param_name: "alpha_rate".into(),
            param_value: value,
            mse_scaled: mse,
            mse_raw: mse,
            failed_query_count: 1,
            error: None,
        }
    }

    #[test]
    fn summaries() {
        let recs = vec![
            rec("a", 0.1, 1.0),
            rec("a", 0.1, 2.0),
            rec("a", 0.1, 100.0),
            rec("b", 0.1, 4.0),
        ];
        let med = summarize(&recs, SummaryMode::Median, 0);
        assert_eq!(med.len(), 2);
        assert_eq!(med[0].value, 2.0);
        assert_eq!(med[1].value, 4.0);
        assert_eq!(med[0].failed_queries, 3);
        let means = summarize(&recs[..3], SummaryMode::Mean, 0);
        assert!((means[0].value - 103.0 / 3.0).abs() < 1e-12);
        let three = summarize(
            &[rec("a", 0.1, 1.0), rec("a", 0.1, 2.0), rec("a", 0.1, 3.0)],
            SummaryMode::Mean,
            0,
        );
        assert_eq!(three[0].value, 2.0);
        let mut failed = rec("c", 0.2, f64::NAN);
        failed.error = Some("boom".into());
        let s = summarize(&[failed], SummaryMode::Mean, 0);
        assert!(s[0].value.is_nan());
        assert_eq!(s[0].failed_reps, 1);
    }

    #[test]
    fn slopes() {
        let pairs: Vec<(f64, f64)> = [500.0, 1000.0, 2000.0, 4000.0]
            .iter()
            .map(|&n: &f64| (n, 3.0 * n.powf(-2.0 / 3.0)))
            .collect();
        assert!((rate_slope(&pairs).unwrap() + 2.0 / 3.0).abs() < 1e-10);
        let flat: Vec<(f64, f64)> = pairs.iter().map(|p| (p.0, 0.5)).collect();
        assert!(rate_slope(&flat).unwrap().abs() < 1e-12);
        assert!(rate_slope(&pairs[..2]).is_err());
        assert!(rate_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn bias_variance_hand_values() {
        let curves = vec![vec![1.0, 0.0], vec![3.0, 0.0]];
        let (b, v) = bias_variance(&curves, &[0.0, 0.0]).unwrap();
        assert_eq!(b, 2.0); // (2^2 + 0) / 2
        assert_eq!(v, 1.0); // (2 + 0) / 2
    }

    #[test]
    fn dgp_specs() {
        assert_eq!(DgpSpec::parse("piecewise").unwrap(), DgpSpec::Piecewise);
        assert_eq!(
            DgpSpec::parse("highdim(d=100, alpha=10, beta=10)").unwrap(),
            DgpSpec::HighDim {
                d: 100,
                alpha: 10,
                beta: 10
            }
        );
        assert_eq!(
            DgpSpec::parse("highdim(d=50)").unwrap(),
            DgpSpec::HighDim {
                d: 50,
                alpha: 5,
                beta: 5
            }
        );
        assert!(DgpSpec::parse("highdim(d=5, alpha=6)").is_err());
        assert!(DgpSpec::parse("piecewise(x=1)").is_err());
    }
}
