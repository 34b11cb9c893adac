//! Command-line interface. Exit codes: 0 success, 1 configuration or usage
//! error, 2 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::Rng;

use crate::data::{
    assign_folds, fmt_real, read_csv, read_results_csv, write_csv, write_results_csv, ObservationTable, QUARTERS,
    THIRDS,
};
use crate::dgp::rng::{stream_rng, Stream};
use crate::dgp::{PiecewiseDgp, RateControlledPropensity};
use crate::error::{Error, Result};
use crate::harness::{
    parse_bandwidth, parse_grid, parse_outcome, parse_propensity, parse_regression, rate_slope, read_config,
    run_experiment, summarize, write_summary_csv, DgpSpec, SweepVar,
};
use crate::learners::{
    Crossfit, DrLearnerConfig, LearnerContext, LearnerKind, LearnerSpec, LpRConfig, OutcomeMethod, PropensityMethod,
};
use crate::math::mean;
use crate::pseudo::{check_eps, clip_propensity, conditional_bias_oracle, error_function_rhat, Nuisances};
use crate::smoothers::{fit_regression, RegressionMethod, SplineConfig};

#[derive(Debug, Parser)]
#[command(name = "cate", version, about = "CATE meta-learners and simulation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a simulation design to CSV.
    Simulate {
        /// `piecewise` or `highdim(d=..., alpha=..., beta=...)`.
        #[arg(long, default_value = "piecewise")]
        dgp: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one learner on a CSV file and write its estimates.
    Fit {
        /// t, x, ipw, dr or lpr.
        #[arg(long)]
        learner: String,
        #[arg(long)]
        data: PathBuf,
        /// Query grid `start:stop:step` for one covariate; defaults to the data rows.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the three-way fold split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        propensity: Option<String>,
        #[arg(long)]
        outcome: Option<String>,
        #[arg(long)]
        stage2: Option<String>,
        #[arg(long, default_value_t = crate::pseudo::DEFAULT_CLIP)]
        clip_eps: f64,
        /// Average the three fold rotations.
        #[arg(long)]
        crossfit: bool,
        /// lp-R target smoothness.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// lp-R bandwidth: a number, `cor3(c_h=...)` or `cor4(s=..., c_h=...)`.
        #[arg(long, default_value = "cor3")]
        bandwidth: String,
    },
    /// Run an experiment config; writes results and `<out>.summary.csv`.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Results path; defaults to the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of replications.
        #[arg(long)]
        reps: Option<usize>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Log-log MSE slopes over an `n` sweep in a results CSV.
    Rates {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        learner: Option<String>,
        /// Slope table; defaults to `<in>.rates.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in identity and bound diagnostics.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random nuisance configurations to test.
        #[arg(long, default_value_t = 1000)]
        configs: usize,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

trait Stage<T> {
    fn config(self) -> std::result::Result<T, Failure>;
    fn runtime(self) -> std::result::Result<T, Failure>;
}

impl<T> Stage<T> for Result<T> {
    fn config(self) -> std::result::Result<T, Failure> {
        self.map_err(Failure::Config)
    }

    fn runtime(self) -> std::result::Result<T, Failure> {
        self.map_err(Failure::Runtime)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Simulate { dgp, n, seed, out } => {
            let dgp = DgpSpec::parse(&dgp).config()?;
            if n == 0 {
                return Err(Failure::Config(Error::invalid("n must be positive")));
            }
            let sample = dgp.sample(n, seed);
            write_csv(&sample.table, &out).runtime()?;
            println!("wrote {n} rows of {} to {}", dgp.name(), out.display());
            Ok(())
        }
        Command::Fit {
            learner,
            data,
            grid,
            out,
            seed,
            propensity,
            outcome,
            stage2,
            clip_eps,
            crossfit,
            gamma,
            bandwidth,
        } => {
            let kind: LearnerKind = learner.parse().config()?;
            check_eps(clip_eps).config()?;
            let grid = grid.as_deref().map(parse_grid).transpose().config()?;
            let opts = FitOptions {
                kind,
                propensity,
                outcome,
                stage2,
                clip_eps,
                crossfit: if crossfit {
                    Crossfit::Averaged3
                } else {
                    Crossfit::Single
                },
                gamma,
                bandwidth,
            };
            let table = read_csv(&data).runtime()?;
            if grid.is_some() && table.d() != 1 {
                return Err(Failure::Config(Error::invalid(format!(
                    "--grid needs one covariate, the data has {}",
                    table.d()
                ))));
            }
            let spec = opts.spec(table.d()).config()?;
            fit_command(&table, &spec, grid, seed, &out).runtime()
        }
        Command::Benchmark {
            config,
            out,
            reps,
            threads,
        } => {
            let mut cfg = read_config(&config).config()?;
            if let Some(r) = reps {
                cfg.reps = r;
                cfg.validate().config()?;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Failure::Config(Error::invalid("no --out given and the config has no output")))?;
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t.max(1))
                    .build_global()
                    .map_err(|e| Failure::Runtime(Error::invalid(e.to_string())))?;
            }
            let records = run_experiment(&cfg).runtime()?;
            write_results_csv(&records, &out).runtime()?;
            let rows = summarize(&records, cfg.summary, cfg.seed);
            let summary_path = sibling(&out, "summary");
            write_summary_csv(&rows, &summary_path).runtime()?;
            println!(
                "{:<14} {:>12} {:>14} {:>12} {:>6} {:>7}",
                "learner", cfg.sweep.var, "mse_scaled", "mc_se", "reps", "failed"
            );
            for r in &rows {
                println!(
                    "{:<14} {:>12.4} {:>14.6} {:>12.6} {:>6} {:>7}",
                    r.learner, r.param_value, r.value, r.mc_se, r.reps, r.failed_reps
                );
            }
            println!("wrote {} and {}", out.display(), summary_path.display());
            Ok(())
        }
        Command::Rates { input, learner, out } => {
            let records = read_results_csv(&input).runtime()?;
            let slopes = rates(&records, learner.as_deref()).config()?;
            let out = out.unwrap_or_else(|| sibling(&input, "rates"));
            let mut w = csv::Writer::from_path(&out).map_err(|e| Failure::Runtime(e.into()))?;
            w.write_record(["learner", "slope", "points"])
                .map_err(|e| Failure::Runtime(e.into()))?;
            for (name, slope, points) in &slopes {
                println!("{name} {slope:.4}");
                w.write_record([name.clone(), fmt_real(*slope), points.to_string()])
                    .map_err(|e| Failure::Runtime(e.into()))?;
            }
            w.flush().map_err(|e| Failure::Runtime(Error::io(&out, e)))?;
            Ok(())
        }
        Command::Check { seed, configs } => {
            let results = diagnostics(seed, configs).runtime()?;
            let mut failed = 0;
            for (name, ok, detail) in &results {
                println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
                failed += usize::from(!ok);
            }
            if failed > 0 {
                return Err(Failure::Runtime(Error::invalid(format!(
                    "{failed} diagnostic(s) failed"
                ))));
            }
            Ok(())
        }
    }
}

/// `results.csv` -> `results.<tag>.csv`, in the same directory.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{tag}.csv"))
}

struct FitOptions {
    kind: LearnerKind,
    propensity: Option<String>,
    outcome: Option<String>,
    stage2: Option<String>,
    clip_eps: f64,
    crossfit: Crossfit,
    gamma: f64,
    bandwidth: String,
}

impl FitOptions {
    fn spec(&self, d: usize) -> Result<LearnerSpec> {
        let default = if d == 1 { "spline" } else { "lasso" };
        let regression = |v: &Option<String>| parse_regression(v.as_deref().unwrap_or(default));
        let outcome = || -> Result<OutcomeMethod> {
            let m = parse_outcome(self.outcome.as_deref().unwrap_or(default))?;
            if m == OutcomeMethod::Known {
                return Err(Error::invalid("known nuisances are unavailable for a data file"));
            }
            Ok(m)
        };
        let propensity = || -> Result<PropensityMethod> {
            let fallback = if d == 1 { "spline" } else { "lasso(family=logistic)" };
            match parse_propensity(self.propensity.as_deref().unwrap_or(fallback))? {
                m @ PropensityMethod::Fit(_) => Ok(m),
                _ => Err(Error::invalid(
                    "known or rate-controlled propensities need a simulation design",
                )),
            }
        };
        Ok(match self.kind {
            LearnerKind::T => LearnerSpec::T { outcome: outcome()? },
            LearnerKind::Ipw => LearnerSpec::Ipw {
                propensity: propensity()?,
                stage2: regression(&self.stage2)?,
                clip_eps: self.clip_eps,
            },
            LearnerKind::X | LearnerKind::Dr => {
                let cfg = DrLearnerConfig {
                    propensity: propensity()?,
                    outcome: outcome()?,
                    stage2: regression(&self.stage2)?,
                    clip_eps: self.clip_eps,
                    crossfit: self.crossfit,
                };
                if self.kind == LearnerKind::X {
                    LearnerSpec::X(cfg)
                } else {
                    LearnerSpec::Dr(cfg)
                }
            }
            LearnerKind::OracleDr => return Err(Error::invalid("oracle_dr needs a simulation design; use benchmark")),
            LearnerKind::Lpr => {
                if !(self.gamma > 0.0) {
                    return Err(Error::invalid("gamma must be positive"));
                }
                let mut cfg = LpRConfig::new(self.gamma, parse_bandwidth(&self.bandwidth)?, outcome()?);
                cfg.clip_eps = self.clip_eps;
                cfg.crossfit = self.crossfit;
                LearnerSpec::Lpr(cfg)
            }
        })
    }
}

fn fit_command(
    table: &ObservationTable,
    spec: &LearnerSpec,
    grid: Option<Vec<f64>>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let folds = assign_folds(table.n(), &THIRDS, seed)?;
    let ctx = LearnerContext::new(table, &folds)?;
    let fit = spec.fit(&ctx)?;
    let d = table.d();
    let queries: Vec<f64> = match grid {
        Some(g) => g,
        None => table.covariates().to_vec(),
    };
    let mut w = csv::Writer::from_path(out)?;
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.extend(["tau_hat".into(), "status".into()]);
    w.write_record(&header)?;
    let mut failed = 0;
    for x in queries.chunks(d) {
        let mut row: Vec<String> = x.iter().map(|v| fmt_real(*v)).collect();
        match fit.evaluate(x) {
            Ok(v) => row.extend([fmt_real(v), "ok".into()]),
            Err(e) if e.is_query_failure() => {
                failed += 1;
                row.extend([String::new(), e.to_string()]);
            }
            Err(e) => return Err(e),
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    let total = queries.len() / d;
    println!("wrote {total} estimates to {} ({failed} failed queries)", out.display());
    Ok(())
}

/// Slope of mean raw MSE against total `n`, per learner.
fn rates(records: &[crate::data::ResultRecord], learner: Option<&str>) -> Result<Vec<(String, f64, usize)>> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        if learner.is_none_or(|l| l == r.learner) && !names.contains(&r.learner) {
            names.push(r.learner.clone());
        }
    }
    if names.is_empty() {
        return Err(Error::invalid("no matching learner in the results"));
    }
    if let Some(r) = records.iter().find(|r| r.param_name != SweepVar::N.to_string()) {
        return Err(Error::invalid(format!(
            "rates need an n sweep, found parameter '{}'",
            r.param_name
        )));
    }
    names
        .into_iter()
        .map(|name| {
            let mut ns: Vec<usize> = records.iter().filter(|r| r.learner == name).map(|r| r.n).collect();
            ns.sort_unstable();
            ns.dedup();
            let pairs = ns
                .iter()
                .filter_map(|&n| {
                    let v: Vec<f64> = records
                        .iter()
                        .filter(|r| r.learner == name && r.n == n && r.is_ok())
                        .map(|r| r.mse_raw)
                        .collect();
                    (!v.is_empty()).then(|| (n as f64, mean(&v)))
                })
                .collect::<Vec<_>>();
            let slope = rate_slope(&pairs).map_err(|e| Error::invalid(format!("{name}: {e}")))?;
            Ok((name, slope, pairs.len()))
        })
        .collect()
}

type Diagnostic = (&'static str, bool, String);

/// Identity and bound checks on random nuisance configurations and on
/// estimated nuisances for the piecewise design.
pub fn diagnostics(seed: u64, configs: usize) -> Result<Vec<Diagnostic>> {
    let mut rng = stream_rng(seed, Stream::Sample);
    let mut worst_unbiased = 0.0f64;
    let mut worst_robust = 0.0f64;
    let mut worst_enum = 0.0f64;
    let mut bound_ok = true;
    let eps = 0.01;
    for _ in 0..configs.max(1) {
        let truth = Nuisances {
            pi: rng.random_range(eps..1.0 - eps),
            mu0: rng.random_range(-5.0..5.0),
            mu1: rng.random_range(-5.0..5.0),
        };
        let est = Nuisances {
            pi: rng.random_range(eps..1.0 - eps),
            mu0: rng.random_range(-5.0..5.0),
            mu1: rng.random_range(-5.0..5.0),
        };
        worst_unbiased = worst_unbiased.max(conditional_bias_oracle(&truth, &truth).abs());
        worst_robust = worst_robust
            .max(error_function_rhat(&truth, &Nuisances { pi: truth.pi, ..est }).abs())
            .max(error_function_rhat(&truth, &Nuisances { pi: est.pi, ..truth }).abs());
        let r = error_function_rhat(&truth, &est);
        worst_enum = worst_enum.max((r - conditional_bias_oracle(&truth, &est)).abs() / (1.0 + r.abs()));
        bound_ok &= r.abs()
            <= 2.0 / eps * (truth.pi - est.pi).abs() * ((truth.mu1 - est.mu1).abs() + (truth.mu0 - est.mu0).abs())
                + 1e-12;
    }

    // estimated nuisances on the piecewise design
    let n = 4000;
    let sample = PiecewiseDgp.sample(n, seed);
    let folds = assign_folds(n, &QUARTERS, seed)?;
    let spline = RegressionMethod::Spline(SplineConfig::default());
    let arm = |a: u8| -> Result<_> {
        let rows: Vec<usize> = folds
            .rows(crate::data::Role::D1B)
            .into_iter()
            .filter(|&i| sample.table.a(i) == a)
            .collect();
        let x: Vec<f64> = rows.iter().map(|&i| sample.table.row(i)[0]).collect();
        let y: Vec<f64> = rows.iter().map(|&i| sample.table.y(i)).collect();
        fit_regression(&spline, &x, 1, &y)
    };
    let (mu0, mu1) = (arm(0)?, arm(1)?);
    let pihat = RateControlledPropensity::new(sample.truth.clone(), 0.25, n / 4, seed)?;
    let mut grid_ok = true;
    let mut worst_grid = 0.0f64;
    for k in 0..=200 {
        let x = [-1.0 + 0.01 * k as f64];
        let truth = Nuisances {
            pi: sample.truth.propensity(&x),
            mu0: sample.truth.mu0(&x),
            mu1: sample.truth.mu1(&x),
        };
        let est = Nuisances {
            pi: clip_propensity(pihat.evaluate(&x), eps),
            mu0: mu0.predict(&x)?,
            mu1: mu1.predict(&x)?,
        };
        let r = error_function_rhat(&truth, &est);
        worst_grid = worst_grid.max((r - conditional_bias_oracle(&truth, &est)).abs());
        let bound = 2.0 / (eps * eps)
            * (truth.pi - est.pi).powi(2)
            * ((truth.mu1 - est.mu1).powi(2) + (truth.mu0 - est.mu0).powi(2));
        grid_ok &= r * r <= bound + 1e-12;
    }

    let partition = {
        let f = assign_folds(1001, &QUARTERS, seed)?;
        let counts: Vec<usize> = crate::data::Role::ALL.iter().map(|&r| f.count(r)).collect();
        counts.iter().sum::<usize>() == 1001 && counts.iter().all(|&c| (250..=251).contains(&c))
    };

    Ok(vec![
        (
            "dr pseudo-outcome unbiased at the truth",
            worst_unbiased < 1e-12,
            format!("max |bias| {worst_unbiased:.2e}"),
        ),
        (
            "error function vanishes under either correct nuisance",
            worst_robust < 1e-12,
            format!("max |r| {worst_robust:.2e}"),
        ),
        (
            "error function matches arm enumeration",
            worst_enum < 1e-10,
            format!("max relative gap {worst_enum:.2e}"),
        ),
        (
            "first-order product bound",
            bound_ok,
            format!("{configs} configurations"),
        ),
        (
            "piecewise design: estimated nuisances satisfy the squared bound",
            grid_ok && worst_grid < 1e-10,
            format!("201 grid points, max enumeration gap {worst_grid:.2e}"),
        ),
        (
            "fold assignment partitions rows",
            partition,
            "n = 1001, quarters".into(),
        ),
    ])
}
