use std::fs;
use std::path::Path;

use cate::cli::run;
use cate::data::{read_csv, read_results_csv};

fn cate(args: &[&str]) -> i32 {
    run(std::iter::once("cate").chain(args.iter().copied()))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn simulate_then_fit_every_learner() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "data.csv");
    assert_eq!(cate(&["simulate", "--n", "900", "--seed", "3", "--out", &data]), 0);
    let table = read_csv(&data).unwrap();
    assert_eq!((table.n(), table.d()), (900, 1));

    for learner in ["t", "x", "ipw", "dr", "lpr"] {
        let out = path(dir.path(), &format!("{learner}.csv"));
        let code = cate(&[
            "fit",
            "--learner",
            learner,
            "--data",
            &data,
            "--grid",
            "-0.9:0.9:0.1",
            "--out",
            &out,
        ]);
        assert_eq!(code, 0, "{learner}");
        let text = fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,tau_hat,status"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 19, "{learner}");
        assert!(
            rows.iter().filter(|r| r.ends_with(",ok")).count() >= 15,
            "{learner}: {text}"
        );
    }
}

#[test]
fn fit_defaults_to_data_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "data.csv");
    let out = path(dir.path(), "fit.csv");
    assert_eq!(cate(&["simulate", "--n", "300", "--out", &data]), 0);
    assert_eq!(
        cate(&["fit", "--learner", "dr", "--data", &data, "--out", &out, "--crossfit"]),
        0
    );
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 301);
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "data.csv");
    let out = path(dir.path(), "fit.csv");
    assert_eq!(cate(&["simulate", "--n", "200", "--out", &data]), 0);
    assert_eq!(cate(&["no-such-command"]), 1);
    assert_eq!(
        cate(&["fit", "--learner", "oracle_dr", "--data", &data, "--out", &out]),
        1
    );
    assert_eq!(
        cate(&[
            "fit",
            "--learner",
            "dr",
            "--data",
            &data,
            "--out",
            &out,
            "--propensity",
            "known"
        ]),
        1
    );
    assert_eq!(
        cate(&[
            "fit",
            "--learner",
            "dr",
            "--data",
            &data,
            "--out",
            &out,
            "--clip-eps",
            "0.7"
        ]),
        1
    );
    assert_eq!(cate(&["fit", "--learner", "bogus", "--data", &data, "--out", &out]), 1);
    assert_eq!(cate(&["simulate", "--dgp", "nope", "--n", "10", "--out", &out]), 1);
    assert_eq!(cate(&["--help"]), 0);
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = path(dir.path(), "absent.csv");
    let out = path(dir.path(), "fit.csv");
    assert_eq!(cate(&["fit", "--learner", "t", "--data", &missing, "--out", &out]), 2);
}

#[test]
fn benchmark_and_rates() {
    let dir = tempfile::tempdir().unwrap();
    let config = path(dir.path(), "bench.ini");
    let results = path(dir.path(), "results.csv");
    fs::write(
        &config,
        "[experiment]\ndgp = piecewise\nreps = 3\nseed = 9\nsweep = n: 400, 800, 1600\nscaling = raw\n\n\
         [learner]\nkind = oracle_dr\nstage2 = spline\n\n[learner]\nkind = t\noutcome = spline\n",
    )
    .unwrap();
    assert_eq!(
        cate(&["benchmark", "--config", &config, "--out", &results, "--threads", "1"]),
        0
    );
    let records = read_results_csv(&results).unwrap();
    assert_eq!(records.len(), 2 * 3 * 3);
    assert!(records.iter().all(|r| r.is_ok()));
    assert!(dir.path().join("results.summary.csv").exists());

    assert_eq!(cate(&["rates", "--in", &results]), 0);
    let rates = fs::read_to_string(dir.path().join("results.rates.csv")).unwrap();
    assert!(rates.starts_with("learner,slope,points"));
    assert_eq!(rates.lines().count(), 3);

    fs::write(&config, "[experiment]\ndgp = piecewise\n").unwrap();
    assert_eq!(cate(&["benchmark", "--config", &config, "--out", &results]), 1);
}

#[test]
fn self_check_passes() {
    assert_eq!(cate(&["check", "--configs", "200"]), 0);
}
