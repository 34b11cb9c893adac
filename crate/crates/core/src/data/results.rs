use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::fmt_real;
use crate::error::{Error, Result};

/// Column order of the results CSV. The two trailing columns carry the
/// failure accounting that the MSE columns alone cannot express.
pub const RESULTS_HEADER: [&str; 12] = [
    "dgp",
    "learner",
    "n",
    "d",
    "rep",
    "seed",
    "param_name",
    "param_value",
    "mse_scaled",
    "mse_raw",
    "failed_queries",
    "status",
];

/// One Monte-Carlo measurement: a learner on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub dgp: String,
    pub learner: String,
    pub n: usize,
    pub d: usize,
    pub rep: usize,
    pub seed: u64,
    pub param_name: String,
    pub param_value: f64,
    /// NaN when the learner failed.
    pub mse_scaled: f64,
    pub mse_raw: f64,
    pub failed_query_count: usize,
    /// `None` on success, otherwise the learner error message.
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

pub fn write_results_to<W: Write>(records: &[ResultRecord], writer: W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("no result records to write"));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        let mse = |v: f64| if r.is_ok() { fmt_real(v) } else { String::new() };
        w.write_record([
            r.dgp.clone(),
            r.learner.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.param_name.clone(),
            fmt_real(r.param_value),
            mse(r.mse_scaled),
            mse(r.mse_raw),
            r.failed_query_count.to_string(),
            r.error.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_results_csv(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_results_to(records, f)
}

pub fn read_results_from<R: Read>(reader: R) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != RESULTS_HEADER {
        return Err(Error::invalid(format!(
            "results header must be {}, got {}",
            RESULTS_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |j: usize| rec.get(j).unwrap_or("").trim();
        let cell_err = |j: usize, message: String| Error::Cell {
            row,
            column: RESULTS_HEADER[j].to_string(),
            message,
        };
        let int = |j: usize| -> Result<u64> {
            field(j)
                .parse::<u64>()
                .map_err(|_| cell_err(j, format!("not a non-negative integer: {:?}", field(j))))
        };
        let real = |j: usize| -> Result<f64> {
            field(j)
                .parse::<f64>()
                .map_err(|_| cell_err(j, format!("not a number: {:?}", field(j))))
        };
        let status = field(11).to_string();
        let error = (status != "ok").then_some(status);
        let (mse_scaled, mse_raw) = if error.is_none() {
            (real(8)?, real(9)?)
        } else {
            (f64::NAN, f64::NAN)
        };
        if error.is_none() && !(mse_scaled >= 0.0 && mse_raw >= 0.0) {
            return Err(cell_err(8, "MSE must be non-negative".into()));
        }
        out.push(ResultRecord {
            dgp: field(0).to_string(),
            learner: field(1).to_string(),
            n: int(2)? as usize,
            d: int(3)? as usize,
            rep: int(4)? as usize,
            seed: int(5)?,
            param_name: field(6).to_string(),
            param_value: real(7)?,
            mse_scaled,
            mse_raw,
            failed_query_count: int(10)? as usize,
            error,
        });
    }
    Ok(out)
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_results_from(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(learner: &str, rep: usize, mse: f64) -> ResultRecord {
        ResultRecord {
            dgp: "piecewise".into(),
            learner: learner.into(),
            n: 8000,
            d: 1,
            rep,
            seed: 42 + rep as u64,
            param_name: "alpha_rate".into(),
            param_value: 0.25,
            mse_scaled: mse * 2000.0,
            mse_raw: mse,
            failed_query_count: 0,
            error: None,
        }
    }

    #[test]
    fn one_record_one_row() {
        let mut buf = Vec::new();
        write_results_to(&[record("dr", 0, 0.1)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("dgp,learner,n,d,rep,seed,param_name,param_value,mse_scaled,mse_raw"));
    }

    #[test]
    fn two_learners_two_seeds() {
        let recs: Vec<_> = ["t", "dr"]
            .iter()
            .flat_map(|l| (0..2).map(move |r| record(l, r, 0.5)))
            .collect();
        let mut buf = Vec::new();
        write_results_to(&recs, &mut buf).unwrap();
        assert_eq!(read_results_from(buf.as_slice()).unwrap().len(), 4);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(write_results_to(&[], Vec::new()).is_err());
    }

    #[test]
    fn failed_record_round_trips() {
        let mut r = record("lpr", 3, 0.0);
        r.error = Some("no evaluation point could be scored".into());
        r.failed_query_count = 17;
        let mut buf = Vec::new();
        write_results_to(std::slice::from_ref(&r), &mut buf).unwrap();
        let back = read_results_from(buf.as_slice()).unwrap().remove(0);
        assert!(back.mse_raw.is_nan());
        assert_eq!(back.error, r.error);
        assert_eq!(back.failed_query_count, 17);
    }

    #[test]
    fn unwritable_path() {
        let err = write_results_csv(&[record("t", 0, 1.0)], "/nonexistent-dir/x.csv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn results_round_trip(seed: u64, rep in 0usize..10_000, n in 1usize..1_000_000, mse in 0f64..1e6, p in -10f64..10.0) {
            let mut r = record("x", rep, mse);
            r.seed = seed;
            r.n = n;
            r.param_value = p;
            let mut buf = Vec::new();
            write_results_to(std::slice::from_ref(&r), &mut buf).unwrap();
            let back = read_results_from(buf.as_slice()).unwrap().remove(0);
            prop_assert_eq!((back.seed, back.rep, back.n), (r.seed, r.rep, r.n));
            prop_assert!((back.mse_raw - r.mse_raw).abs() <= 1e-12 * r.mse_raw.abs().max(1.0));
            prop_assert!((back.param_value - r.param_value).abs() <= 1e-12);
        }
    }
}
