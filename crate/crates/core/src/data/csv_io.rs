use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::ObservationTable;
use crate::error::{Error, Result};

/// Formats a real with 17 significant digits, enough for a lossless
/// double round trip.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn check_header(header: &csv::StringRecord) -> Result<usize> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let bad = |msg: String| Error::invalid(format!("header: {msg}"));
    if cols.len() < 3 {
        return Err(bad(format!(
            "expected header x1,...,xd,a,y, got {} columns",
            cols.len()
        )));
    }
    let d = cols.len() - 2;
    for (j, c) in cols[..d].iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(bad(format!("column {} should be x{}, got {c:?}", j + 1, j + 1)));
        }
    }
    if cols[d] != "a" || cols[d + 1] != "y" {
        return Err(bad(format!(
            "last two columns must be a,y, got {},{}",
            cols[d],
            cols[d + 1]
        )));
    }
    Ok(d)
}

fn parse_cell(raw: Option<&str>, row: usize, column: &str) -> Result<f64> {
    let cell = |message: String| Error::Cell {
        row,
        column: column.to_string(),
        message,
    };
    let s = raw.map(str::trim).unwrap_or("");
    if s.is_empty() {
        return Err(cell("missing value".into()));
    }
    let v: f64 = s.parse().map_err(|_| cell(format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(cell(format!("non-finite value {s:?}")));
    }
    Ok(v)
}

/// Parses an observation table from CSV with header `x1,...,xd,a,y`.
pub fn read_csv_from<R: Read>(reader: R) -> Result<ObservationTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let d = check_header(rdr.headers()?)?;
    let names: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();

    let mut x = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != d + 2 {
            return Err(Error::Cell {
                row,
                column: "*".into(),
                message: format!("expected {} fields, got {}", d + 2, rec.len()),
            });
        }
        for (j, name) in names.iter().enumerate() {
            x.push(parse_cell(rec.get(j), row, name)?);
        }
        let av = parse_cell(rec.get(d), row, "a")?;
        if av != 0.0 && av != 1.0 {
            return Err(Error::Cell {
                row,
                column: "a".into(),
                message: format!("treatment must be 0 or 1, got {av}"),
            });
        }
        a.push(av as u8);
        y.push(parse_cell(rec.get(d + 1), row, "y")?);
    }
    if a.is_empty() {
        return Err(Error::NoObservations);
    }
    ObservationTable::new(x, d, a, y)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<ObservationTable> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(f)
}

pub fn write_csv_to<W: Write>(table: &ObservationTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=table.d()).map(|j| format!("x{j}")).collect();
    header.push("a".into());
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..table.n() {
        let mut rec: Vec<String> = table.row(i).iter().map(|&v| fmt_real(v)).collect();
        rec.push(table.a(i).to_string());
        rec.push(fmt_real(table.y(i)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_csv(table: &ObservationTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(table, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_row() {
        let t = read_csv_from("x1,a,y\n0.5,1,2.0\n".as_bytes()).unwrap();
        assert_eq!((t.n(), t.d()), (1, 1));
        assert_eq!(t.row(0), &[0.5]);
        assert_eq!(t.a(0), 1);
        assert_eq!(t.y(0), 2.0);
    }

    #[test]
    fn non_binary_treatment_names_row_and_column() {
        let err = read_csv_from("x1,a,y\n0.5,2,2.0\n".as_bytes()).unwrap_err();
        match err {
            Error::Cell { row, column, .. } => assert_eq!((row, column.as_str()), (1, "a")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_body() {
        let err = read_csv_from("x1,x2,a,y\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "no observations");
    }

    #[test]
    fn missing_and_nan_cells() {
        let err = read_csv_from("x1,x2,a,y\n1,2,0,3\n1,,0,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("row 2, column x2"), "{err}");
        let err = read_csv_from("x1,a,y\n1,0,NaN\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("row 1, column y"), "{err}");
    }

    #[test]
    fn bad_header() {
        assert!(read_csv_from("x1,y,a\n1,0,0\n".as_bytes()).is_err());
        assert!(read_csv_from("x2,a,y\n1,0,0\n".as_bytes()).is_err());
        assert!(read_csv_from("a,y\n0,0\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn table_round_trip(rows in proptest::collection::vec((-1e6f64..1e6, -1e3f64..1e3, any::<bool>(), -1e9f64..1e9), 1..40)) {
            let x: Vec<f64> = rows.iter().flat_map(|r| [r.0, r.1]).collect();
            let a: Vec<u8> = rows.iter().map(|r| r.2 as u8).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.3).collect();
            let t = ObservationTable::new(x, 2, a, y).unwrap();
            let mut buf = Vec::new();
            write_csv_to(&t, &mut buf).unwrap();
            let back = read_csv_from(buf.as_slice()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
