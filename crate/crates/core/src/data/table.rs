use crate::error::{Error, Result};

/// The sample `Z_i = (X_i, A_i, Y_i)`, covariates stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    x: Vec<f64>,
    d: usize,
    a: Vec<u8>,
    y: Vec<f64>,
}

impl ObservationTable {
    /// Builds a table from a row-major covariate buffer of `a.len()` rows.
    pub fn new(x: Vec<f64>, d: usize, a: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::NoObservations);
        }
        if d == 0 {
            return Err(Error::invalid("at least one covariate is required"));
        }
        if y.len() != n || x.len() != n * d {
            return Err(Error::invalid(format!(
                "row count mismatch: x has {} values for d={d}, a has {n}, y has {}",
                x.len(),
                y.len()
            )));
        }
        for i in 0..n {
            for j in 0..d {
                if !x[i * d + j].is_finite() {
                    return Err(Error::Cell {
                        row: i + 1,
                        column: format!("x{}", j + 1),
                        message: "value is not finite".into(),
                    });
                }
            }
            if a[i] > 1 {
                return Err(Error::Cell {
                    row: i + 1,
                    column: "a".into(),
                    message: format!("treatment must be 0 or 1, got {}", a[i]),
                });
            }
            if !y[i].is_finite() {
                return Err(Error::Cell {
                    row: i + 1,
                    column: "y".into(),
                    message: "value is not finite".into(),
                });
            }
        }
        Ok(Self { x, d, a, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], a: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged covariate rows"));
        }
        Self::new(rows.concat(), d, a, y)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.x.chunks_exact(self.d)
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn treatment(&self) -> &[u8] {
        &self.a
    }

    pub fn outcome(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self, i: usize) -> u8 {
        self.a[i]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    /// Copy of the table with a replaced outcome column.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.d, self.a.clone(), y)
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Self::new(
            x,
            self.d,
            idx.iter().map(|&i| self.a[i]).collect(),
            idx.iter().map(|&i| self.y[i]).collect(),
        )
    }

    /// Per-coordinate `(min, max)` of the covariates.
    pub fn covariate_bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); self.d];
        for r in self.rows() {
            for (bj, &v) in b.iter_mut().zip(r) {
                bj.0 = bj.0.min(v);
                bj.1 = bj.1.max(v);
            }
        }
        b
    }
}
