//! Small numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn expit(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with `n - 1` denominator; 0 for fewer than two values.
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Designs with condition number above this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Above this condition number the ridge rescue is applied.
pub const RESCUE_THRESHOLD: f64 = 1e10;
/// Ridge added during rescue, relative to `trace / p`.
pub const RESCUE_RIDGE: f64 = 1e-8;

/// Eigen-decomposition of a symmetric PSD matrix with condition guard.
#[derive(Debug, Clone)]
pub struct GuardedInverse {
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
    shift: f64,
    pub min_eigenvalue: f64,
    pub condition: f64,
    pub rescued: bool,
}

impl GuardedInverse {
    /// Returns `None` when the condition number exceeds [`CONDITION_LIMIT`].
    /// Between [`RESCUE_THRESHOLD`] and the limit a ridge of
    /// `ridge * trace / p` is added.
    pub fn new(q: &DMatrix<f64>, ridge: f64) -> Option<Self> {
        let p = q.nrows();
        let trace = q.trace();
        let eigen = SymmetricEigen::new(q.clone());
        let max = eigen.eigenvalues.max();
        let min = eigen.eigenvalues.min();
        let condition = if min > 0.0 && max > 0.0 {
            max / min
        } else {
            f64::INFINITY
        };
        if !(trace > 0.0) || !(condition <= CONDITION_LIMIT) {
            return None;
        }
        let rescued = condition > RESCUE_THRESHOLD;
        let shift = if rescued { ridge * trace / p as f64 } else { 0.0 };
        Some(Self {
            eigen,
            shift,
            min_eigenvalue: min,
            condition,
            rescued,
        })
    }

    /// Condition number and smallest eigenvalue, even for rejected matrices.
    pub fn diagnose(q: &DMatrix<f64>) -> (f64, f64) {
        let eigen = SymmetricEigen::new(q.clone());
        let max = eigen.eigenvalues.max();
        let min = eigen.eigenvalues.min();
        let condition = if min > 0.0 && max > 0.0 {
            max / min
        } else {
            f64::INFINITY
        };
        (condition, min)
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let v = &self.eigen.eigenvectors;
        let mut coef = v.transpose() * rhs;
        for (c, &l) in coef.iter_mut().zip(self.eigen.eigenvalues.iter()) {
            *c /= l + self.shift;
        }
        v * coef
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_logit_inverse() {
        for &p in &[1e-9, 0.1, 0.5, 0.9, 1.0 - 1e-9] {
            assert!((expit(logit(p)) - p).abs() < 1e-12);
        }
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(-800.0) >= 0.0 && expit(800.0) <= 1.0);
    }

    #[test]
    fn summaries() {
        assert_eq!(median(&[1.0, 2.0, 100.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(variance(&[1.0, 2.0, 3.0]), 1.0);
    }

    #[test]
    fn guarded_inverse_rejects_singular() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(GuardedInverse::new(&q, RESCUE_RIDGE).is_none());
        assert!(GuardedInverse::new(&DMatrix::zeros(2, 2), RESCUE_RIDGE).is_none());
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = GuardedInverse::new(&q, RESCUE_RIDGE).unwrap();
        assert!(!g.rescued);
        let x = g.solve(&DVector::from_vec(vec![1.0, 2.0]));
        let back = &q * &x;
        assert!((back[0] - 1.0).abs() < 1e-12 && (back[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rescue_band() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-11]));
        let g = GuardedInverse::new(&q, RESCUE_RIDGE).unwrap();
        assert!(g.rescued);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        assert!(GuardedInverse::new(&q, RESCUE_RIDGE).is_none());
    }
}
