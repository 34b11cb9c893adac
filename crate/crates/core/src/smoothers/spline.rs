//! Cubic smoothing spline in Reinsch form.
//!
//! With knots at the distinct abscissae `t_0 < ... < t_{m-1}`, fitted values
//! `g` and interior second derivatives `gamma` satisfy
//!
//! ```text
//! (R + lambda Q' W^-1 Q) gamma = Q' y,     g = y - lambda W^-1 Q gamma
//! ```
//!
//! where `Q` is the `m x (m-2)` second-difference matrix and `R` the
//! `(m-2) x (m-2)` tridiagonal Gram matrix of the natural spline basis.
//! The system matrix is pentadiagonal, so one fit costs `O(m)`. The trace of
//! the hat matrix needs only the central band of its inverse, computed with
//! the Hutchinson-de Hoog recursion, which keeps GCV at `O(m)` per `lambda`.

use super::{Predictor, Tuning};
use crate::error::{Error, Result};

/// Sparse coefficients as `(index, coefficient)` pairs.
type Terms = Vec<(usize, f64)>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplineConfig {
    /// Fixed roughness penalty; `None` selects it by GCV.
    pub lambda: Option<f64>,
}

/// Band storage of a symmetric pentadiagonal matrix.
#[derive(Debug, Clone)]
struct Penta {
    diag: Vec<f64>,
    off1: Vec<f64>,
    off2: Vec<f64>,
}

/// `L D L'` with unit lower-triangular `L` of bandwidth two.
#[derive(Debug, Clone)]
struct Ldl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl Penta {
    fn factor(&self) -> Option<Ldl> {
        let k = self.diag.len();
        let mut d = vec![0.0; k];
        let mut l1 = vec![0.0; k];
        let mut l2 = vec![0.0; k];
        for i in 0..k {
            let mut di = self.diag[i];
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            if !(di > 0.0) {
                return None;
            }
            d[i] = di;
            if i + 1 < k {
                let mut v = self.off1[i];
                if i >= 1 {
                    v -= l2[i - 1] * l1[i - 1] * d[i - 1];
                }
                l1[i] = v / di;
            }
            if i + 2 < k {
                l2[i] = self.off2[i] / di;
            }
        }
        Some(Ldl { d, l1, l2 })
    }
}

impl Ldl {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = b.len();
        let mut z = b.to_vec();
        for i in 0..k {
            if i >= 1 {
                z[i] -= self.l1[i - 1] * z[i - 1];
            }
            if i >= 2 {
                z[i] -= self.l2[i - 2] * z[i - 2];
            }
        }
        for (zi, di) in z.iter_mut().zip(&self.d) {
            *zi /= di;
        }
        for i in (0..k).rev() {
            if i + 1 < k {
                z[i] -= self.l1[i] * z[i + 1];
            }
            if i + 2 < k {
                z[i] -= self.l2[i] * z[i + 2];
            }
        }
        z
    }

    /// Central band of the inverse (diagonal and first two off-diagonals).
    fn inverse_band(&self) -> Penta {
        let k = self.d.len();
        let mut s0 = vec![0.0; k];
        let mut s1 = vec![0.0; k];
        let mut s2 = vec![0.0; k];
        for i in (0..k).rev() {
            let a = if i + 1 < k { self.l1[i] } else { 0.0 };
            let b = if i + 2 < k { self.l2[i] } else { 0.0 };
            let s_next_diag = if i + 1 < k { s0[i + 1] } else { 0.0 };
            let s_next_off = if i + 2 < k { s1[i + 1] } else { 0.0 };
            let s_next2_diag = if i + 2 < k { s0[i + 2] } else { 0.0 };
            if i + 2 < k {
                s2[i] = -a * s_next_off - b * s_next2_diag;
            }
            if i + 1 < k {
                s1[i] = -a * s_next_diag - b * s_next_off;
            }
            s0[i] = 1.0 / self.d[i] - a * s1[i] - b * s2[i];
        }
        Penta {
            diag: s0,
            off1: s1,
            off2: s2,
        }
    }
}

/// Knot geometry and the fixed band matrices of the Reinsch system.
#[derive(Debug, Clone)]
struct Reinsch {
    h: Vec<f64>,
    inv_w: Vec<f64>,
    r: Penta,
    qwq: Penta,
}

impl Reinsch {
    fn new(knots: &[f64], w: &[f64]) -> Self {
        let m = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|p| p[1] - p[0]).collect();
        let inv_w: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
        let k = m - 2;
        let mut r = Penta {
            diag: vec![0.0; k],
            off1: vec![0.0; k],
            off2: vec![0.0; k],
        };
        let mut qwq = r.clone();
        // column j of Q (interior knot j+1) has entries a, b, c at rows j, j+1, j+2
        let col = |j: usize| {
            let a = 1.0 / h[j];
            let c = 1.0 / h[j + 1];
            (a, -a - c, c)
        };
        for j in 0..k {
            r.diag[j] = (h[j] + h[j + 1]) / 3.0;
            if j + 1 < k {
                r.off1[j] = h[j + 1] / 6.0;
            }
            let (a, b, c) = col(j);
            qwq.diag[j] = a * a * inv_w[j] + b * b * inv_w[j + 1] + c * c * inv_w[j + 2];
            if j + 1 < k {
                let (a1, b1, _) = col(j + 1);
                qwq.off1[j] = b * a1 * inv_w[j + 1] + c * b1 * inv_w[j + 2];
            }
            if j + 2 < k {
                let (a2, _, _) = col(j + 2);
                qwq.off2[j] = c * a2 * inv_w[j + 2];
            }
        }
        Self { h, inv_w, r, qwq }
    }

    fn system(&self, lambda: f64) -> Penta {
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + lambda * y).collect();
        Penta {
            diag: mix(&self.r.diag, &self.qwq.diag),
            off1: mix(&self.r.off1, &self.qwq.off1),
            off2: mix(&self.r.off2, &self.qwq.off2),
        }
    }

    /// `Q' v`, length `m - 2`.
    fn qt(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len() - 2)
            .map(|j| (v[j + 2] - v[j + 1]) / self.h[j + 1] - (v[j + 1] - v[j]) / self.h[j])
            .collect()
    }

    /// `Q u` for interior `u`, length `m`.
    fn q(&self, u: &[f64]) -> Vec<f64> {
        let m = u.len() + 2;
        let full = |i: usize| if i == 0 || i == m - 1 { 0.0 } else { u[i - 1] };
        (0..m)
            .map(|i| {
                let mut v = 0.0;
                if i + 1 < m {
                    v += (full(i + 1) - full(i)) / self.h[i];
                }
                if i >= 1 {
                    v -= (full(i) - full(i - 1)) / self.h[i - 1];
                }
                v
            })
            .collect()
    }

    /// Smoother applied to `v`: fitted values and interior second derivatives.
    fn smooth(&self, lambda: f64, ldl: &Ldl, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gamma = ldl.solve(&self.qt(v));
        let qg = self.q(&gamma);
        let g = v
            .iter()
            .zip(&qg)
            .zip(&self.inv_w)
            .map(|((vi, qi), wi)| vi - lambda * wi * qi)
            .collect();
        (g, gamma)
    }

    /// Trace of the hat matrix.
    /// `tr S = 2 + tr(Sigma^-1 R)`, which follows from
    /// `lambda Q' W^-1 Q = Sigma - R` and avoids the cancellation in
    /// `m - lambda tr(Sigma^-1 Q' W^-1 Q)` when `lambda` is large.
    fn df(&self, ldl: &Ldl) -> f64 {
        let s = ldl.inverse_band();
        let r = &self.r;
        let k = s.diag.len();
        let mut tr = 0.0;
        for i in 0..k {
            tr += s.diag[i] * r.diag[i];
            if i + 1 < k {
                tr += 2.0 * s.off1[i] * r.off1[i];
            }
        }
        2.0 + tr
    }

    /// Solves the tridiagonal `R u = b`.
    fn solve_r(&self, b: &[f64]) -> Vec<f64> {
        let k = b.len();
        let mut c = vec![0.0; k];
        let mut z = vec![0.0; k];
        let mut prev_c = 0.0;
        let mut prev_z = 0.0;
        for i in 0..k {
            let lower = if i > 0 { self.r.off1[i - 1] } else { 0.0 };
            let denom = self.r.diag[i] - lower * prev_c;
            c[i] = if i + 1 < k { self.r.off1[i] / denom } else { 0.0 };
            z[i] = (b[i] - lower * prev_z) / denom;
            prev_c = c[i];
            prev_z = z[i];
        }
        for i in (0..k.saturating_sub(1)).rev() {
            z[i] -= c[i] * z[i + 1];
        }
        z
    }
}

struct Trial {
    lambda: f64,
    gcv: f64,
}

#[derive(Debug, Clone)]
pub struct SplineFit {
    knots: Vec<f64>,
    knot_weight: Vec<f64>,
    fitted: Vec<f64>,
    /// Second derivatives at all knots, zero at both ends.
    gamma: Vec<f64>,
    center: f64,
    lambda: f64,
    df: f64,
    gcv: f64,
    reinsch: Reinsch,
    ldl: Ldl,
    row_knot: Vec<usize>,
    row_share: Vec<f64>,
}

impl SplineFit {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Effective degrees of freedom, the trace of the hat matrix.
    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn gcv(&self) -> f64 {
        self.gcv
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn interval(&self, x: f64) -> usize {
        let m = self.knots.len();
        self.knots.partition_point(|&t| t <= x).clamp(1, m - 1) - 1
    }

    /// Coefficients of `f(x)` on the knot values and knot second derivatives.
    fn linear_form(&self, x: f64) -> (Terms, Terms) {
        let m = self.knots.len();
        let t = &self.knots;
        if x < t[0] {
            let e = t[0] - x;
            let h0 = t[1] - t[0];
            return (vec![(0, 1.0 + e / h0), (1, -e / h0)], vec![(1, e * h0 / 6.0)]);
        }
        if x > t[m - 1] {
            let e = x - t[m - 1];
            let hl = t[m - 1] - t[m - 2];
            return (
                vec![(m - 1, 1.0 + e / hl), (m - 2, -e / hl)],
                vec![(m - 2, e * hl / 6.0)],
            );
        }
        let k = self.interval(x);
        let h = t[k + 1] - t[k];
        let a = x - t[k];
        let b = t[k + 1] - x;
        (
            vec![(k, b / h), (k + 1, a / h)],
            vec![(k, -a * b * (1.0 + b / h) / 6.0), (k + 1, -a * b * (1.0 + a / h) / 6.0)],
        )
    }
}

impl Predictor for SplineFit {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != 1 {
            return Err(Error::invalid("smoothing spline is univariate"));
        }
        let (vals, curv) = self.linear_form(x[0]);
        let v: f64 = vals.iter().map(|&(k, c)| c * self.fitted[k]).sum::<f64>()
            + curv.iter().map(|&(k, c)| c * self.gamma[k]).sum::<f64>();
        Ok(v + self.center)
    }

    fn weights_at(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        if x.len() != 1 {
            return Some(Err(Error::invalid("smoothing spline is univariate")));
        }
        let m = self.knots.len();
        let (vals, curv) = self.linear_form(x[0]);
        // gamma = R^-1 Q' g, so f(x) = (alpha + Q R^-1 beta)' g
        let mut beta = vec![0.0; m - 2];
        for (k, c) in curv {
            if k >= 1 && k <= m - 2 {
                beta[k - 1] += c;
            }
        }
        let mut ell = self.reinsch.q(&self.reinsch.solve_r(&beta));
        for (k, c) in vals {
            ell[k] += c;
        }
        // knot weights are A' ell = W S(W^-1 ell)
        let scaled: Vec<f64> = ell.iter().zip(&self.knot_weight).map(|(l, w)| l / w).collect();
        let (smoothed, _) = self.reinsch.smooth(self.lambda, &self.ldl, &scaled);
        let knot_w: Vec<f64> = smoothed.iter().zip(&self.knot_weight).map(|(s, w)| s * w).collect();
        Some(Ok(self
            .row_knot
            .iter()
            .zip(&self.row_share)
            .map(|(&k, &share)| knot_w[k] * share)
            .collect()))
    }

    fn tuning(&self) -> Tuning {
        Tuning::default().with("lambda", self.lambda).with("df", self.df)
    }
}

/// Abscissae within this multiple of the interquartile range are tied.
const TIE_TOLERANCE: f64 = 1e-4;

fn iqr(x: &[f64], order: &[usize]) -> f64 {
    let q = |p: f64| x[order[((order.len() - 1) as f64 * p).round() as usize]];
    let spread = q(0.75) - q(0.25);
    if spread > 0.0 {
        spread
    } else {
        x[order[order.len() - 1]] - x[order[0]]
    }
}

const SPAR_LO: f64 = -1.5;
const SPAR_HI: f64 = 1.5;
const SPAR_GRID: usize = 31;
const GOLDEN_STEPS: usize = 30;
/// GCV only considers fits with at most this share of the knots as degrees of freedom.
const MAX_DF_SHARE: f64 = 0.8;

/// Unit-weight cubic smoothing spline of `y` on `x`.
pub fn smoothing_spline_fit(x: &[f64], y: &[f64], cfg: &SplineConfig) -> Result<SplineFit> {
    smoothing_spline_weighted(x, y, &vec![1.0; x.len()], cfg)
}

/// Weighted cubic smoothing spline. Tied abscissae are merged into one
/// knot carrying the weighted mean response and the summed weight.
pub fn smoothing_spline_weighted(x: &[f64], y: &[f64], w: &[f64], cfg: &SplineConfig) -> Result<SplineFit> {
    let n = x.len();
    if y.len() != n || w.len() != n {
        return Err(Error::invalid("smoothing spline: length mismatch"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid(
            "smoothing spline: non-finite data or non-positive weight",
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));

    // Abscissae closer than the tolerance share a knot at their weighted
    // mean; near-coincident knots would wreck the conditioning otherwise.
    let tol = TIE_TOLERANCE * iqr(x, &order);
    let mut first_in_bin = f64::NEG_INFINITY;
    let mut knots: Vec<f64> = Vec::new();
    let mut knot_weight: Vec<f64> = Vec::new();
    let mut knot_sum: Vec<f64> = Vec::new();
    let mut row_knot = vec![0usize; n];
    for &i in &order {
        if knots.is_empty() || x[i] - first_in_bin > tol {
            first_in_bin = x[i];
            knots.push(0.0);
            knot_weight.push(0.0);
            knot_sum.push(0.0);
        }
        let k = knots.len() - 1;
        knots[k] += w[i] * x[i];
        knot_weight[k] += w[i];
        knot_sum[k] += w[i] * y[i];
        row_knot[i] = k;
    }
    for (t, kw) in knots.iter_mut().zip(&knot_weight) {
        *t /= kw;
    }
    let m = knots.len();
    if m < 4 {
        return Err(Error::invalid(format!(
            "smoothing spline needs at least 4 distinct x values, got {m}"
        )));
    }
    let row_share: Vec<f64> = (0..n).map(|i| w[i] / knot_weight[row_knot[i]]).collect();
    let total_w: f64 = knot_weight.iter().sum();
    let center = knot_sum.iter().sum::<f64>() / total_w;
    let ybar: Vec<f64> = knot_sum
        .iter()
        .zip(&knot_weight)
        .map(|(s, kw)| s / kw - center)
        .collect();

    let reinsch = Reinsch::new(&knots, &knot_weight);
    let evaluate = |lambda: f64| -> Option<(Ldl, f64, f64)> {
        let ldl = reinsch.system(lambda).factor()?;
        let (g, _) = reinsch.smooth(lambda, &ldl, &ybar);
        let rss: f64 = ybar
            .iter()
            .zip(&g)
            .zip(&knot_weight)
            .map(|((a, b), kw)| kw * (a - b).powi(2))
            .sum();
        let df = reinsch.df(&ldl);
        let denom = 1.0 - df / m as f64;
        let gcv = (rss / m as f64) / (denom * denom);
        Some((ldl, df, if gcv.is_finite() { gcv } else { f64::INFINITY }))
    };

    let lambda = match cfg.lambda {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(Error::invalid(format!("spline penalty must be positive, got {l}"))),
        None => {
            // The penalty scales as total weight times range cubed, so this
            // grid is invariant to units and sample size. It spans near
            // interpolation through to the straight line.
            let range = knots[m - 1] - knots[0];
            let ratio = total_w * range.powi(3) / 65536.0;
            let lambda_of = |spar: f64| ratio * 256f64.powf(3.0 * spar - 1.0);
            // Near interpolation both the residual sum of squares and the
            // GCV denominator vanish, and their ratio can dip below the
            // genuine minimum. Such penalties are not candidates.
            let trial = |spar: f64| Trial {
                lambda: lambda_of(spar),
                gcv: evaluate(lambda_of(spar))
                    .filter(|(_, df, _)| *df <= MAX_DF_SHARE * m as f64)
                    .map_or(f64::INFINITY, |(_, _, g)| g),
            };
            let step = (SPAR_HI - SPAR_LO) / (SPAR_GRID - 1) as f64;
            let coarse: Vec<Trial> = (0..SPAR_GRID).map(|k| trial(SPAR_LO + step * k as f64)).collect();
            let best = (0..SPAR_GRID)
                .min_by(|&a, &b| coarse[a].gcv.total_cmp(&coarse[b].gcv))
                .expect("non-empty grid");
            // golden-section refinement inside the neighbouring grid cells
            let spar_best = SPAR_LO + step * best as f64;
            let (mut lo, mut hi) = ((spar_best - step).max(SPAR_LO), (spar_best + step).min(SPAR_HI));
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = hi - phi * (hi - lo);
            let mut d = lo + phi * (hi - lo);
            let mut fc = trial(c);
            let mut fd = trial(d);
            for _ in 0..GOLDEN_STEPS {
                if fc.gcv <= fd.gcv {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - phi * (hi - lo);
                    fc = trial(c);
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + phi * (hi - lo);
                    fd = trial(d);
                }
            }
            [coarse[best].gcv, fc.gcv, fd.gcv]
                .into_iter()
                .zip([coarse[best].lambda, fc.lambda, fd.lambda])
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, l)| l)
                .expect("three candidates")
        }
    };

    let (ldl, df, gcv) = evaluate(lambda)
        .ok_or_else(|| Error::invalid(format!("spline system not positive definite at lambda {lambda}")))?;
    let (fitted, gamma_interior) = reinsch.smooth(lambda, &ldl, &ybar);
    let mut gamma = vec![0.0; m];
    gamma[1..m - 1].copy_from_slice(&gamma_interior);
    Ok(SplineFit {
        knots,
        knot_weight,
        fitted,
        gamma,
        center,
        lambda,
        df,
        gcv,
        reinsch,
        ldl,
        row_knot,
        row_share,
    })
}
