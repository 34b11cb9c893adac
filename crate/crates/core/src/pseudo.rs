//! Pseudo-outcomes and the doubly robust error function.

use crate::error::{Error, Result};

/// Default propensity clipping level.
pub const DEFAULT_CLIP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoKind {
    Dr,
    Ipw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoOutcomeSpec {
    pub kind: PseudoKind,
    pub clip_eps: f64,
}

impl PseudoOutcomeSpec {
    pub fn new(kind: PseudoKind, clip_eps: f64) -> Result<Self> {
        check_eps(clip_eps)?;
        Ok(Self { kind, clip_eps })
    }

    /// Pseudo-outcome for one row; `pihat` is clipped here.
    pub fn evaluate(&self, a: u8, y: f64, pihat: f64, mu0hat: f64, mu1hat: f64) -> f64 {
        let p = clip_propensity(pihat, self.clip_eps);
        match self.kind {
            PseudoKind::Dr => dr_pseudo(a, y, p, mu0hat, mu1hat),
            PseudoKind::Ipw => ipw_pseudo(a, y, p),
        }
    }
}

pub fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "clipping level must lie in (0, 0.5), got {eps}"
        )))
    }
}

pub fn clip_propensity(p: f64, eps: f64) -> f64 {
    p.max(eps).min(1.0 - eps)
}

/// `(a - pi)/(pi(1 - pi)) (y - mu_a) + mu1 - mu0`.
pub fn dr_pseudo(a: u8, y: f64, pihat: f64, mu0hat: f64, mu1hat: f64) -> f64 {
    let af = f64::from(a);
    let mu_a = if a == 1 { mu1hat } else { mu0hat };
    (af - pihat) / (pihat * (1.0 - pihat)) * (y - mu_a) + mu1hat - mu0hat
}

/// `(a - pi) y / (pi(1 - pi))`.
pub fn ipw_pseudo(a: u8, y: f64, pihat: f64) -> f64 {
    (f64::from(a) - pihat) * y / (pihat * (1.0 - pihat))
}

/// Nuisance values at one covariate point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nuisances {
    pub pi: f64,
    pub mu0: f64,
    pub mu1: f64,
}

/// Conditional bias of the DR pseudo-outcome in closed form:
/// `(pi/pihat - 1)(mu1 - mu1hat) - ((1 - pi)/(1 - pihat) - 1)(mu0 - mu0hat)`.
pub fn error_function_rhat(truth: &Nuisances, est: &Nuisances) -> f64 {
    (truth.pi / est.pi - 1.0) * (truth.mu1 - est.mu1)
        - ((1.0 - truth.pi) / (1.0 - est.pi) - 1.0) * (truth.mu0 - est.mu0)
}

/// The same bias obtained by averaging the pseudo-outcome over the treatment
/// arms. The pseudo-outcome is affine in `y`, so plugging in the arm means
/// gives its exact conditional expectation.
pub fn conditional_bias_oracle(truth: &Nuisances, est: &Nuisances) -> f64 {
    let treated = dr_pseudo(1, truth.mu1, est.pi, est.mu0, est.mu1);
    let control = dr_pseudo(0, truth.mu0, est.pi, est.mu0, est.mu1);
    truth.pi * treated + (1.0 - truth.pi) * control - (truth.mu1 - truth.mu0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clipping() {
        assert_eq!(clip_propensity(0.5, 0.01), 0.5);
        assert_eq!(clip_propensity(0.001, 0.01), 0.01);
        assert_eq!(clip_propensity(1.2, 0.01), 0.99);
        assert!(PseudoOutcomeSpec::new(PseudoKind::Dr, 0.5).is_err());
        assert!(PseudoOutcomeSpec::new(PseudoKind::Dr, 0.0).is_err());
    }

    #[test]
    fn hand_values() {
        assert_eq!(dr_pseudo(1, 0.5, 0.3, 0.25, 0.5), 0.25);
        assert!((dr_pseudo(1, 1.0, 0.5, 0.25, 0.5) - 1.25).abs() < 1e-15);
        assert!((dr_pseudo(0, 0.0, 0.5, 0.25, 0.5) - 0.75).abs() < 1e-15);
        assert_eq!(ipw_pseudo(0, 0.0, 0.3), 0.0);
        assert!((ipw_pseudo(1, 2.0, 0.9) - 0.2 / 0.09).abs() < 1e-12);
        let r = error_function_rhat(
            &Nuisances {
                pi: 0.5,
                mu0: 0.1,
                mu1: 0.2,
            },
            &Nuisances {
                pi: 0.4,
                mu0: 0.0,
                mu1: 0.0,
            },
        );
        assert!((r - (0.05 + 0.1 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn spec_clips_before_use() {
        let spec = PseudoOutcomeSpec::new(PseudoKind::Ipw, 0.1).unwrap();
        assert_eq!(spec.evaluate(1, 1.0, 1.0, 0.0, 0.0), ipw_pseudo(1, 1.0, 0.9));
    }

    fn unit() -> impl Strategy<Value = f64> {
        0.02..0.98f64
    }

    fn config() -> impl Strategy<Value = (Nuisances, Nuisances)> {
        (unit(), -3.0..3.0f64, -3.0..3.0f64, unit(), -3.0..3.0f64, -3.0..3.0f64).prop_map(
            |(pi, mu0, mu1, pih, m0h, m1h)| {
                (
                    Nuisances { pi, mu0, mu1 },
                    Nuisances {
                        pi: pih,
                        mu0: m0h,
                        mu1: m1h,
                    },
                )
            },
        )
    }

    proptest! {
        #[test]
        fn unbiased_at_truth((t, _) in config()) {
            let dr = t.pi * dr_pseudo(1, t.mu1, t.pi, t.mu0, t.mu1)
                + (1.0 - t.pi) * dr_pseudo(0, t.mu0, t.pi, t.mu0, t.mu1);
            prop_assert!((dr - (t.mu1 - t.mu0)).abs() < 1e-12);
            let ipw = t.pi * ipw_pseudo(1, t.mu1, t.pi) + (1.0 - t.pi) * ipw_pseudo(0, t.mu0, t.pi);
            prop_assert!((ipw - (t.mu1 - t.mu0)).abs() < 1e-12);
        }

        #[test]
        fn double_robustness((t, e) in config()) {
            let right_pi = Nuisances { pi: t.pi, ..e };
            let right_mu = Nuisances { pi: e.pi, ..t };
            prop_assert!(error_function_rhat(&t, &right_pi).abs() < 1e-12);
            prop_assert!(error_function_rhat(&t, &right_mu).abs() < 1e-12);
        }

        #[test]
        fn enumeration_matches_closed_form((t, e) in config()) {
            let a = error_function_rhat(&t, &e);
            let b = conditional_bias_oracle(&t, &e);
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }

        #[test]
        fn product_bounds((t, e) in config(), eps in 0.01..0.02f64) {
            let r = error_function_rhat(&t, &e);
            let dp = (t.pi - e.pi).abs();
            let (d1, d0) = ((t.mu1 - e.mu1).abs(), (t.mu0 - e.mu0).abs());
            prop_assert!(r.abs() <= 2.0 / eps * dp * (d1 + d0) + 1e-12);
            prop_assert!(r * r <= 2.0 / (eps * eps) * dp * dp * (d1 * d1 + d0 * d0) + 1e-12);
        }
    }
}
