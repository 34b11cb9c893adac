use proptest::prelude::*;

use cate::harness::{bias_variance, parse_grid, rate_slope};
use cate::pseudo::{conditional_bias_oracle, error_function_rhat, Nuisances};
use cate::smoothers::{
    fit_regression, lasso_path, local_poly_fit, LassoConfig, LocalPolyConfig, Predictor, RegressionMethod, SplineConfig,
};

fn nuisances() -> impl Strategy<Value = Nuisances> {
    (0.02..0.98f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(pi, mu0, mu1)| Nuisances { pi, mu0, mu1 })
}

fn design(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_bias_matches_enumeration(t in nuisances(), e in nuisances()) {
        let gap = conditional_bias_oracle(&t, &e) - error_function_rhat(&t, &e);
        prop_assert!(gap.abs() < 1e-9 * (1.0 + t.mu0.abs() + t.mu1.abs()) / (e.pi * (1.0 - e.pi)));
    }

    #[test]
    fn bias_is_a_product_of_errors(t in nuisances(), e in nuisances()) {
        let right_pi = Nuisances { pi: t.pi, ..e };
        let right_mu = Nuisances { pi: e.pi, ..t };
        prop_assert!(error_function_rhat(&t, &right_pi).abs() < 1e-12);
        prop_assert!(error_function_rhat(&t, &right_mu).abs() < 1e-12);
    }

    #[test]
    fn local_poly_is_linear_in_the_response((x, y) in design(30..80), degree in 0usize..3, h in 0.3..1.0f64) {
        let cfg = LocalPolyConfig::with_bandwidth(degree, h);
        let fit = local_poly_fit(&x, 1, &y, &vec![1.0; y.len()], &cfg).unwrap();
        for q in [-0.5, 0.0, 0.5] {
            let (Ok(v), Some(Ok(w))) = (fit.predict(&[q]), fit.weights_at(&[q])) else { continue };
            let dot: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
            prop_assert!((v - dot).abs() < 1e-8 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn spline_is_linear_in_the_response((x, y) in design(10..80), lambda in 1e-6..1.0f64) {
        let method = RegressionMethod::Spline(SplineConfig { lambda: Some(lambda) });
        let fit = fit_regression(&method, &x, 1, &y).unwrap();
        for q in [-0.7, 0.1, 0.9, 1.5] {
            let v = fit.predict(&[q]).unwrap();
            let w = fit.weights_at(&[q]).unwrap().unwrap();
            let dot: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
            prop_assert!((v - dot).abs() < 1e-7 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn lasso_scales_with_the_response(seed in 0u64..1000, scale in 0.1..10.0f64) {
        let (n, d) = (40, 4);
        let x: Vec<f64> = (0..n * d).map(|k| ((k as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0).collect();
        let y: Vec<f64> = (0..n).map(|i| x[i * d] - 2.0 * x[i * d + 1] + ((i as u64 + seed) % 7) as f64 / 7.0).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let cfg = |l: f64| LassoConfig { lambda_grid: Some(vec![l]), tol: 1e-16, ..LassoConfig::default() };
        let a = &lasso_path(&x, d, &y, &cfg(0.05)).unwrap().fits[0];
        let b = &lasso_path(&x, d, &ys, &cfg(0.05 * scale)).unwrap().fits[0];
        for (ca, cb) in a.coef.iter().zip(&b.coef) {
            prop_assert!((ca * scale - cb).abs() < 1e-6 * scale);
        }
    }

    #[test]
    fn power_laws_have_their_slope(c in 0.01..100.0f64, slope in -2.0..0.0f64) {
        let pairs: Vec<(f64, f64)> = [500.0, 1000.0, 4000.0, 9000.0].iter().map(|&n: &f64| (n, c * n.powf(slope))).collect();
        prop_assert!((rate_slope(&pairs).unwrap() - slope).abs() < 1e-9);
    }

    #[test]
    fn bias_and_variance_add_to_mse(curves in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 6), 2..20),
                                    truth in prop::collection::vec(-5.0..5.0f64, 6)) {
        let (bias2, var) = bias_variance(&curves, &truth).unwrap();
        prop_assert!(bias2 >= 0.0 && var >= 0.0);
        let r = curves.len() as f64;
        let mse: f64 = curves
            .iter()
            .flat_map(|c| c.iter().zip(&truth).map(|(v, t)| (v - t).powi(2)))
            .sum::<f64>() / (r * truth.len() as f64);
        // the variance uses the r - 1 denominator
        prop_assert!((bias2 + var * (r - 1.0) / r - mse).abs() < 1e-9 * (1.0 + mse));
    }

    #[test]
    fn ranges_include_both_ends(start in -100i32..100, steps in 0usize..200) {
        let (a, step) = (start as f64 / 10.0, 0.1);
        let b = a + step * steps as f64;
        let g = parse_grid(&format!("{a}:{b}:{step}")).unwrap();
        prop_assert_eq!(g.len(), steps + 1);
        prop_assert!((g[0] - a).abs() < 1e-12 && (g[steps] - b).abs() < 1e-9);
    }
}
