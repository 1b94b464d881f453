use proptest::prelude::*;

use evflight::eval::{median, radius_error, theta_error, ttc_error, EvalRow, MetricSet};

fn row() -> impl Strategy<Value = EvalRow> {
    (0.001f64..0.3, 0.0f64..0.4, 0usize..12, 0usize..12, 0usize..4, 0usize..4).prop_map(|(tau, tau_hat, theta, theta_hat, r, r_hat)| {
        EvalRow { tau, tau_hat, theta, theta_hat, r, r_hat }
    })
}

proptest! {
    #[test]
    fn theta_error_symmetric_and_bounded(a in 0usize..12, b in 0usize..12) {
        let e = theta_error(a, b).unwrap();
        prop_assert_eq!(e, theta_error(b, a).unwrap());
        prop_assert!(e <= 180.0);
        prop_assert_eq!(e == 0.0, a == b);
    }

    #[test]
    fn radius_error_bounded_and_monotone(r in 0usize..4, a in 0usize..4, b in 0usize..4) {
        let (ea, eb) = (radius_error(r, a).unwrap(), radius_error(r, b).unwrap());
        prop_assert!(ea <= 121.0);
        if r.abs_diff(a) < r.abs_diff(b) {
            prop_assert!(ea < eb);
        }
        prop_assert_eq!(ea == 0.0, r == a);
    }

    #[test]
    fn metrics_vanish_exactly_for_exact_predictions(rows in prop::collection::vec(row(), 1..50)) {
        let exact: Vec<EvalRow> = rows
            .iter()
            .map(|r| EvalRow { tau_hat: r.tau, theta_hat: r.theta, r_hat: r.r, ..*r })
            .collect();
        let m = MetricSet::compute(&exact).unwrap();
        prop_assert_eq!((m.median_ttc_error, m.mean_theta_deg, m.mean_radius_mm), (0.0, 0.0, 0.0));
        let m = MetricSet::compute(&rows).unwrap();
        let any_wrong = rows.iter().any(|r| r.tau_hat != r.tau);
        prop_assert_eq!(m.mean_theta_deg == 0.0, rows.iter().all(|r| r.theta == r.theta_hat));
        prop_assert_eq!(m.mean_radius_mm == 0.0, rows.iter().all(|r| r.r == r.r_hat));
        if !any_wrong {
            prop_assert_eq!(m.median_ttc_error, 0.0);
        }
    }

    #[test]
    fn median_ignores_how_wrong_an_outlier_is(
        rows in prop::collection::vec(row(), 3..40),
        pick in any::<prop::sample::Index>(),
        blowup in 1.0f64..1e6,
    ) {
        let errs: Vec<f64> = rows.iter().map(|r| ttc_error(r.tau, r.tau_hat).unwrap()).collect();
        let mut sorted = errs.clone();
        sorted.sort_by(f64::total_cmp);
        let i = pick.index(rows.len());
        // Only a sample strictly above every value the median is built from may be made worse.
        prop_assume!(errs[i] > sorted[sorted.len() / 2]);
        prop_assert!(median(&errs).unwrap() <= sorted[sorted.len() / 2]);
        let mut worse = rows.clone();
        worse[i].tau_hat = worse[i].tau * (1.0 + errs[i] * blowup);
        let a = MetricSet::compute(&rows).unwrap().median_ttc_error;
        let b = MetricSet::compute(&worse).unwrap().median_ttc_error;
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }
}
