use proptest::prelude::*;

use evflight::inference::{bayes_update, Posterior};

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

/// Direct-domain oracle: `prior^λ · like`, renormalised.
fn direct(prior: &[f64], like: &[f64], lambda: f64) -> Vec<f64> {
    let p: Vec<f64> = prior.iter().zip(like).map(|(a, b)| a.powf(lambda) * b).collect();
    let s: f64 = p.iter().sum();
    p.into_iter().map(|x| x / s).collect()
}

fn permute(v: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&i| v[i]).collect()
}

proptest! {
    #[test]
    fn sequences_stay_normalised(
        steps in prop::collection::vec((simplex(12), simplex(4), 0.0f64..=1.0), 1..60),
    ) {
        let mut p = Posterior::<f64>::uniform();
        for (lt, lr, lambda) in &steps {
            p = bayes_update(&p, lt, lr, *lambda).unwrap();
            for v in [&p.p_theta, &p.p_r] {
                prop_assert!(v.iter().all(|&x| x >= 0.0));
                prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
        prop_assert_eq!(p.updates, steps.len() as u64);
    }

    #[test]
    fn matches_direct_domain(
        prior_t in simplex(12), prior_r in simplex(4),
        lt in simplex(12), lr in simplex(4),
        lambda in 0.0f64..=1.0,
    ) {
        let prior = Posterior { p_theta: prior_t.clone(), p_r: prior_r.clone(), updates: 0 };
        let p = bayes_update(&prior, &lt, &lr, lambda).unwrap();
        for (got, want) in p.p_theta.iter().zip(direct(&prior_t, &lt, lambda)) {
            prop_assert!((got - want).abs() <= 1e-9);
        }
        for (got, want) in p.p_r.iter().zip(direct(&prior_r, &lr, lambda)) {
            prop_assert!((got - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn lambda_zero_forgets(prior_t in simplex(12), prior_r in simplex(4), lt in simplex(12), lr in simplex(4)) {
        let prior = Posterior { p_theta: prior_t, p_r: prior_r, updates: 9 };
        let p = bayes_update(&prior, &lt, &lr, 0.0).unwrap();
        prop_assert_eq!(p.p_theta, lt);
        prop_assert_eq!(p.p_r, lr);
    }

    #[test]
    fn permutation_equivariance(
        prior_t in simplex(12), prior_r in simplex(4),
        lt in simplex(12), lr in simplex(4),
        lambda in 0.0f64..=1.0,
        perm_t in Just((0..12).collect::<Vec<usize>>()).prop_shuffle(),
        perm_r in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let a = bayes_update(&Posterior { p_theta: prior_t.clone(), p_r: prior_r.clone(), updates: 0 }, &lt, &lr, lambda).unwrap();
        let prior_p = Posterior { p_theta: permute(&prior_t, &perm_t), p_r: permute(&prior_r, &perm_r), updates: 0 };
        let b = bayes_update(&prior_p, &permute(&lt, &perm_t), &permute(&lr, &perm_r), lambda).unwrap();
        for (x, y) in permute(&a.p_theta, &perm_t).iter().zip(&b.p_theta) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        for (x, y) in permute(&a.p_r, &perm_r).iter().zip(&b.p_r) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn repeated_likelihood_is_its_power() {
    let l: Vec<f64> = (1..=12).map(|i| i as f64 / 78.0).collect();
    let lr = vec![0.1, 0.2, 0.3, 0.4];
    let mut p = Posterior::<f64>::uniform();
    for _ in 0..3 {
        p = bayes_update(&p, &l, &lr, 1.0).unwrap();
    }
    let want = direct(&vec![1.0; 12], &l.iter().map(|x| x.powi(3)).collect::<Vec<_>>(), 1.0);
    for (a, b) in p.p_theta.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
}
