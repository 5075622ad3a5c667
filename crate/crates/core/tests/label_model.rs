mod common;

use common::*;
use noisyplr::labels::{count_pmf, count_quantile, draw_counts, generate_dataset_counts, moments};
use noisyplr::{DesignMatrix, NoiseModel, PosteriorPair};
use proptest::prelude::*;
use rand::Rng;

/// Beta-binomial pmf from log-gamma functions, independent of the ratio
/// recursion used by the library.
fn beta_binomial_pmf(m: u32, a: f64, b: f64) -> Vec<f64> {
    use statrs::function::gamma::ln_gamma;
    let ln_beta = |x: f64, y: f64| ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y);
    let mf = f64::from(m);
    (0..=m)
        .map(|k| {
            let k = f64::from(k);
            let ln_choose = ln_gamma(mf + 1.0) - ln_gamma(k + 1.0) - ln_gamma(mf - k + 1.0);
            (ln_choose + ln_beta(k + a, mf - k + b) - ln_beta(a, b)).exp()
        })
        .collect()
}

#[test]
fn pmf_matches_log_gamma_formula() {
    for &(m, alpha0, p1) in &[(5u32, 1.0, 0.3), (10, 10.0, 0.8), (50, 0.5, 0.5), (3, 1000.0, 0.1)] {
        let p = PosteriorPair::new(p1).unwrap();
        let pmf = count_pmf(p, &NoiseModel::DirichletMultinomial { m, alpha0 });
        let reference = beta_binomial_pmf(m, alpha0 * p1, alpha0 * (1.0 - p1));
        assert!(max_abs_diff(&pmf, &reference) < 1e-10, "{m} {alpha0} {p1}");
    }
}

#[test]
fn pmf_moments_match_closed_form() {
    for &(m, alpha0, p1) in &[(5u32, 1.0, 0.3), (20, 3.0, 0.65), (7, 0.1, 0.9)] {
        let pmf = count_pmf(PosteriorPair::new(p1).unwrap(), &NoiseModel::DirichletMultinomial { m, alpha0 });
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let var: f64 = pmf.iter().enumerate().map(|(k, p)| (k as f64 - mean).powi(2) * p).sum();
        let (em, ev) = moments(m, alpha0, p1);
        assert!((mean - em).abs() < 1e-10);
        assert!((var - ev).abs() < 1e-9);
    }
}

#[test]
fn quantile_draws_follow_the_pmf() {
    let p = PosteriorPair::new(0.35).unwrap();
    let model = NoiseModel::DirichletMultinomial { m: 6, alpha0: 2.0 };
    let pmf = count_pmf(p, &model);
    let mut r = rng(5);
    let reps = 40_000;
    let mut hist = vec![0usize; 7];
    for _ in 0..reps {
        hist[count_quantile(p, &model, r.random::<f64>()) as usize] += 1;
    }
    for (k, &c) in hist.iter().enumerate() {
        let f = c as f64 / reps as f64;
        let se = (pmf[k] * (1.0 - pmf[k]) / reps as f64).sqrt();
        assert!((f - pmf[k]).abs() < 4.0 * se + 1e-12, "k={k}");
    }
}

#[test]
fn truth_model_needs_a_label() {
    let p = PosteriorPair::new(0.5).unwrap();
    assert!(draw_counts(p, &NoiseModel::Truth, None, &mut rng(1)).is_err());
    assert_eq!(draw_counts(p, &NoiseModel::Truth, Some(1), &mut rng(1)).unwrap(), 1);
}

#[test]
fn dataset_counts_are_reproducible() {
    let mut r = rng(9);
    let x = gaussian_design(&mut r, 50, 3);
    let model = NoiseModel::DirichletMultinomial { m: 5, alpha0: 1.0 };
    let a = generate_dataset_counts(&x, &[1.0, -1.0, 0.0], &model, 4, None).unwrap();
    let b = generate_dataset_counts(&x, &[1.0, -1.0, 0.0], &model, 4, None).unwrap();
    assert_eq!(a, b);
    assert!(a.counts().iter().all(|&c| c <= 5));
    let x0 = DesignMatrix::zeros(0, 3);
    assert!(generate_dataset_counts(&x0, &[0.0; 3], &model, 4, None).map(|c| c.is_empty()).unwrap_or(true));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pmf_is_a_distribution(m in 1u32..60, alpha0 in 1e-3f64..1e4, p1 in 0.0f64..=1.0) {
        let pmf = count_pmf(PosteriorPair::new(p1).unwrap(), &NoiseModel::DirichletMultinomial { m, alpha0 });
        prop_assert_eq!(pmf.len(), m as usize + 1);
        prop_assert!(pmf.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn draws_stay_in_range(m in 1u32..40, alpha0 in 1e-4f64..1e4, p1 in 0.0f64..=1.0, seed in 0u64..1000) {
        let p = PosteriorPair::new(p1).unwrap();
        let c = draw_counts(p, &NoiseModel::DirichletMultinomial { m, alpha0 }, None, &mut rng(seed)).unwrap();
        prop_assert!(c <= m);
    }
}
