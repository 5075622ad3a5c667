mod common;

use common::*;
use noisyplr::experiments::{gen_synthetic, harness_admm, SyntheticSpec};
use noisyplr::linalg::{estimate_eta, EtaOptions};
use noisyplr::model::{adaptive_weights, counts_nll, fit_pilot_or_ridge};
use noisyplr::tuning::{hbic_score, lambda_grid, lambda_max, lambda_path, path_on_grid, Hbic, PathOptions};
use noisyplr::{AdaptiveWeights, Coefficients, CountVector};
use rand::Rng;

fn synthetic(n: usize, seed: u64) -> (noisyplr::DesignMatrix, CountVector, AdaptiveWeights) {
    let (x, y) = gen_synthetic(&SyntheticSpec::new(n, seed)).unwrap();
    let s = CountVector::from_labels(&y).unwrap();
    let pilot = fit_pilot_or_ridge(&x, &s).unwrap();
    let w = adaptive_weights(&pilot.coefficients, 1.0, 1e8).unwrap();
    (x, s, w)
}

#[test]
fn power_iteration_matches_dense_eigenvalue() {
    let mut r = rng(31);
    for _ in 0..10 {
        let n = r.random_range(5..200);
        let d = r.random_range(1..30);
        let x = gaussian_design(&mut r, n, d);
        let mu = r.random_range(0.01..3.0);
        let opts = EtaOptions {
            safety: 1.0,
            tol: 1e-12,
            max_iter: 100_000,
            ..EtaOptions::default()
        };
        let est = estimate_eta(&x, mu, &opts).unwrap();
        let exact = mu * gram_top_eigenvalue(&x);
        assert!((est.value - exact).abs() <= 1e-6 * exact, "{} vs {exact}", est.value);
        let safe = estimate_eta(&x, mu, &EtaOptions::default()).unwrap();
        assert!(safe.value >= exact * (1.0 - 1e-6));
    }
}

#[test]
fn hbic_at_zero_is_twice_m_log_two() {
    let (x, s, _) = synthetic(300, 1);
    let score = hbic_score(&x, &s, &Coefficients::zeros(x.ncols()), 0.0).unwrap();
    assert!((score - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    let nll = counts_nll(&x, &s, &vec![0.0; x.ncols()]).unwrap();
    assert!((2.0 * nll / 300.0 - score).abs() < 1e-12);
}

#[test]
fn lambda_max_is_the_smallest_all_zero_lambda() {
    let (x, s, w) = synthetic(400, 2);
    let lmax = lambda_max(&x, &s, &w).unwrap();
    let config = harness_admm();
    let at = noisyplr::solve(&x, &s, lmax * 1.001, &w, &config, None).unwrap();
    assert!(at.coefficients.support().is_empty());
    let below = noisyplr::solve(&x, &s, lmax * 0.9, &w, &config, None).unwrap();
    assert!(!below.coefficients.support().is_empty());
}

#[test]
fn support_size_mostly_grows_along_the_path() {
    let mut monotone = 0;
    let mut pairs = 0;
    for seed in 0..5 {
        let (x, s, w) = synthetic(500, 10 + seed);
        let opts = PathOptions {
            grid_size: 30,
            ..PathOptions::default()
        };
        let res = lambda_path(&x, &s, &w, &harness_admm(), &opts, &Hbic).unwrap();
        for p in res.points.windows(2) {
            pairs += 1;
            if p[1].coefficients.support().len() >= p[0].coefficients.support().len() {
                monotone += 1;
            }
        }
    }
    assert!(monotone as f64 >= 0.9 * pairs as f64, "{monotone}/{pairs}");
}

#[test]
fn warm_starts_save_iterations() {
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let (x, s, w) = synthetic(300, 40 + seed);
        let grid = lambda_grid(lambda_max(&x, &s, &w).unwrap(), 15, 1e-3).unwrap();
        let warm = path_on_grid(&x, &s, &w, &harness_admm(), &grid, true, &Hbic).unwrap();
        let cold = path_on_grid(&x, &s, &w, &harness_admm(), &grid, false, &Hbic).unwrap();
        ratios.push(warm.total_iterations() as f64 / cold.total_iterations() as f64);
    }
    ratios.sort_by(f64::total_cmp);
    let median = (ratios[9] + ratios[10]) / 2.0;
    assert!(median <= 0.8, "median warm/cold iteration ratio {median}");
}

#[test]
fn path_is_deterministic() {
    let (x, s, w) = synthetic(300, 77);
    let opts = PathOptions {
        grid_size: 10,
        ..PathOptions::default()
    };
    let a = lambda_path(&x, &s, &w, &harness_admm(), &opts, &Hbic).unwrap();
    let b = lambda_path(&x, &s, &w, &harness_admm(), &opts, &Hbic).unwrap();
    assert_eq!(a.scores(), b.scores());
    assert_eq!(a.chosen, b.chosen);
}
