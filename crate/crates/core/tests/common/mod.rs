//! Reference implementations used only by the integration tests. None of
//! them call into the solver code they check.
#![allow(dead_code)]

use nalgebra::DMatrix;
use noisyplr::{CountVector, DesignMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_nalgebra(x: &DesignMatrix) -> DMatrix<f64> {
    let rows = x.dense_rows();
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| rows[i][j])
}

/// Largest eigenvalue of `X'X` from a dense symmetric eigendecomposition.
pub fn gram_top_eigenvalue(x: &DesignMatrix) -> f64 {
    let a = to_nalgebra(x);
    let g = a.transpose() * &a;
    g.symmetric_eigen().eigenvalues.max()
}

fn log1pexp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `sum_i m log(1 + exp(t_i)) - s_i t_i` with `t = X beta`.
pub fn nll(a: &DMatrix<f64>, s: &[f64], m: f64, beta: &[f64]) -> f64 {
    let t = a * nalgebra::DVector::from_column_slice(beta);
    t.iter().zip(s).map(|(&ti, &si)| m * log1pexp(ti) - si * ti).sum()
}

pub fn nll_gradient(a: &DMatrix<f64>, s: &[f64], m: f64, beta: &[f64]) -> Vec<f64> {
    let t = a * nalgebra::DVector::from_column_slice(beta);
    let resid = nalgebra::DVector::from_iterator(
        s.len(),
        t.iter().zip(s).map(|(&ti, &si)| m * logistic(ti) - si),
    );
    (a.transpose() * resid).iter().copied().collect()
}

pub fn objective(a: &DMatrix<f64>, s: &[f64], m: f64, beta: &[f64], lambda: f64, w: &[f64]) -> f64 {
    nll(a, s, m, beta) + lambda * beta.iter().zip(w).map(|(b, wj)| wj * b.abs()).sum::<f64>()
}

fn soft(z: f64, tau: f64) -> f64 {
    z.signum() * (z.abs() - tau).max(0.0)
}

/// Weighted-L1 logistic minimizer by FISTA with a fixed step `4 / (m |X|^2)`
/// and function-value restarts.
pub fn prox_gradient_reference(x: &DesignMatrix, s: &CountVector, lambda: f64, w: &[f64]) -> Vec<f64> {
    let a = to_nalgebra(x);
    let sv = s.as_f64();
    let m = f64::from(s.m());
    let step = 4.0 / (m * gram_top_eigenvalue(x));
    let d = x.ncols();
    let f = |b: &[f64]| objective(&a, &sv, m, b, lambda, w);
    let mut beta = vec![0.0; d];
    let mut y = beta.clone();
    let mut t = 1.0_f64;
    let mut f_old = f(&beta);
    for _ in 0..500_000 {
        let g = nll_gradient(&a, &sv, m, &y);
        let next: Vec<f64> = (0..d)
            .map(|j| soft(y[j] - step * g[j], step * lambda * w[j]))
            .collect();
        let f_new = f(&next);
        let delta = next.iter().zip(&beta).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        if f_new > f_old {
            // restart momentum
            y = beta.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = (0..d)
            .map(|j| next[j] + (t - 1.0) / t_next * (next[j] - beta[j]))
            .collect();
        t = t_next;
        beta = next;
        f_old = f_new;
        if delta < 1e-13 {
            break;
        }
    }
    beta
}

/// Largest KKT violation divided by `max(1, lambda max_j w_j)`. Active
/// coordinates need `g_j + lambda w_j sign(beta_j) = 0`; the rest need
/// `|g_j| <= lambda w_j`.
pub fn kkt_violation(x: &DesignMatrix, s: &CountVector, beta: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let a = to_nalgebra(x);
    let g = nll_gradient(&a, &s.as_f64(), f64::from(s.m()), beta);
    let scale = w.iter().fold(1.0_f64, |acc, &wj| acc.max(lambda * wj));
    let worst = beta
        .iter()
        .zip(&g)
        .zip(w)
        .map(|((&b, &gj), &wj)| {
            if b != 0.0 {
                (gj + lambda * wj * b.signum()).abs()
            } else {
                (gj.abs() - lambda * wj).max(0.0)
            }
        })
        .fold(0.0, f64::max);
    worst / scale
}

/// Gaussian design with i.i.d. standard normal entries.
pub fn gaussian_design<R: Rng>(rng: &mut R, n: usize, d: usize) -> DesignMatrix {
    let values: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    DesignMatrix::from_dense(n, d, values).unwrap()
}

/// Binomial(m, sigmoid(x_i' beta)) counts by summing Bernoulli draws.
pub fn logistic_counts<R: Rng>(rng: &mut R, x: &DesignMatrix, beta: &[f64], m: u32) -> CountVector {
    let rows = x.dense_rows();
    let counts = rows
        .iter()
        .map(|row| {
            let t: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let p = logistic(t);
            (0..m).filter(|_| rng.random::<f64>() < p).count() as u32
        })
        .collect();
    CountVector::new(counts, m).unwrap()
}

/// A sparse coefficient vector with about a third of the entries nonzero.
pub fn sparse_beta<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            if j % 3 == 0 {
                rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 }
            } else {
                0.0
            }
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample mean and the standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mu = mean(v);
    let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0);
    (mu, (var / n).sqrt())
}
