//! Simulation harnesses: synthetic designs, support metrics, conditional
//! error rates, relative-efficiency estimates, and the tables built on them.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::labels::{count_quantile, draw_counts, row_rng, CountVector, NoiseModel, PosteriorPair};
use crate::linalg::DesignMatrix;
use crate::model::{
    adaptive_weights, fit_pilot_or_ridge, sigmoid, Coefficients,
};
use crate::solver::{
    make_partition, serial_eta, solve, solve_parallel, AdmmConfig, EtaMode, PartitionSpec,
};
use crate::tuning::{fit_alasso, AlassoOptions, Hbic, RefitHbic, Selector};

/// Sparse coefficient vector used by the default synthetic design.
pub fn default_beta_star() -> Vec<f64> {
    vec![3.0, 0.0, 0.0, 1.5, 0.0, 0.0, 7.0, 0.0, 0.0]
}

/// Solver settings used by the harnesses. Here `mu` is per expert: a fit
/// to counts out of `m` runs with `m * mu`, which keeps the augmentation on
/// the scale of the likelihood curvature.
pub fn harness_admm() -> AdmmConfig {
    AdmmConfig {
        mu: 0.01,
        ..AdmmConfig::default()
    }
}

/// `admm` with `mu` multiplied by the number of experts.
pub fn per_expert(admm: &AdmmConfig, m: u32) -> AdmmConfig {
    AdmmConfig {
        mu: admm.mu * f64::from(m),
        ..admm.clone()
    }
}

/// Column correlation structure of the Gaussian design.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    /// Every pair of columns has correlation `rho`.
    #[default]
    Equicorrelated,
    /// `corr(x_j, x_k) = rho^|j - k|`.
    Ar1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub beta_star: Vec<f64>,
    pub rho: f64,
    pub correlation: Correlation,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            beta_star: default_beta_star(),
            rho: 0.75,
            correlation: Correlation::Equicorrelated,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.beta_star.is_empty() || self.beta_star.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("beta_star must be finite and nonempty".into()));
        }
        Ok(())
    }
}

/// Standard-normal columns with unit variance and the requested correlation.
pub fn gen_design<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    rho: f64,
    correlation: Correlation,
    rng: &mut R,
) -> DesignMatrix {
    let mut values = Vec::with_capacity(n * d);
    match correlation {
        Correlation::Equicorrelated => {
            let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
            for _ in 0..n {
                let common: f64 = rng.sample(StandardNormal);
                for _ in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    values.push(a * common + b * z);
                }
            }
        }
        Correlation::Ar1 => {
            let b = (1.0 - rho * rho).sqrt();
            for _ in 0..n {
                let mut prev: f64 = rng.sample(StandardNormal);
                values.push(prev);
                for _ in 1..d {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = rho * prev + b * z;
                    values.push(prev);
                }
            }
        }
    }
    DesignMatrix::from_dense(n, d, values).expect("finite normal draws")
}

/// Gaussian design and labels `y_i ~ Bernoulli(sigmoid(x_i' beta_star))`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(DesignMatrix, Vec<u8>)> {
    spec.validate()?;
    let mut rng = row_rng(spec.seed, 0);
    let x = gen_design(spec.n, spec.beta_star.len(), spec.rho, spec.correlation, &mut rng);
    let y = (0..spec.n)
        .map(|i| {
            let p = sigmoid(x.row(i).dot(&spec.beta_star));
            u8::from(rng.random::<f64>() < p)
        })
        .collect();
    Ok((x, y))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ae: f64,
}

/// False positives, false negatives and the L1 error against `beta_star`.
pub fn support_metrics(beta: &Coefficients, beta_star: &[f64]) -> Result<SupportMetrics> {
    check_len("beta_star length", beta.len(), beta_star.len())?;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut ae = 0.0;
    for (&b, &t) in beta.values().iter().zip(beta_star) {
        if t == 0.0 && b != 0.0 {
            fp += 1;
        }
        if t != 0.0 && b == 0.0 {
            fn_ += 1;
        }
        ae += (b - t).abs();
    }
    Ok(SupportMetrics { fp, fn_, ae })
}

/// How a coefficient vector turns into predictions for the error rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorRule {
    /// Predict `Bernoulli(sigmoid(x'beta))`.
    Randomized,
    /// Predict `1{x'beta > 0}`.
    #[default]
    Threshold,
}

fn eval_probs(x_eval: &DesignMatrix, beta: &[f64]) -> Result<Vec<f64>> {
    Ok(x_eval.matvec(beta)?.into_iter().map(sigmoid).collect())
}

fn check_eval(beta: &Coefficients, beta_star: &[f64], x_eval: &DesignMatrix) -> Result<()> {
    check_len("beta_star length", beta.len(), beta_star.len())?;
    if x_eval.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Expected disagreement between `Bernoulli(p_hat)` predictions and
/// `Bernoulli(p_star)` labels, averaged over the rows of `x_eval`.
pub fn conditional_error(beta: &Coefficients, beta_star: &[f64], x_eval: &DesignMatrix) -> Result<f64> {
    check_eval(beta, beta_star, x_eval)?;
    let p_hat = eval_probs(x_eval, beta.values())?;
    let p_star = eval_probs(x_eval, beta_star)?;
    let total: f64 = p_hat
        .iter()
        .zip(&p_star)
        .map(|(h, s)| h * (1.0 - s) + (1.0 - h) * s)
        .sum();
    Ok(total / x_eval.nrows() as f64)
}

/// Probability that `1{x'beta > 0}` disagrees with a `Bernoulli(p_star)`
/// label, averaged over the rows of `x_eval`.
pub fn threshold_error(beta: &Coefficients, beta_star: &[f64], x_eval: &DesignMatrix) -> Result<f64> {
    check_eval(beta, beta_star, x_eval)?;
    let scores = x_eval.matvec(beta.values())?;
    let p_star = eval_probs(x_eval, beta_star)?;
    let total: f64 = scores
        .iter()
        .zip(&p_star)
        .map(|(t, s)| if *t > 0.0 { 1.0 - s } else { *s })
        .sum();
    Ok(total / x_eval.nrows() as f64)
}

pub fn error_rate(rule: ErrorRule, beta: &Coefficients, beta_star: &[f64], x_eval: &DesignMatrix) -> Result<f64> {
    match rule {
        ErrorRule::Randomized => conditional_error(beta, beta_star, x_eval),
        ErrorRule::Threshold => threshold_error(beta, beta_star, x_eval),
    }
}

/// `m (1 + alpha0) / (m + alpha0)`.
pub fn theoretical_are(m: u32, alpha0: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha0 must be positive, got {alpha0}")));
    }
    let m = f64::from(m);
    Ok(m * (1.0 + alpha0) / (m + alpha0))
}

/// Joint law of the truth label and the expert counts within a row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Truth label and counts drawn independently.
    Independent,
    /// Both driven by one uniform through their inverse CDFs. Each marginal
    /// law is unchanged; the paired excess errors become positively
    /// correlated, which narrows the ratio estimate.
    #[default]
    Comonotone,
}

/// Estimator compared between truth labels and expert counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AreFit {
    /// Adaptive LASSO at a fixed `lambda`; `None` means `n^(1/4)`.
    Alasso { lambda: Option<f64> },
    /// Adaptive LASSO with `lambda` chosen by HBIC.
    AlassoHbic,
    /// Unpenalized fit on all columns.
    Mle,
    /// Unpenalized fit restricted to the true support.
    Oracle,
}

impl Default for AreFit {
    fn default() -> Self {
        AreFit::Alasso { lambda: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreConfig {
    pub n: usize,
    pub m: u32,
    pub alpha0: f64,
    pub reps: usize,
    pub beta_star: Vec<f64>,
    pub rho: f64,
    pub correlation: Correlation,
    /// Rows in the shared evaluation design.
    pub n_eval: usize,
    pub seed: u64,
    pub rule: ErrorRule,
    pub coupling: Coupling,
    pub fit: AreFit,
    pub admm: AdmmConfig,
}

impl AreConfig {
    pub fn new(n: usize, m: u32, alpha0: f64, reps: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            alpha0,
            reps,
            beta_star: default_beta_star(),
            rho: 0.75,
            correlation: Correlation::Equicorrelated,
            n_eval: 100_000,
            seed,
            rule: ErrorRule::default(),
            coupling: Coupling::default(),
            fit: AreFit::default(),
            admm: harness_admm(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreEstimate {
    pub simulated: f64,
    pub theoretical: f64,
    pub se: f64,
    pub n: usize,
    pub m: u32,
    pub alpha0: f64,
    pub reps: usize,
    pub n_eval: usize,
    pub mean_excess_truth: f64,
    pub mean_excess_noisy: f64,
    /// Set when the noisy fit's mean excess error is not positive, in which
    /// case `simulated` is not meaningful.
    pub flagged: bool,
}

/// Ratio of means with its delta-method standard error.
pub fn ratio_estimate(num: &[f64], den: &[f64]) -> (f64, f64) {
    let k = num.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / k;
    let (mn, md) = (mean(num), mean(den));
    let var = |v: &[f64], mu: f64| v.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / (k - 1.0);
    let cov = num
        .iter()
        .zip(den)
        .map(|(a, b)| (a - mn) * (b - md))
        .sum::<f64>()
        / (k - 1.0);
    let ratio = mn / md;
    let rel = var(num, mn) / (k * mn * mn) + var(den, md) / (k * md * md) - 2.0 * cov / (k * mn * md);
    (ratio, ratio.abs() * rel.max(0.0).sqrt())
}

/// Per-rep seed derived from the experiment seed.
pub fn rep_seed(seed: u64, stream: u64, rep: usize) -> u64 {
    let mut rng = row_rng(seed, stream);
    rng.set_word_pos(2 * rep as u128);
    rng.next_u64()
}

const STREAM_EVAL: u64 = 1;
const STREAM_REPS: u64 = 2;

/// Truth labels and expert counts for the posteriors `p`.
fn draw_label_pair<R: Rng + ?Sized>(
    p: &[f64],
    model: &NoiseModel,
    coupling: Coupling,
    rng: &mut R,
) -> Result<(CountVector, CountVector)> {
    let mut y = Vec::with_capacity(p.len());
    let mut s = Vec::with_capacity(p.len());
    for &pi in p {
        let pair = PosteriorPair::new(pi)?;
        match coupling {
            Coupling::Comonotone => {
                let u: f64 = rng.random();
                y.push(u8::from(u > 1.0 - pi));
                s.push(count_quantile(pair, model, u));
            }
            Coupling::Independent => {
                y.push(u8::from(rng.random::<f64>() < pi));
                s.push(draw_counts(pair, model, None, rng)?);
            }
        }
    }
    Ok((CountVector::from_labels(&y)?, CountVector::new(s, model.experts())?))
}

/// Fit the chosen estimator to counts `s` on design `x`. `admm.mu` is per
/// expert, see [`harness_admm`].
pub fn fit_for_are(
    x: &DesignMatrix,
    s: &CountVector,
    beta_star: &[f64],
    fit: AreFit,
    admm: &AdmmConfig,
) -> Result<Coefficients> {
    let admm = &per_expert(admm, s.m());
    match fit {
        AreFit::Mle => Ok(fit_pilot_or_ridge(x, s)?.coefficients),
        AreFit::Oracle => {
            let support: Vec<usize> = (0..beta_star.len()).filter(|&j| beta_star[j] != 0.0).collect();
            let sub = x.select_cols(&support)?;
            let part = fit_pilot_or_ridge(&sub, s)?.coefficients;
            let mut full = vec![0.0; x.ncols()];
            for (k, &j) in support.iter().enumerate() {
                full[j] = part.values()[k];
            }
            Coefficients::new(full)
        }
        AreFit::Alasso { lambda } => {
            let lambda = lambda.unwrap_or_else(|| (x.nrows() as f64).powf(0.25));
            let pilot = fit_pilot_or_ridge(x, s)?;
            let w = adaptive_weights(&pilot.coefficients, 1.0, 1e8)?;
            Ok(solve(x, s, lambda, &w, admm, None)?.coefficients)
        }
        AreFit::AlassoHbic => {
            let res = fit_alasso(x, s, admm, &AlassoOptions::default(), &Hbic)?;
            Ok(res.coefficients().clone())
        }
    }
}

/// Paired excess errors `(truth fit, noisy fit)` for one replicate.
#[allow(clippy::too_many_arguments)]
fn are_replicate(
    x: &DesignMatrix,
    beta_star: &[f64],
    model: &NoiseModel,
    coupling: Coupling,
    fit: AreFit,
    admm: &AdmmConfig,
    x_eval: &DesignMatrix,
    rule: ErrorRule,
    base_err: f64,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let p: Vec<f64> = x.matvec(beta_star)?.into_iter().map(sigmoid).collect();
    let (y, s) = draw_label_pair(&p, model, coupling, rng)?;
    let beta_truth = fit_for_are(x, &y, beta_star, fit, admm)?;
    let beta_noisy = fit_for_are(x, &s, beta_star, fit, admm)?;
    Ok((
        error_rate(rule, &beta_truth, beta_star, x_eval)? - base_err,
        error_rate(rule, &beta_noisy, beta_star, x_eval)? - base_err,
    ))
}

fn finish_are(
    pairs: Vec<(f64, f64)>,
    n: usize,
    m: u32,
    alpha0: f64,
    n_eval: usize,
) -> Result<AreEstimate> {
    let (num, den): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (ratio, se) = ratio_estimate(&num, &den);
    let k = num.len() as f64;
    let mean_num = num.iter().sum::<f64>() / k;
    let mean_den = den.iter().sum::<f64>() / k;
    Ok(AreEstimate {
        simulated: ratio,
        theoretical: theoretical_are(m, alpha0)?,
        se,
        n,
        m,
        alpha0,
        reps: num.len(),
        n_eval,
        mean_excess_truth: mean_num,
        mean_excess_noisy: mean_den,
        flagged: !(mean_den > 0.0),
    })
}

/// Monte Carlo estimate of the relative efficiency of expert counts over
/// truth labels on a synthetic Gaussian design.
pub fn simulate_are(cfg: &AreConfig) -> Result<AreEstimate> {
    if cfg.reps < 2 {
        return Err(Error::InvalidParameter("need at least two replicates".into()));
    }
    let model = NoiseModel::DirichletMultinomial {
        m: cfg.m,
        alpha0: cfg.alpha0,
    };
    model.validate()?;
    let d = cfg.beta_star.len();
    let mut eval_rng = row_rng(cfg.seed, STREAM_EVAL);
    let x_eval = gen_design(cfg.n_eval, d, cfg.rho, cfg.correlation, &mut eval_rng);
    let beta_star_c = Coefficients::new(cfg.beta_star.clone())?;
    let base_err = error_rate(cfg.rule, &beta_star_c, &cfg.beta_star, &x_eval)?;

    let pairs = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = row_rng(rep_seed(cfg.seed, STREAM_REPS, rep), 0);
            let x = gen_design(cfg.n, d, cfg.rho, cfg.correlation, &mut rng);
            are_replicate(
                &x,
                &cfg.beta_star,
                &model,
                cfg.coupling,
                cfg.fit,
                &cfg.admm,
                &x_eval,
                cfg.rule,
                base_err,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    finish_are(pairs, cfg.n, cfg.m, cfg.alpha0, cfg.n_eval)
}

/// One [`simulate_are`] per `(m, alpha0, n)` cell, sharing everything else
/// with `base`.
pub fn run_table_are(cells: &[(u32, f64, usize)], base: &AreConfig) -> Result<Vec<AreEstimate>> {
    if cells.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    cells
        .iter()
        .map(|&(m, alpha0, n)| {
            simulate_are(&AreConfig {
                m,
                alpha0,
                n,
                ..base.clone()
            })
        })
        .collect()
}

/// CSV with columns `m,alpha0,n,theoretical,simulated,se,reps,n_eval,flagged`.
pub fn write_are_csv<W: Write>(rows: &[AreEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "m",
        "alpha0",
        "n",
        "theoretical",
        "simulated",
        "se",
        "reps",
        "n_eval",
        "flagged",
    ])?;
    for r in rows {
        w.write_record(&[
            r.m.to_string(),
            r.alpha0.to_string(),
            r.n.to_string(),
            format!("{:.4}", r.theoretical),
            format!("{:.4}", r.simulated),
            format!("{:.4}", r.se),
            r.reps.to_string(),
            r.n_eval.to_string(),
            r.flagged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Relative efficiency on a fixed real design: labels are simulated from
/// `beta_star` on `x_train` and errors are measured on `x_test`.
#[allow(clippy::too_many_arguments)]
pub fn real_data_are(
    x_train: &DesignMatrix,
    x_test: &DesignMatrix,
    beta_star: &[f64],
    m: u32,
    alpha0: f64,
    reps: usize,
    seed: u64,
    fit: AreFit,
    coupling: Coupling,
    rule: ErrorRule,
    admm: &AdmmConfig,
) -> Result<AreEstimate> {
    if reps < 2 {
        return Err(Error::InvalidParameter("need at least two replicates".into()));
    }
    let model = NoiseModel::DirichletMultinomial { m, alpha0 };
    model.validate()?;
    let beta_star_c = Coefficients::new(beta_star.to_vec())?;
    let base_err = error_rate(rule, &beta_star_c, beta_star, x_test)?;
    let pairs = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = row_rng(rep_seed(seed, STREAM_REPS, rep), 0);
            are_replicate(
                x_train, beta_star, &model, coupling, fit, admm, x_test, rule, base_err, &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    finish_are(pairs, x_train.nrows(), m, alpha0, x_test.nrows())
}

/// Reference coefficients for a real dataset: the unpenalized fit on every
/// row, with the small ridge fallback if the classes are separable.
pub fn estimate_beta_star(x: &DesignMatrix, y: &[u8]) -> Result<Vec<f64>> {
    let s = CountVector::from_labels(y)?;
    Ok(fit_pilot_or_ridge(x, &s)?.coefficients.into_values())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table4Config {
    pub n_train: usize,
    pub cells: Vec<(u32, f64)>,
    pub reps: usize,
    pub seed: u64,
    pub fit: AreFit,
    pub coupling: Coupling,
    pub rule: ErrorRule,
    pub admm: AdmmConfig,
}

/// Split, estimate `beta_star` on all rows, then one [`real_data_are`] per
/// `(m, alpha0)` cell.
pub fn run_table4(x: &DesignMatrix, y: &[u8], cfg: &Table4Config) -> Result<Vec<AreEstimate>> {
    let beta_star = estimate_beta_star(x, y)?;
    let split = crate::io::split_train_test(x.nrows(), cfg.n_train, cfg.seed)?;
    let x_train = x.select_rows(&split.train);
    let x_test = x.select_rows(&split.test);
    cfg.cells
        .iter()
        .map(|&(m, alpha0)| {
            real_data_are(
                &x_train, &x_test, &beta_star, m, alpha0, cfg.reps, cfg.seed, cfg.fit, cfg.coupling,
                cfg.rule, &cfg.admm,
            )
        })
        .collect()
}

/// Means and standard errors of the selection metrics over replicates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub ae: f64,
    pub ite: f64,
    pub wall_time: f64,
    pub reps: usize,
    pub fp_se: f64,
    pub fn_se: f64,
    pub ae_se: f64,
    pub ite_se: f64,
    pub wall_time_se: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Per-replicate outcome of one fit.
#[derive(Clone, Debug, PartialEq)]
pub struct RepOutcome {
    pub metrics: SupportMetrics,
    pub iterations: usize,
    pub seconds: f64,
    pub coefficients: Coefficients,
}

impl ExperimentReport {
    pub fn from_outcomes(outcomes: &[RepOutcome]) -> Self {
        let col = |f: &dyn Fn(&RepOutcome) -> f64| mean_se(&outcomes.iter().map(f).collect::<Vec<_>>());
        let (fp, fp_se) = col(&|o| o.metrics.fp as f64);
        let (fn_, fn_se) = col(&|o| o.metrics.fn_ as f64);
        let (ae, ae_se) = col(&|o| o.metrics.ae);
        let (ite, ite_se) = col(&|o| o.iterations as f64);
        let (wall_time, wall_time_se) = col(&|o| o.seconds);
        Self {
            fp,
            fn_,
            ae,
            ite,
            wall_time,
            reps: outcomes.len(),
            fp_se,
            fn_se,
            ae_se,
            ite_se,
            wall_time_se,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub beta_star: Vec<f64>,
    pub rho: f64,
    pub correlation: Correlation,
    pub noise: NoiseModel,
    pub alasso: AlassoOptions,
    pub admm: AdmmConfig,
    pub selector: SelectorKind,
}

/// Which information criterion picks the point on the path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    #[default]
    Hbic,
    RefitHbic,
}

impl SelectorKind {
    pub fn selector(self) -> &'static dyn Selector {
        match self {
            SelectorKind::Hbic => &Hbic,
            SelectorKind::RefitHbic => &RefitHbic,
        }
    }
}

impl SelectionConfig {
    pub fn new(n: usize, reps: usize, seed: u64) -> Self {
        Self {
            n,
            reps,
            seed,
            beta_star: default_beta_star(),
            rho: 0.75,
            correlation: Correlation::Equicorrelated,
            noise: NoiseModel::Truth,
            alasso: AlassoOptions::default(),
            admm: harness_admm(),
            selector: SelectorKind::Hbic,
        }
    }
}

/// Counts for a synthetic replicate under `noise`. Row streams come from
/// `seed`, so two calls with the same seed agree.
fn synthetic_counts(
    x: &DesignMatrix,
    y: &[u8],
    beta_star: &[f64],
    noise: &NoiseModel,
    seed: u64,
) -> Result<CountVector> {
    match noise {
        NoiseModel::Truth => CountVector::from_labels(y),
        _ => crate::labels::generate_dataset_counts(x, beta_star, noise, seed, Some(y)),
    }
}

/// HBIC-tuned adaptive LASSO on independent synthetic replicates. Replicate
/// `k` draws from a seed derived from `(seed, k)`, so runs at different `n`
/// are matched on seeds.
pub fn run_selection_experiment(cfg: &SelectionConfig) -> Result<(ExperimentReport, Vec<RepOutcome>)> {
    let outcomes = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = rep_seed(cfg.seed, STREAM_REPS, rep);
            let spec = SyntheticSpec {
                n: cfg.n,
                beta_star: cfg.beta_star.clone(),
                rho: cfg.rho,
                correlation: cfg.correlation,
                seed,
            };
            let (x, y) = gen_synthetic(&spec)?;
            let s = synthetic_counts(&x, &y, &cfg.beta_star, &cfg.noise, seed ^ 0x9e37_79b9)?;
            let start = Instant::now();
            let admm = per_expert(&cfg.admm, s.m());
            let fit = fit_alasso(&x, &s, &admm, &cfg.alasso, cfg.selector.selector())?;
            let seconds = start.elapsed().as_secs_f64();
            let chosen = fit.tuning.chosen_point();
            Ok(RepOutcome {
                metrics: support_metrics(&chosen.coefficients, &cfg.beta_star)?,
                iterations: chosen.iterations,
                seconds,
                coefficients: chosen.coefficients.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ExperimentReport::from_outcomes(&outcomes), outcomes))
}

/// How the benchmark chooses `eta` for each shard count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchEta {
    /// The full-data bound, identical for every `G`.
    #[default]
    Shared,
    /// Sum of per-shard bounds.
    SumShards,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub shards: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub eta: BenchEta,
    /// Fixed penalty level; `None` means `n^(1/4)`.
    pub lambda: Option<f64>,
    pub beta_star: Vec<f64>,
    pub rho: f64,
    pub correlation: Correlation,
    pub noise: NoiseModel,
    pub admm: AdmmConfig,
}

impl BenchConfig {
    pub fn new(n: usize, shards: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self {
            n,
            shards,
            reps,
            seed,
            eta: BenchEta::Shared,
            lambda: None,
            beta_star: default_beta_star(),
            rho: 0.75,
            correlation: Correlation::Equicorrelated,
            noise: NoiseModel::Truth,
            admm: harness_admm(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub shards: usize,
    pub report: ExperimentReport,
}

/// Fit every replicate with each shard count. Replicates run one after the
/// other so that the timings are not disturbed by each other.
pub fn run_parallel_bench(cfg: &BenchConfig) -> Result<(Vec<BenchRow>, Vec<Vec<RepOutcome>>)> {
    if cfg.shards.is_empty() || cfg.reps == 0 {
        return Err(Error::InvalidParameter("need at least one shard count and one replicate".into()));
    }
    let lambda = cfg.lambda.unwrap_or_else(|| (cfg.n as f64).powf(0.25));
    let mut per_g: Vec<Vec<RepOutcome>> = vec![Vec::new(); cfg.shards.len()];
    for rep in 0..cfg.reps {
        let seed = rep_seed(cfg.seed, STREAM_REPS, rep);
        let spec = SyntheticSpec {
            n: cfg.n,
            beta_star: cfg.beta_star.clone(),
            rho: cfg.rho,
            correlation: cfg.correlation,
            seed,
        };
        let (x, y) = gen_synthetic(&spec)?;
        let s = synthetic_counts(&x, &y, &cfg.beta_star, &cfg.noise, seed ^ 0x9e37_79b9)?;
        let pilot = fit_pilot_or_ridge(&x, &s)?;
        let w = adaptive_weights(&pilot.coefficients, 1.0, 1e8)?;
        let admm = per_expert(&cfg.admm, s.m());
        let shared = serial_eta(&x, &admm)?;
        for (k, &g) in cfg.shards.iter().enumerate() {
            let part = make_partition(cfg.n, &PartitionSpec::Balanced(g))?;
            let mode = match cfg.eta {
                BenchEta::Shared => EtaMode::Shared(shared),
                BenchEta::SumShards => EtaMode::SumShards,
            };
            let start = Instant::now();
            let out = solve_parallel(&x, &s, lambda, &w, &admm, &part, mode, None)?;
            let seconds = start.elapsed().as_secs_f64();
            per_g[k].push(RepOutcome {
                metrics: support_metrics(&out.coefficients, &cfg.beta_star)?,
                iterations: out.iterations,
                seconds,
                coefficients: out.coefficients,
            });
        }
    }
    let rows = cfg
        .shards
        .iter()
        .zip(&per_g)
        .map(|(&g, outs)| BenchRow {
            shards: g,
            report: ExperimentReport::from_outcomes(outs),
        })
        .collect();
    Ok((rows, per_g))
}

/// CSV with columns `G,FP,FN,AE,AE_se,Ite,Ite_se,time,time_se,reps`.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["G", "FP", "FN", "AE", "AE_se", "Ite", "Ite_se", "time", "time_se", "reps"])?;
    for row in rows {
        let r = &row.report;
        w.write_record(&[
            row.shards.to_string(),
            format!("{:.3}", r.fp),
            format!("{:.3}", r.fn_),
            format!("{:.6}", r.ae),
            format!("{:.6}", r.ae_se),
            format!("{:.2}", r.ite),
            format!("{:.2}", r.ite_se),
            format!("{:.4}", r.wall_time),
            format!("{:.4}", r.wall_time_se),
            r.reps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One point of a coefficient-versus-noise-level curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: u32,
    pub alpha0: f64,
    pub coefficient: usize,
    pub mean: f64,
    pub se: f64,
}

/// Mean adaptive-LASSO estimates (fixed `lambda = n^(1/4)`) on
/// Dirichlet-multinomial counts for every `(m, alpha0)` pair.
pub fn coefficient_curves(
    spec: &SyntheticSpec,
    ms: &[u32],
    alphas: &[f64],
    reps: usize,
    admm: &AdmmConfig,
) -> Result<Vec<CurvePoint>> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    let d = spec.beta_star.len();
    let mut out = Vec::new();
    for &m in ms {
        for &alpha0 in alphas {
            let model = NoiseModel::DirichletMultinomial { m, alpha0 };
            model.validate()?;
            let fits = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let seed = rep_seed(spec.seed, STREAM_REPS, rep);
                    let (x, _) = gen_synthetic(&SyntheticSpec { seed, ..spec.clone() })?;
                    let s = crate::labels::generate_dataset_counts(&x, &spec.beta_star, &model, seed, None)?;
                    fit_for_are(&x, &s, &spec.beta_star, AreFit::default(), admm)
                })
                .collect::<Result<Vec<_>>>()?;
            for j in 0..d {
                let vals: Vec<f64> = fits.iter().map(|c| c.values()[j]).collect();
                let (mean, se) = mean_se(&vals);
                out.push(CurvePoint {
                    m,
                    alpha0,
                    coefficient: j + 1,
                    mean,
                    se,
                });
            }
        }
    }
    Ok(out)
}

/// CSV with columns `m,alpha0,coefficient,mean,se`.
pub fn write_curves_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// gnuplot script plotting each coefficient against `m`, one panel per
/// `alpha0`, from the CSV written by [`write_curves_csv`].
pub fn gnuplot_script(csv_name: &str, alphas: &[f64], coefficients: &[usize]) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 1200,400*");
    s.push_str(&alphas.len().max(1).to_string());
    s.push_str("\nset output 'coefficient_curves.png'\n");
    s.push_str(&format!("set multiplot layout {},1\n", alphas.len().max(1)));
    s.push_str("set xlabel 'm'\nset ylabel 'estimate'\nset key outside right\n");
    for a in alphas {
        s.push_str(&format!("set title 'alpha0 = {a}'\n"));
        let series: Vec<String> = coefficients
            .iter()
            .map(|j| {
                format!(
                    "'{csv_name}' skip 1 using ($2=={a} && $3=={j} ? $1 : 1/0):4:5 with yerrorlines title 'beta_{j}'"
                )
            })
            .collect();
        s.push_str("plot ");
        s.push_str(&series.join(", \\\n     "));
        s.push('\n');
    }
    s.push_str("unset multiplot\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn metrics_examples() {
        let star = default_beta_star();
        let exact = Coefficients::new(star.clone()).unwrap();
        assert_eq!(
            support_metrics(&exact, &star).unwrap(),
            SupportMetrics { fp: 0, fn_: 0, ae: 0.0 }
        );
        let zero = Coefficients::zeros(9);
        let m = support_metrics(&zero, &star).unwrap();
        assert_eq!((m.fp, m.fn_), (0, 3));
        assert_relative_eq!(m.ae, 11.5);
        assert!(support_metrics(&zero, &[1.0]).is_err());
    }

    #[test]
    fn theoretical_are_values() {
        assert_relative_eq!(theoretical_are(5, 1.0).unwrap(), 5.0 / 3.0);
        assert_eq!(theoretical_are(1, 37.0).unwrap(), 1.0);
        assert!(theoretical_are(0, 1.0).is_err());
        assert!(theoretical_are(3, 0.0).is_err());
    }

    #[test]
    fn conditional_error_examples() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 0.5], vec![-2.0, 1.0], vec![0.3, 0.3]]).unwrap();
        let star = vec![0.7, -0.4];
        let at_star = conditional_error(&Coefficients::new(star.clone()).unwrap(), &star, &x).unwrap();
        let p = eval_probs(&x, &star).unwrap();
        let want = p.iter().map(|q| 2.0 * q * (1.0 - q)).sum::<f64>() / 3.0;
        assert_relative_eq!(at_star, want, max_relative = 1e-14);
        let any = Coefficients::new(vec![5.0, 1.0]).unwrap();
        assert_relative_eq!(conditional_error(&any, &[0.0, 0.0], &x).unwrap(), 0.5);
        assert_relative_eq!(threshold_error(&any, &[0.0, 0.0], &x).unwrap(), 0.5);
    }

    #[test]
    fn threshold_error_is_minimized_at_truth() {
        let mut rng = row_rng(5, 0);
        let x = gen_design(2000, 3, 0.3, Correlation::Equicorrelated, &mut rng);
        let star = vec![1.0, -0.5, 0.25];
        let base = threshold_error(&Coefficients::new(star.clone()).unwrap(), &star, &x).unwrap();
        for delta in [[0.3, 0.0, 0.0], [0.0, 0.5, 0.0], [-0.2, 0.1, -0.4]] {
            let b: Vec<f64> = star.iter().zip(delta).map(|(s, d)| s + d).collect();
            assert!(threshold_error(&Coefficients::new(b).unwrap(), &star, &x).unwrap() >= base);
        }
    }

    #[test]
    fn ratio_estimate_of_proportional_samples() {
        let den = [1.0, 2.0, 3.0, 4.0];
        let num: Vec<f64> = den.iter().map(|v| 2.0 * v).collect();
        let (r, se) = ratio_estimate(&num, &den);
        assert_relative_eq!(r, 2.0);
        assert!(se < 1e-12);
    }

    #[test]
    fn rep_seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..100).map(|k| rep_seed(7, STREAM_REPS, k)).collect();
        let b: Vec<u64> = (0..100).map(|k| rep_seed(7, STREAM_REPS, k)).collect();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec::new(50, 3);
        assert_eq!(gen_synthetic(&spec).unwrap(), gen_synthetic(&spec).unwrap());
        let bad = SyntheticSpec { rho: 1.0, ..spec };
        assert!(gen_synthetic(&bad).is_err());
    }

    #[test]
    fn comonotone_pair_at_one_expert_is_identical() {
        let model = NoiseModel::DirichletMultinomial { m: 1, alpha0: 3.0 };
        let p = [0.1, 0.5, 0.9, 0.3];
        let mut rng = row_rng(1, 1);
        let (y, s) = draw_label_pair(&p, &model, Coupling::Comonotone, &mut rng).unwrap();
        assert_eq!(y.counts(), s.counts());
    }

    #[test]
    fn gnuplot_mentions_every_series() {
        let script = gnuplot_script("curves.csv", &[1.0, 10.0], &[1, 4, 7]);
        assert_eq!(script.matches("beta_4").count(), 2);
        assert!(script.contains("multiplot layout 2,1"));
    }
}
