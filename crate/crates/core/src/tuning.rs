//! Regularization path over `lambda` with warm starts and an information
//! criterion to pick a point on it.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::labels::CountVector;
use crate::linalg::DesignMatrix;
use crate::model::{
    adaptive_weights, counts_gradient, counts_nll, fit_pilot_or_ridge, AdaptiveWeights,
    Coefficients, PilotFit,
};
use crate::solver::{solve, AdmmConfig, AdmmState, SolveOutput};

/// Scores a fitted coefficient vector; smaller is better.
pub trait Selector: Sync {
    fn name(&self) -> &'static str;
    fn score(&self, x: &DesignMatrix, s: &CountVector, beta: &Coefficients, lambda: f64) -> Result<f64>;
}

/// `(2/n) nll + |support| log(log n) log(d) / n`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Hbic;

impl Selector for Hbic {
    fn name(&self) -> &'static str {
        "hbic"
    }

    fn score(&self, x: &DesignMatrix, s: &CountVector, beta: &Coefficients, lambda: f64) -> Result<f64> {
        hbic_score(x, s, beta, lambda)
    }
}

/// HBIC with the likelihood term evaluated at the unpenalized fit restricted
/// to the support of `beta`, instead of at the shrunken estimate itself.
#[derive(Clone, Copy, Debug, Default)]
pub struct RefitHbic;

impl Selector for RefitHbic {
    fn name(&self) -> &'static str {
        "refit_hbic"
    }

    fn score(&self, x: &DesignMatrix, s: &CountVector, beta: &Coefficients, lambda: f64) -> Result<f64> {
        let support = beta.support();
        let mut refit = vec![0.0; x.ncols()];
        if !support.is_empty() {
            let sub = x.select_cols(support)?;
            let fit = fit_pilot_or_ridge(&sub, s)?;
            for (k, &j) in support.iter().enumerate() {
                refit[j] = fit.coefficients.values()[k];
            }
        }
        hbic_score(x, s, &Coefficients::new(refit)?, lambda)
    }
}

/// High-dimensional BIC. `lambda` does not enter the formula and is only
/// accepted to match the [`Selector`] signature.
pub fn hbic_score(x: &DesignMatrix, s: &CountVector, beta: &Coefficients, _lambda: f64) -> Result<f64> {
    let n = x.nrows() as f64;
    if n <= std::f64::consts::E {
        return Err(Error::InvalidParameter(format!(
            "HBIC needs more than e rows, got {}",
            x.nrows()
        )));
    }
    let d = x.ncols() as f64;
    let nll = counts_nll(x, s, beta.values())?;
    let k = beta.support().len() as f64;
    Ok(2.0 * nll / n + k * n.ln().ln() * d.ln() / n)
}

/// Smallest `lambda` at which zero satisfies the optimality conditions:
/// `max_j |[X'(S - m/2)]_j| / w_j` over penalized coordinates. Falls back to
/// 1 when that maximum is zero.
pub fn lambda_max(x: &DesignMatrix, s: &CountVector, w: &AdaptiveWeights) -> Result<f64> {
    check_len("weight vector length", x.ncols(), w.len())?;
    let g = counts_gradient(x, s, &vec![0.0; x.ncols()])?;
    let max = g
        .iter()
        .zip(w.weights())
        .filter(|(_, wj)| **wj > 0.0)
        .map(|(gj, wj)| gj.abs() / wj)
        .fold(0.0, f64::max);
    Ok(if max > 0.0 && max.is_finite() { max } else { 1.0 })
}

/// `size` log-spaced values from `lambda_max` down to `lambda_max * min_ratio`.
pub fn lambda_grid(lambda_max: f64, size: usize, min_ratio: f64) -> Result<Vec<f64>> {
    if size < 2 {
        return Err(Error::InvalidParameter("grid needs at least two points".into()));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "min_ratio must lie in (0, 1), got {min_ratio}"
        )));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda_max must be positive, got {lambda_max}")));
    }
    let step = min_ratio.ln() / (size - 1) as f64;
    Ok((0..size).map(|k| lambda_max * (step * k as f64).exp()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub grid_size: usize,
    pub min_ratio: f64,
    pub warm_start: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            grid_size: 50,
            min_ratio: 1e-4,
            warm_start: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub score: f64,
    pub coefficients: Coefficients,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuningResult {
    pub points: Vec<PathPoint>,
    pub chosen: usize,
    pub selector: &'static str,
}

impl TuningResult {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.score).collect()
    }

    pub fn chosen_lambda(&self) -> f64 {
        self.points[self.chosen].lambda
    }

    pub fn chosen_point(&self) -> &PathPoint {
        &self.points[self.chosen]
    }

    pub fn total_iterations(&self) -> usize {
        self.points.iter().map(|p| p.iterations).sum()
    }

    /// CSV with columns `lambda,score,support_size,converged`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "score", "support_size", "converged"])?;
        for p in &self.points {
            w.write_record(&[
                format!("{:.17e}", p.lambda),
                format!("{:.17e}", p.score),
                p.coefficients.support().len().to_string(),
                p.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Index of the smallest score; ties go to the earliest, i.e. larger, lambda.
fn argmin_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = k;
        }
    }
    best
}

/// Fit every grid value and score it. Warm starts run sequentially from the
/// largest lambda; cold starts run in parallel.
pub fn lambda_path(
    x: &DesignMatrix,
    s: &CountVector,
    w: &AdaptiveWeights,
    config: &AdmmConfig,
    opts: &PathOptions,
    selector: &dyn Selector,
) -> Result<TuningResult> {
    let grid = lambda_grid(lambda_max(x, s, w)?, opts.grid_size, opts.min_ratio)?;
    path_on_grid(x, s, w, config, &grid, opts.warm_start, selector)
}

/// As [`lambda_path`] on a caller-supplied strictly descending grid.
pub fn path_on_grid(
    x: &DesignMatrix,
    s: &CountVector,
    w: &AdaptiveWeights,
    config: &AdmmConfig,
    grid: &[f64],
    warm_start: bool,
    selector: &dyn Selector,
) -> Result<TuningResult> {
    if grid.is_empty() || grid.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::InvalidParameter("lambda grid must be strictly descending".into()));
    }
    // One eta for the whole path.
    let config = AdmmConfig {
        eta: Some(crate::solver::serial_eta(x, config)?),
        ..config.clone()
    };
    let point = |lambda: f64, fit: SolveOutput| -> Result<PathPoint> {
        Ok(PathPoint {
            lambda,
            score: selector.score(x, s, &fit.coefficients, lambda)?,
            coefficients: fit.coefficients,
            converged: fit.converged,
            iterations: fit.iterations,
        })
    };
    let points: Vec<PathPoint> = if warm_start {
        let mut state: Option<AdmmState> = None;
        let mut points = Vec::with_capacity(grid.len());
        for &lambda in grid {
            let mut fit = solve(x, s, lambda, w, &config, state.as_ref())?;
            state = Some(std::mem::replace(&mut fit.state, AdmmState::zeros(0, 0)));
            if let Some(st) = state.as_mut() {
                st.k = 0;
            }
            points.push(point(lambda, fit)?);
        }
        points
    } else {
        grid.par_iter()
            .map(|&lambda| point(lambda, solve(x, s, lambda, w, &config, None)?))
            .collect::<Result<_>>()?
    };
    let scores: Vec<f64> = points.iter().map(|p| p.score).collect();
    Ok(TuningResult {
        chosen: argmin_first(&scores),
        points,
        selector: selector.name(),
    })
}

/// Settings for the pilot-weights-path pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlassoOptions {
    pub gamma: f64,
    pub cap: f64,
    pub path: PathOptions,
    /// Column left unpenalized, e.g. an appended intercept.
    pub unpenalized: Option<usize>,
}

impl Default for AlassoOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            cap: 1e8,
            path: PathOptions::default(),
            unpenalized: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlassoFit {
    pub pilot: PilotFit,
    pub weights: AdaptiveWeights,
    pub tuning: TuningResult,
}

impl AlassoFit {
    pub fn coefficients(&self) -> &Coefficients {
        &self.tuning.chosen_point().coefficients
    }
}

/// Pilot fit, adaptive weights, then a selected point on the lambda path.
pub fn fit_alasso(
    x: &DesignMatrix,
    s: &CountVector,
    config: &AdmmConfig,
    opts: &AlassoOptions,
    selector: &dyn Selector,
) -> Result<AlassoFit> {
    let pilot = fit_pilot_or_ridge(x, s)?;
    let mut weights = adaptive_weights(&pilot.coefficients, opts.gamma, opts.cap)?;
    if let Some(j) = opts.unpenalized {
        if j >= x.ncols() {
            return Err(Error::InvalidParameter(format!("unpenalized column {j} out of range")));
        }
        weights.set_unpenalized(j);
    }
    let tuning = lambda_path(x, s, &weights, config, &opts.path, selector)?;
    Ok(AlassoFit {
        pilot,
        weights,
        tuning,
    })
}
