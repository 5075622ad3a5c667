//! Counts likelihood for logistic regression with `m` annotators, the
//! unpenalized pilot fit, and adaptive-LASSO weights.
//!
//! With scores `r = X beta` the negative log-likelihood is
//! `sum_i [ -S_i r_i + phi(r_i) ]`, `phi(t) = m log(1 + e^t)`. For `m = 1`
//! and `S = y` this is the ordinary logistic cross-entropy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::labels::CountVector;
use crate::linalg::DesignMatrix;

/// Logistic function, evaluated without overflow for any finite `t`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `m log(1 + e^t)`.
#[inline]
pub fn phi(t: f64, m: f64) -> f64 {
    if t > 35.0 {
        m * (t + (-t).exp().ln_1p())
    } else {
        m * t.exp().ln_1p()
    }
}

/// `m sigmoid(t)`.
#[inline]
pub fn phi_prime(t: f64, m: f64) -> f64 {
    m * sigmoid(t)
}

/// `m sigmoid(t) (1 - sigmoid(t))`.
#[inline]
pub fn phi_double_prime(t: f64, m: f64) -> f64 {
    let s = sigmoid(t);
    m * s * (1.0 - s)
}

/// Coefficient vector whose support is exactly its nonzero entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl Coefficients {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect();
        Ok(Self { values, support })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            values: vec![0.0; d],
            support: Vec::new(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// JSON document `{values, support, meta: {gamma, lambda}}`.
    pub fn to_json(&self, meta: CoefficientMeta) -> Result<String> {
        let doc = CoefficientsDoc {
            values: self.values.clone(),
            support: self.support.clone(),
            meta,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parse the JSON document written by [`Coefficients::to_json`]. The
    /// stored support must agree with the values.
    pub fn from_json(text: &str) -> Result<(Self, CoefficientMeta)> {
        let doc: CoefficientsDoc = serde_json::from_str(text)?;
        let coefs = Self::new(doc.values)?;
        if coefs.support != doc.support {
            return Err(Error::InvalidParameter(
                "support listed in the file does not match the nonzero values".into(),
            ));
        }
        Ok((coefs, doc.meta))
    }
}

/// Metadata stored alongside serialized coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMeta {
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CoefficientsDoc {
    values: Vec<f64>,
    support: Vec<usize>,
    meta: CoefficientMeta,
}

/// Scores `X beta` after checking that every dimension lines up.
fn scores(x: &DesignMatrix, s: &CountVector, beta: &[f64]) -> Result<Vec<f64>> {
    check_len("count vector length", x.nrows(), s.len())?;
    x.matvec(beta)
}

/// `sum_i [ -S_i r_i + phi(r_i) ]` with `r = X beta`.
pub fn counts_nll(x: &DesignMatrix, s: &CountVector, beta: &[f64]) -> Result<f64> {
    let r = scores(x, s, beta)?;
    Ok(nll_from_scores(&r, s.counts(), f64::from(s.m())))
}

pub(crate) fn nll_from_scores(r: &[f64], s: &[u32], m: f64) -> f64 {
    r.iter()
        .zip(s)
        .map(|(&ri, &si)| -f64::from(si) * ri + phi(ri, m))
        .sum()
}

/// `phi'(t) - s`, written as `(m - s) sigmoid(t) - s sigmoid(-t)` so that
/// saturated scores keep full relative precision.
#[inline]
pub(crate) fn score_residual(t: f64, s: u32, m: u32) -> f64 {
    f64::from(m - s) * sigmoid(t) - f64::from(s) * sigmoid(-t)
}

/// `X' (phi'(X beta) - S)`.
pub fn counts_gradient(x: &DesignMatrix, s: &CountVector, beta: &[f64]) -> Result<Vec<f64>> {
    let r = scores(x, s, beta)?;
    let resid: Vec<f64> = r
        .iter()
        .zip(s.counts())
        .map(|(&ri, &si)| score_residual(ri, si, s.m()))
        .collect();
    x.tmatvec(&resid)
}

/// Adaptive-LASSO weights built from a pilot estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveWeights {
    w: Vec<f64>,
    gamma: f64,
    cap: f64,
    pilot: Coefficients,
}

impl AdaptiveWeights {
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn pilot(&self) -> &Coefficients {
        &self.pilot
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Unit weights, i.e. the plain LASSO penalty.
    pub fn uniform(d: usize) -> Self {
        Self {
            w: vec![1.0; d],
            gamma: 0.0,
            cap: 1.0,
            pilot: Coefficients::zeros(d),
        }
    }

    /// Weights given directly (nonnegative, finite).
    pub fn from_values(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "penalty weights must be finite and nonnegative".into(),
            ));
        }
        let d = w.len();
        let cap = w.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            w,
            gamma: 0.0,
            cap,
            pilot: Coefficients::zeros(d),
        })
    }

    /// Leave coordinate `j` unpenalized (used for an intercept column).
    pub fn set_unpenalized(&mut self, j: usize) {
        self.w[j] = 0.0;
    }
}

/// `w_j = min(|pilot_j|^(-gamma), cap)`.
pub fn adaptive_weights(pilot: &Coefficients, gamma: f64, cap: f64) -> Result<AdaptiveWeights> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::InvalidParameter(format!("weight cap must be positive, got {cap}")));
    }
    let w = pilot
        .values()
        .iter()
        .map(|b| {
            let raw = b.abs().powf(-gamma);
            if raw.is_finite() {
                raw.min(cap)
            } else {
                cap
            }
        })
        .collect();
    Ok(AdaptiveWeights {
        w,
        gamma,
        cap,
        pilot: pilot.clone(),
    })
}

/// `counts_nll + lambda * sum_j w_j |beta_j|`.
pub fn penalized_objective(
    x: &DesignMatrix,
    s: &CountVector,
    beta: &[f64],
    lambda: f64,
    w: &AdaptiveWeights,
) -> Result<f64> {
    check_len("weight vector length", beta.len(), w.len())?;
    Ok(counts_nll(x, s, beta)? + lambda * l1_weighted(beta, w.weights()))
}

pub(crate) fn l1_weighted(beta: &[f64], w: &[f64]) -> f64 {
    beta.iter().zip(w).map(|(b, wj)| wj * b.abs()).sum()
}

/// Settings for the Newton pilot fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PilotOptions {
    pub max_iter: usize,
    /// Added to the Hessian diagonal before factorization.
    pub jitter: f64,
    /// `|beta|` beyond which the data are declared separable.
    pub divergence_norm: f64,
    /// Optional l2 penalty `ridge/2 |beta|^2`; zero for the plain MLE.
    pub ridge: f64,
}

impl Default for PilotOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            jitter: 1e-8,
            divergence_norm: 1e6,
            ridge: 0.0,
        }
    }
}

/// Ridge used when the plain pilot fit diverges.
pub const FALLBACK_RIDGE: f64 = 1e-6;

/// Result of the pilot fit.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotFit {
    pub coefficients: Coefficients,
    pub iterations: usize,
    /// `Some(ridge)` when the fit carried an l2 penalty.
    pub ridge: Option<f64>,
}

/// Unpenalized minimizer of [`counts_nll`] by damped Newton.
pub fn fit_pilot(x: &DesignMatrix, s: &CountVector) -> Result<PilotFit> {
    fit_pilot_with(x, s, &PilotOptions::default())
}

/// Plain pilot fit, refit with [`FALLBACK_RIDGE`] if the data look separable.
pub fn fit_pilot_or_ridge(x: &DesignMatrix, s: &CountVector) -> Result<PilotFit> {
    match fit_pilot(x, s) {
        Err(Error::Separation { .. }) | Err(Error::PilotNotConverged { .. }) => fit_pilot_with(
            x,
            s,
            &PilotOptions {
                ridge: FALLBACK_RIDGE,
                max_iter: 500,
                ..PilotOptions::default()
            },
        ),
        other => other,
    }
}

/// Newton's method with step halving on
/// `counts_nll(beta) + ridge/2 |beta|^2`. Stops once the gradient inf-norm is
/// at most `1e-8 (1 + m n)` and the Newton step is negligible. On separable
/// data the step never shrinks, so such inputs end in an error.
pub fn fit_pilot_with(x: &DesignMatrix, s: &CountVector, opts: &PilotOptions) -> Result<PilotFit> {
    check_len("count vector length", x.nrows(), s.len())?;
    let (n, d) = (x.nrows(), x.ncols());
    let m = f64::from(s.m());
    let tol = 1e-8 * (1.0 + m * n as f64);
    let ridge = opts.ridge;
    let objective = |beta: &[f64]| -> f64 {
        let mut r = vec![0.0; n];
        x.matvec_into(beta, &mut r);
        nll_from_scores(&r, s.counts(), m) + 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
    };

    let mut beta = vec![0.0; d];
    let mut r = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut grad = vec![0.0; d];
    let mut grad_norm = f64::INFINITY;
    for iter in 0..=opts.max_iter {
        x.matvec_into(&beta, &mut r);
        for i in 0..n {
            resid[i] = score_residual(r[i], s.counts()[i], s.m());
        }
        x.tmatvec_into(&resid, &mut grad);
        for (g, b) in grad.iter_mut().zip(&beta) {
            *g += ridge * b;
        }
        grad_norm = grad.iter().fold(0.0_f64, |a, g| a.max(g.abs()));

        let mut hess = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let weight = m * sigmoid(r[i]) * sigmoid(-r[i]);
            if weight == 0.0 {
                continue;
            }
            let row: Vec<(usize, f64)> = x.row(i).iter().filter(|(_, v)| *v != 0.0).collect();
            for &(a, va) in &row {
                for &(b, vb) in &row {
                    if b <= a {
                        hess[(a, b)] += weight * va * vb;
                    }
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = newton_direction(hess, &grad, opts.jitter + ridge);
        let step_norm = step.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let beta_norm = beta.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if grad_norm <= tol && step_norm <= 1e-6 * (1.0 + beta_norm) {
            return Ok(PilotFit {
                coefficients: Coefficients::new(beta)?,
                iterations: iter,
                ridge: (ridge > 0.0).then_some(ridge),
            });
        }
        if iter == opts.max_iter {
            break;
        }

        let f0 = objective(&beta);
        let mut t = 1.0;
        let mut candidate = vec![0.0; d];
        loop {
            for j in 0..d {
                candidate[j] = beta[j] - t * step[j];
            }
            let f = objective(&candidate);
            if f <= f0 || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        std::mem::swap(&mut beta, &mut candidate);

        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > opts.divergence_norm {
            return Err(Error::Separation {
                norm,
                iterations: iter + 1,
            });
        }
    }
    Err(Error::PilotNotConverged { grad: grad_norm })
}

/// Solve `(H + jitter I) step = grad`, inflating the jitter until the
/// Cholesky factorization succeeds.
fn newton_direction(hess: DMatrix<f64>, grad: &[f64], jitter: f64) -> Vec<f64> {
    let d = grad.len();
    let g = DVector::from_column_slice(grad);
    let scale = (0..d).map(|j| hess[(j, j)].abs()).fold(1.0, f64::max);
    let mut bump = jitter;
    loop {
        let mut h = hess.clone();
        for j in 0..d {
            h[(j, j)] += bump;
        }
        if let Some(chol) = h.cholesky() {
            return chol.solve(&g).iter().copied().collect();
        }
        bump = if bump > 0.0 { bump * 10.0 } else { 1e-12 * scale };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn phi_at_zero() {
        assert_relative_eq!(phi(0.0, 1.0), std::f64::consts::LN_2);
        assert_eq!(phi_prime(0.0, 1.0), 0.5);
        assert_eq!(phi_double_prime(0.0, 1.0), 0.25);
    }

    #[test]
    fn phi_saturates() {
        assert_eq!(phi(800.0, 3.0), 2400.0);
        assert_eq!(phi_prime(800.0, 3.0), 3.0);
        assert_eq!(phi_double_prime(800.0, 3.0), 0.0);
        assert_eq!(phi(-800.0, 3.0), 0.0);
        assert!(phi(36.0, 1.0) >= 36.0);
    }

    #[test]
    fn phi_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let t: f64 = rng.random_range(-30.0..30.0);
            let m = f64::from(rng.random_range(1u32..20));
            let h = 1e-5;
            let d1 = (phi(t + h, m) - phi(t - h, m)) / (2.0 * h);
            let d2 = (phi_prime(t + h, m) - phi_prime(t - h, m)) / (2.0 * h);
            assert!((d1 - phi_prime(t, m)).abs() <= 1e-6 * (1.0 + phi_prime(t, m).abs()));
            assert!(
                (d2 - phi_double_prime(t, m)).abs() <= 1e-6 * (1.0 + phi_double_prime(t, m))
            );
        }
    }

    #[test]
    fn nll_at_zero() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]]).unwrap();
        let s = CountVector::new(vec![1, 4, 2], 4).unwrap();
        let got = counts_nll(&x, &s, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(got, 3.0 * 4.0 * std::f64::consts::LN_2, max_relative = 1e-14);
    }

    #[test]
    fn nll_rejects_mismatch() {
        let x = DesignMatrix::identity(2);
        let s = CountVector::new(vec![1], 1).unwrap();
        assert!(counts_nll(&x, &s, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn penalized_objective_reduces_to_nll() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let s = CountVector::new(vec![1, 0], 1).unwrap();
        let w = AdaptiveWeights::uniform(2);
        let beta = [0.4, -0.7];
        let nll = counts_nll(&x, &s, &beta).unwrap();
        assert_eq!(penalized_objective(&x, &s, &beta, 0.0, &w).unwrap(), nll);
        let nll0 = counts_nll(&x, &s, &[0.0, 0.0]).unwrap();
        assert_eq!(penalized_objective(&x, &s, &[0.0, 0.0], 5.0, &w).unwrap(), nll0);
    }

    #[test]
    fn weights_examples() {
        let unit = Coefficients::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(adaptive_weights(&unit, 1.0, 1e8).unwrap().weights(), &[1.0, 1.0]);
        let with_zero = Coefficients::new(vec![0.0, 2.0]).unwrap();
        assert_eq!(adaptive_weights(&with_zero, 1.0, 1e8).unwrap().weights()[0], 1e8);
        let p = Coefficients::new(vec![2.0, 0.5]).unwrap();
        let w = adaptive_weights(&p, 2.0, 1e8).unwrap();
        assert_relative_eq!(w.weights()[0], 0.25);
        assert_relative_eq!(w.weights()[1], 4.0);
        assert!(adaptive_weights(&p, 0.0, 1e8).is_err());
        assert!(adaptive_weights(&p, 1.0, -1.0).is_err());
    }

    #[test]
    fn symmetric_pilot_is_zero() {
        let x = DesignMatrix::from_rows(&[vec![1.0], vec![1.0], vec![-1.0], vec![-1.0]]).unwrap();
        let s = CountVector::from_labels(&[1, 0, 1, 0]).unwrap();
        let fit = fit_pilot(&x, &s).unwrap();
        assert!(fit.coefficients.values()[0].abs() < 1e-12);
        assert!(fit.ridge.is_none());
    }

    #[test]
    fn separable_data_triggers_fallback() {
        let x = DesignMatrix::from_rows(&[vec![1.0], vec![2.0], vec![-1.0], vec![-3.0]]).unwrap();
        let s = CountVector::from_labels(&[1, 1, 0, 0]).unwrap();
        assert!(matches!(
            fit_pilot(&x, &s),
            Err(Error::Separation { .. }) | Err(Error::PilotNotConverged { .. })
        ));
        let fit = fit_pilot_or_ridge(&x, &s).unwrap();
        assert_eq!(fit.ridge, Some(FALLBACK_RIDGE));
        assert!(fit.coefficients.values()[0] > 1.0);
    }

    #[test]
    fn coefficients_json_round_trip() {
        let c = Coefficients::new(vec![0.0, 1.5, -2.0, 0.0]).unwrap();
        assert_eq!(c.support(), &[1, 2]);
        let text = c
            .to_json(CoefficientMeta {
                gamma: Some(1.0),
                lambda: Some(0.3),
            })
            .unwrap();
        let (back, meta) = Coefficients::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(meta.lambda, Some(0.3));
        let tampered = text.replace("\"support\": [\n    1,", "\"support\": [\n    0,");
        assert!(Coefficients::from_json(&tampered).is_err());
    }
}
