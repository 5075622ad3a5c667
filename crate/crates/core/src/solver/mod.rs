//! Linearized ADMM for the weighted-L1 counts logistic regression.
//!
//! The problem is split as `min nll(r) + lambda sum w_j |beta_j|` subject to
//! `X beta = r`. Each iteration performs
//!
//! ```text
//! beta <- soft(beta - mu X'(X beta - r - u/mu) / eta, lambda w / eta)
//! r_i  <- [mu (x_i'beta - u_i/mu) + D_i r_i - phi'(r_i) + S_i] / (D_i + mu),  D_i = phi''(r_i) + c0
//! u    <- u - mu (X beta - r)
//! ```
//!
//! Rows can be split into shards. Each shard owns its slice of `r` and `u`
//! and reports `xi_g = mu X_g'(X_g beta - r_g - u_g/mu) / eta` together with
//! the partial sums the stopping rule needs. The coordinator adds the shard
//! reports in ascending shard order, so a run is deterministic for a fixed
//! partition. [`solve`] is the single-shard case and [`solve_parallel`] runs
//! one thread per shard.

mod parallel;
mod serial;

pub use parallel::{
    make_partition, register_eta, solve_parallel, EtaMode, Partition, PartitionSpec,
};
pub use serial::{serial_eta, solve};

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::labels::CountVector;
use crate::linalg::{dot, DesignMatrix, EtaOptions};
use crate::model::{l1_weighted, phi, phi_double_prime, score_residual, AdaptiveWeights, Coefficients};

/// What the solver keeps from every iteration besides the scalar trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Record {
    #[default]
    None,
    /// Store `beta` after every iteration.
    Beta,
    /// Store the full `(beta, r, u)` after every iteration.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub mu: f64,
    pub c0: f64,
    /// Linearization constant. `None` means estimate `1.01 * mu * |X'X|_2`.
    pub eta: Option<f64>,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub eta_options: EtaOptions,
    #[serde(skip)]
    pub record: Record,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            c0: 1e-2,
            eta: None,
            eps_abs: 1e-6,
            eps_rel: 1e-5,
            max_iter: 5000,
            eta_options: EtaOptions::default(),
            record: Record::None,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("mu", self.mu)?;
        positive("c0", self.c0)?;
        positive("eps_abs", self.eps_abs)?;
        positive("eps_rel", self.eps_rel)?;
        if let Some(eta) = self.eta {
            positive("eta", eta)?;
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Primal iterate, split variable and scaled multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub beta: Vec<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub k: usize,
}

impl AdmmState {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            beta: vec![0.0; d],
            r: vec![0.0; n],
            u: vec![0.0; n],
            k: 0,
        }
    }

    pub fn check(&self, n: usize, d: usize) -> Result<()> {
        check_len("initial beta length", d, self.beta.len())?;
        check_len("initial r length", n, self.r.len())?;
        check_len("initial u length", n, self.u.len())?;
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        if !(finite(&self.beta) && finite(&self.r) && finite(&self.u)) {
            return Err(Error::InvalidParameter("initial state is not finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub objective: f64,
    pub h_step: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
    /// Filled according to [`AdmmConfig::record`]; `r` and `u` are empty
    /// under [`Record::Beta`].
    pub iterates: Vec<AdmmState>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn h_steps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.h_step).collect()
    }

    /// CSV with columns `iter,primal_res,dual_res,objective,h_step`, plus a
    /// trailing `G` column when `shards` is given.
    pub fn write_csv<W: Write>(&self, out: W, shards: Option<usize>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter", "primal_res", "dual_res", "objective", "h_step"];
        if shards.is_some() {
            header.push("G");
        }
        w.write_record(&header)?;
        for rec in &self.records {
            let mut row = vec![
                rec.iter.to_string(),
                format!("{:e}", rec.primal_res),
                format!("{:e}", rec.dual_res),
                format!("{:.17e}", rec.objective),
                format!("{:e}", rec.h_step),
            ];
            if let Some(g) = shards {
                row.push(g.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutput {
    pub coefficients: Coefficients,
    /// State after the last iteration, suitable as a warm start.
    pub state: AdmmState,
    pub trace: IterationTrace,
    pub converged: bool,
    pub iterations: usize,
    pub eta: f64,
}

/// `sign(z_j) max(|z_j| - tau_j, 0)`, producing exact zeros.
pub fn soft_threshold(z: &[f64], tau: &[f64]) -> Vec<f64> {
    z.iter().zip(tau).map(|(&zj, &tj)| soft1(zj, tj)).collect()
}

#[inline]
fn soft1(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

/// Weighted soft-threshold of `beta - xi` at `lambda w / eta`.
pub fn central_beta_step(beta: &[f64], xi: &[f64], lambda: f64, w: &[f64], eta: f64) -> Vec<f64> {
    beta.iter()
        .zip(xi)
        .zip(w)
        .map(|((&b, &x), &wj)| soft1(b - x, lambda * wj / eta))
        .collect()
}

/// `mu X'(X beta - r - u/mu) / eta` for the full matrix.
fn linearized_gradient(state: &AdmmState, x: &DesignMatrix, mu: f64, eta: f64) -> Result<Vec<f64>> {
    let xb = x.matvec(&state.beta)?;
    check_len("r length", x.nrows(), state.r.len())?;
    check_len("u length", x.nrows(), state.u.len())?;
    let resid: Vec<f64> = (0..x.nrows())
        .map(|i| xb[i] - state.r[i] - state.u[i] / mu)
        .collect();
    let t = x.tmatvec(&resid)?;
    Ok(t.iter().map(|tj| mu * tj / eta).collect())
}

/// One beta step from `state`.
pub fn beta_update(
    state: &AdmmState,
    x: &DesignMatrix,
    config: &AdmmConfig,
    eta: f64,
    lambda: f64,
    w: &AdaptiveWeights,
) -> Result<Vec<f64>> {
    check_len("weight vector length", x.ncols(), w.len())?;
    let xi = linearized_gradient(state, x, config.mu, eta)?;
    Ok(central_beta_step(&state.beta, &xi, lambda, w.weights(), eta))
}

#[inline]
fn r_coordinate(xb: f64, r: f64, u: f64, s: u32, m: u32, mu: f64, c0: f64) -> f64 {
    let diag = phi_double_prime(r, f64::from(m)) + c0;
    (mu * (xb - u / mu) + diag * r - score_residual(r, s, m)) / (diag + mu)
}

/// Closed-form r step given the new beta.
pub fn r_update(
    state: &AdmmState,
    x: &DesignMatrix,
    s: &CountVector,
    config: &AdmmConfig,
    beta_new: &[f64],
) -> Result<Vec<f64>> {
    check_len("count vector length", x.nrows(), s.len())?;
    let xb = x.matvec(beta_new)?;
    Ok((0..x.nrows())
        .map(|i| {
            r_coordinate(
                xb[i],
                state.r[i],
                state.u[i],
                s.counts()[i],
                s.m(),
                config.mu,
                config.c0,
            )
        })
        .collect())
}

/// `u - mu (X beta_new - r_new)`.
pub fn u_update(
    state: &AdmmState,
    x: &DesignMatrix,
    config: &AdmmConfig,
    beta_new: &[f64],
    r_new: &[f64],
) -> Result<Vec<f64>> {
    let xb = x.matvec(beta_new)?;
    check_len("r length", x.nrows(), r_new.len())?;
    Ok((0..x.nrows())
        .map(|i| state.u[i] - config.mu * (xb[i] - r_new[i]))
        .collect())
}

/// Squared H-norm of the difference of two states, where
/// `H = diag(eta I - mu X'X, (mu + c0) I, I / mu)`.
pub fn h_norm_sq(
    a: &AdmmState,
    b: &AdmmState,
    x: &DesignMatrix,
    mu: f64,
    c0: f64,
    eta: f64,
) -> Result<f64> {
    let d = x.ncols();
    let n = x.nrows();
    a.check(n, d)?;
    b.check(n, d)?;
    let db: Vec<f64> = a.beta.iter().zip(&b.beta).map(|(p, q)| p - q).collect();
    let xdb = x.matvec(&db)?;
    let dr_sq: f64 = a.r.iter().zip(&b.r).map(|(p, q)| (p - q) * (p - q)).sum();
    let du_sq: f64 = a.u.iter().zip(&b.u).map(|(p, q)| (p - q) * (p - q)).sum();
    h_quadratic(eta * dot(&db, &db), mu * dot(&xdb, &xdb), (mu + c0) * dr_sq, du_sq / mu, eta)
}

/// H-norm of `a - b`. Errors when the quadratic form is negative, which
/// means `eta` is below `mu |X'X|_2`.
pub fn h_norm_step(
    a: &AdmmState,
    b: &AdmmState,
    x: &DesignMatrix,
    config: &AdmmConfig,
    eta: f64,
) -> Result<f64> {
    Ok(h_norm_sq(a, b, x, config.mu, config.c0, eta)?.sqrt())
}

/// `beta_term - xb_term + r_term + u_term`, clamping rounding-level negatives
/// to zero.
fn h_quadratic(beta_term: f64, xb_term: f64, r_term: f64, u_term: f64, eta: f64) -> Result<f64> {
    let beta_part = beta_term - xb_term;
    let total = beta_part + r_term + u_term;
    let slack = 1e-12 * (beta_term + xb_term + r_term + u_term);
    if beta_part < -slack {
        return Err(Error::EtaTooSmall {
            value: beta_part,
            eta,
        });
    }
    Ok(total.max(0.0))
}

/// Per-shard partial results for one iteration.
#[derive(Clone, Debug)]
pub(crate) struct ShardReport {
    pub xi: Vec<f64>,
    pub dual: Vec<f64>,
    pub xtu: Vec<f64>,
    pub primal_sq: f64,
    pub xb_sq: f64,
    pub r_sq: f64,
    pub nll: f64,
    pub dxb_sq: f64,
    pub dr_sq: f64,
    pub du_sq: f64,
    /// `(r_g, u_g)` when full iterates are recorded.
    pub ru: Option<(Vec<f64>, Vec<f64>)>,
}

/// Rows owned by one worker together with its slices of `r` and `u`.
pub(crate) struct Shard<'a> {
    x: &'a DesignMatrix,
    s: &'a [u32],
    m: u32,
    r: Vec<f64>,
    u: Vec<f64>,
    xb: Vec<f64>,
    mu: f64,
    c0: f64,
    eta: f64,
    record_full: bool,
}

impl<'a> Shard<'a> {
    pub fn new(
        x: &'a DesignMatrix,
        s: &'a [u32],
        m: u32,
        r: Vec<f64>,
        u: Vec<f64>,
        config: &AdmmConfig,
    ) -> Self {
        let n = x.nrows();
        Self {
            x,
            s,
            m,
            r,
            u,
            xb: vec![0.0; n],
            mu: config.mu,
            c0: config.c0,
            eta: f64::NAN,
            record_full: config.record == Record::Full,
        }
    }

    /// `mu |X_g'X_g|_2` with a safety factor.
    pub fn register(&self, opts: &EtaOptions) -> Result<f64> {
        Ok(crate::linalg::estimate_eta(self.x, self.mu, opts)?.value)
    }

    /// Accept the broadcast `eta` and initial `beta`, returning `xi_g`.
    pub fn init(&mut self, beta0: &[f64], eta: f64) -> ShardReport {
        self.eta = eta;
        self.x.matvec_into(beta0, &mut self.xb);
        let n = self.x.nrows();
        let d = self.x.ncols();
        let mut t = vec![0.0; d];
        let mut xtu = vec![0.0; d];
        let mut primal_sq = 0.0;
        let mut xb_sq = 0.0;
        let mut r_sq = 0.0;
        let mut nll = 0.0;
        let m = f64::from(self.m);
        for i in 0..n {
            let (xb, r, u) = (self.xb[i], self.r[i], self.u[i]);
            let row = self.x.row(i);
            row.axpy(xb - r - u / self.mu, &mut t);
            row.axpy(u, &mut xtu);
            primal_sq += (xb - r) * (xb - r);
            xb_sq += xb * xb;
            r_sq += r * r;
            nll += -f64::from(self.s[i]) * xb + phi(xb, m);
        }
        ShardReport {
            xi: t.iter().map(|tj| self.mu * tj / eta).collect(),
            dual: vec![0.0; d],
            xtu,
            primal_sq,
            xb_sq,
            r_sq,
            nll,
            dxb_sq: 0.0,
            dr_sq: 0.0,
            du_sq: 0.0,
            ru: self.record_full.then(|| (self.r.clone(), self.u.clone())),
        }
    }

    /// r and u updates for the broadcast `beta_new`, then `xi_g` at the new
    /// point.
    pub fn step(&mut self, beta_new: &[f64]) -> ShardReport {
        let n = self.x.nrows();
        let d = self.x.ncols();
        let (mu, c0) = (self.mu, self.c0);
        let m = f64::from(self.m);
        let mut t = vec![0.0; d];
        let mut dual = vec![0.0; d];
        let mut xtu = vec![0.0; d];
        let mut primal_sq = 0.0;
        let mut xb_sq = 0.0;
        let mut r_sq = 0.0;
        let mut nll = 0.0;
        let mut dxb_sq = 0.0;
        let mut dr_sq = 0.0;
        let mut du_sq = 0.0;
        for i in 0..n {
            let row = self.x.row(i);
            let xb = row.dot(beta_new);
            let (r_old, u_old) = (self.r[i], self.u[i]);
            let si = self.s[i];
            let r_new = r_coordinate(xb, r_old, u_old, si, self.m, mu, c0);
            let u_new = u_old - mu * (xb - r_new);
            row.axpy(xb - r_new - u_new / mu, &mut t);
            row.axpy(r_new - r_old, &mut dual);
            row.axpy(u_new, &mut xtu);
            primal_sq += (xb - r_new) * (xb - r_new);
            xb_sq += xb * xb;
            r_sq += r_new * r_new;
            nll += -f64::from(si) * xb + phi(xb, m);
            dxb_sq += (xb - self.xb[i]) * (xb - self.xb[i]);
            dr_sq += (r_new - r_old) * (r_new - r_old);
            du_sq += (u_new - u_old) * (u_new - u_old);
            self.xb[i] = xb;
            self.r[i] = r_new;
            self.u[i] = u_new;
        }
        ShardReport {
            xi: t.iter().map(|tj| mu * tj / self.eta).collect(),
            dual,
            xtu,
            primal_sq,
            xb_sq,
            r_sq,
            nll,
            dxb_sq,
            dr_sq,
            du_sq,
            ru: self.record_full.then(|| (self.r.clone(), self.u.clone())),
        }
    }

    pub fn into_ru(self) -> (Vec<f64>, Vec<f64>) {
        (self.r, self.u)
    }
}

/// How the coordinator reaches its shards.
pub(crate) trait ShardBackend {
    fn init(&mut self, beta0: &[f64], eta: f64) -> Result<Vec<ShardReport>>;
    fn step(&mut self, beta: Arc<Vec<f64>>) -> Result<Vec<ShardReport>>;
    /// Concatenated `(r, u)` in shard order.
    fn finish(self) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Shards stepped in turn on the calling thread.
pub(crate) struct LocalBackend<'a> {
    pub shards: Vec<Shard<'a>>,
}

impl ShardBackend for LocalBackend<'_> {
    fn init(&mut self, beta0: &[f64], eta: f64) -> Result<Vec<ShardReport>> {
        Ok(self.shards.iter_mut().map(|s| s.init(beta0, eta)).collect())
    }

    fn step(&mut self, beta: Arc<Vec<f64>>) -> Result<Vec<ShardReport>> {
        Ok(self.shards.iter_mut().map(|s| s.step(&beta)).collect())
    }

    fn finish(self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut r = Vec::new();
        let mut u = Vec::new();
        for shard in self.shards {
            let (rg, ug) = shard.into_ru();
            r.extend(rg);
            u.extend(ug);
        }
        Ok((r, u))
    }
}

fn sum_vectors(reports: &[ShardReport], pick: impl Fn(&ShardReport) -> &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for rep in reports {
        for (o, v) in out.iter_mut().zip(pick(rep)) {
            *o += v;
        }
    }
    out
}

fn sum_scalars(reports: &[ShardReport], pick: impl Fn(&ShardReport) -> f64) -> f64 {
    reports.iter().fold(0.0, |acc, rep| acc + pick(rep))
}

fn gather_ru(reports: &[ShardReport]) -> (Vec<f64>, Vec<f64>) {
    let mut r = Vec::new();
    let mut u = Vec::new();
    for rep in reports {
        if let Some((rg, ug)) = &rep.ru {
            r.extend_from_slice(rg);
            u.extend_from_slice(ug);
        }
    }
    (r, u)
}

/// Problem dimensions and penalty shared by the serial and parallel drivers.
pub(crate) struct Problem<'a> {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub w: &'a [f64],
}

/// Coordinator loop: central beta step, broadcast, fixed-order aggregation
/// and the stopping rule.
pub(crate) fn coordinate<B: ShardBackend>(
    mut backend: B,
    problem: &Problem<'_>,
    config: &AdmmConfig,
    eta: f64,
    init: &AdmmState,
) -> Result<SolveOutput> {
    let Problem { n, d, lambda, w } = *problem;
    let mu = config.mu;
    let eps_scale_pri = (n as f64).sqrt() * config.eps_abs;
    let eps_scale_dual = (d as f64).sqrt() * config.eps_abs;

    let mut trace = IterationTrace::default();
    let mut reports = backend.init(&init.beta, eta)?;
    if config.record != Record::None {
        let (r, u) = if config.record == Record::Full {
            (init.r.clone(), init.u.clone())
        } else {
            (Vec::new(), Vec::new())
        };
        trace.iterates.push(AdmmState {
            beta: init.beta.clone(),
            r,
            u,
            k: init.k,
        });
    }

    let mut beta = init.beta.clone();
    let mut best_beta = beta.clone();
    let mut best_score = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..config.max_iter {
        let xi = sum_vectors(&reports, |r| &r.xi, d);
        let beta_new = Arc::new(central_beta_step(&beta, &xi, lambda, w, eta));
        reports = backend.step(Arc::clone(&beta_new))?;
        iterations = k + 1;

        let dual_vec = sum_vectors(&reports, |r| &r.dual, d);
        let xtu = sum_vectors(&reports, |r| &r.xtu, d);
        let primal = sum_scalars(&reports, |r| r.primal_sq).sqrt();
        let dual = mu * dot(&dual_vec, &dual_vec).sqrt();
        let xb_norm = sum_scalars(&reports, |r| r.xb_sq).sqrt();
        let r_norm = sum_scalars(&reports, |r| r.r_sq).sqrt();
        let eps_pri = eps_scale_pri + config.eps_rel * xb_norm.max(r_norm);
        let eps_dual = eps_scale_dual + config.eps_rel * dot(&xtu, &xtu).sqrt();

        let dbeta_sq: f64 = beta_new
            .iter()
            .zip(&beta)
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        let h_sq = h_quadratic(
            eta * dbeta_sq,
            mu * sum_scalars(&reports, |r| r.dxb_sq),
            (mu + config.c0) * sum_scalars(&reports, |r| r.dr_sq),
            sum_scalars(&reports, |r| r.du_sq) / mu,
            eta,
        )?;
        let objective = sum_scalars(&reports, |r| r.nll) + lambda * l1_weighted(&beta_new, w);
        if !objective.is_finite() || !primal.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "iterates diverged at iteration {iterations}"
            )));
        }
        trace.records.push(TraceRecord {
            iter: iterations,
            primal_res: primal,
            dual_res: dual,
            objective,
            h_step: h_sq.sqrt(),
        });
        match config.record {
            Record::None => {}
            Record::Beta => trace.iterates.push(AdmmState {
                beta: beta_new.to_vec(),
                r: Vec::new(),
                u: Vec::new(),
                k: init.k + iterations,
            }),
            Record::Full => {
                let (r, u) = gather_ru(&reports);
                trace.iterates.push(AdmmState {
                    beta: beta_new.to_vec(),
                    r,
                    u,
                    k: init.k + iterations,
                });
            }
        }
        beta = beta_new.to_vec();

        let score = (primal / eps_pri).max(dual / eps_dual);
        if score < best_score {
            best_score = score;
            best_beta.clone_from(&beta);
        }
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
    }

    let (r, u) = backend.finish()?;
    let returned = if converged { beta.clone() } else { best_beta };
    Ok(SolveOutput {
        coefficients: Coefficients::new(returned)?,
        state: AdmmState {
            beta,
            r,
            u,
            k: init.k + iterations,
        },
        trace,
        converged,
        iterations,
        eta,
    })
}

pub(crate) fn check_problem(
    x: &DesignMatrix,
    s: &CountVector,
    lambda: f64,
    w: &AdaptiveWeights,
    config: &AdmmConfig,
    init: &AdmmState,
) -> Result<()> {
    config.validate()?;
    check_len("count vector length", x.nrows(), s.len())?;
    check_len("weight vector length", x.ncols(), w.len())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    init.check(x.nrows(), x.ncols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, d: usize, seed: u64) -> (DesignMatrix, CountVector, AdmmState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let m = 4;
        let counts = (0..n).map(|_| rng.random_range(0..=m)).collect();
        let state = AdmmState {
            beta: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            r: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            u: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            k: 0,
        };
        (
            DesignMatrix::from_rows(&rows).unwrap(),
            CountVector::new(counts, m).unwrap(),
            state,
        )
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[0.0, 0.0], &[1.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(soft_threshold(&[1.5, -2.0], &[0.0, 0.0]), vec![1.5, -2.0]);
        assert_eq!(soft_threshold(&[3.0, -0.5, -4.0], &[1.0, 1.0, 1.0]), vec![2.0, 0.0, -3.0]);
    }

    #[test]
    fn soft_threshold_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let z: f64 = rng.random_range(-3.0..3.0);
            let tau: f64 = rng.random_range(0.0..2.0);
            let obj = |x: f64| 0.5 * (x - z) * (x - z) + tau * x.abs();
            let got = soft_threshold(&[z], &[tau])[0];
            let best = (-40_000..=40_000)
                .map(|k| f64::from(k) * 1e-4)
                .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
                .unwrap();
            assert!((got - best).abs() <= 1e-4);
            assert!(obj(got) <= obj(best) + 1e-12);
        }
    }

    #[test]
    fn u_update_examples() {
        let x = DesignMatrix::identity(2);
        let config = AdmmConfig {
            mu: 2.0,
            ..AdmmConfig::default()
        };
        let state = AdmmState::zeros(2, 2);
        let same = u_update(&state, &x, &config, &[0.5, 1.0], &[0.5, 1.0]).unwrap();
        assert_eq!(same, vec![0.0, 0.0]);
        let moved = u_update(&state, &x, &config, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(moved, vec![-2.0, 0.0]);
    }

    #[test]
    fn r_update_fixed_point() {
        let x = DesignMatrix::identity(1);
        let s = CountVector::new(vec![2], 4).unwrap();
        let config = AdmmConfig::default();
        // S = phi'(0) = 2 and x'beta - u/mu = r = 0.
        let state = AdmmState::zeros(1, 1);
        let r = r_update(&state, &x, &s, &config, &[0.0]).unwrap();
        assert_eq!(r, vec![0.0]);
    }

    #[test]
    fn r_coordinate_without_curvature_is_a_ridge_average() {
        // m = 0 turns phi off entirely.
        let (xb, r, u, s, mu, c0) = (0.7, -0.3, 0.2, 0, 1.5, 0.01);
        let got = r_coordinate(xb, r, u, s, 0, mu, c0);
        let want = (mu * (xb - u / mu) + c0 * r + f64::from(s)) / (c0 + mu);
        assert_relative_eq!(got, want, max_relative = 1e-15);
    }

    #[test]
    fn beta_update_examples() {
        let (x, _, state) = random_problem(12, 3, 1);
        let config = AdmmConfig::default();
        let w = AdaptiveWeights::uniform(3);
        let eta = 50.0;
        let plain = beta_update(&state, &x, &config, eta, 0.0, &w).unwrap();
        let xi = linearized_gradient(&state, &x, config.mu, eta).unwrap();
        for j in 0..3 {
            assert_eq!(plain[j], state.beta[j] - xi[j]);
        }
        // At a fixed point of the constraint with a large threshold.
        let xs = DesignMatrix::identity(2);
        let fixed = AdmmState {
            beta: vec![0.3, -0.2],
            r: vec![0.3, -0.2],
            u: vec![0.0, 0.0],
            k: 0,
        };
        let zero = beta_update(&fixed, &xs, &config, 1.0, 1.0, &AdaptiveWeights::uniform(2)).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
    }

    #[test]
    fn h_norm_examples() {
        let x = DesignMatrix::identity(2);
        let config = AdmmConfig::default();
        let a = AdmmState::zeros(2, 2);
        assert_eq!(h_norm_step(&a, &a, &x, &config, 2.0).unwrap(), 0.0);
        let mut b = a.clone();
        b.r[0] = 1.0;
        assert_relative_eq!(h_norm_step(&a, &b, &x, &config, 2.0).unwrap(), 1.01_f64.sqrt());
        let mut c = a.clone();
        c.beta[0] = 1.0;
        assert!(matches!(
            h_norm_step(&a, &c, &x, &config, 0.5),
            Err(Error::EtaTooSmall { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(AdmmConfig::default().validate().is_ok());
        for bad in [
            AdmmConfig { mu: 0.0, ..AdmmConfig::default() },
            AdmmConfig { c0: -1.0, ..AdmmConfig::default() },
            AdmmConfig { eta: Some(0.0), ..AdmmConfig::default() },
            AdmmConfig { max_iter: 0, ..AdmmConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn shard_step_matches_standalone_updates() {
        let (x, s, state) = random_problem(15, 4, 9);
        let config = AdmmConfig::default();
        let eta = 40.0;
        let beta_new: Vec<f64> = state.beta.iter().map(|b| b * 0.9 + 0.01).collect();
        let mut shard = Shard::new(&x, s.counts(), s.m(), state.r.clone(), state.u.clone(), &config);
        shard.init(&state.beta, eta);
        let rep = shard.step(&beta_new);
        let r = r_update(&state, &x, &s, &config, &beta_new).unwrap();
        let u = u_update(&state, &x, &config, &beta_new, &r).unwrap();
        let (rs, us) = shard.into_ru();
        assert_eq!(rs, r);
        assert_eq!(us, u);
        let next = AdmmState {
            beta: beta_new,
            r,
            u,
            k: 1,
        };
        let xi = linearized_gradient(&next, &x, config.mu, eta).unwrap();
        for j in 0..4 {
            assert_relative_eq!(rep.xi[j], xi[j], max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn trace_csv_header() {
        let trace = IterationTrace {
            records: vec![TraceRecord {
                iter: 1,
                primal_res: 0.5,
                dual_res: 0.25,
                objective: 3.0,
                h_step: 1.0,
            }],
            iterates: Vec::new(),
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, Some(3)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,primal_res,dual_res,objective,h_step,G");
        assert!(lines.next().unwrap().ends_with(",3"));
    }
}
