//! Posterior-driven manual labels.
//!
//! Every annotator votes class 1 for row `i` with a probability tied to the
//! logistic posterior `sigmoid(x_i' beta)`. With `m` annotators the votes
//! aggregate into a count `S_i` in `0..=m`, drawn either from a plain
//! binomial (annotators share the posterior) or from a beta-binomial, i.e.
//! the two-category Dirichlet-multinomial, where the shared probability is
//! itself `Beta(alpha0 * p1, alpha0 * p2)`.
//!
//! Truth labels are the `m = 1` special case, so they travel through the
//! rest of the crate as a [`CountVector`] too.

use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};

use crate::error::{check_len, Error, Result};
use crate::linalg::DesignMatrix;
use crate::model::sigmoid;

/// Class posterior `(Pr(y = 1 | x), Pr(y = 0 | x))`, stored through `p1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorPair {
    p1: f64,
}

impl PosteriorPair {
    pub fn new(p1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::InvalidParameter(format!(
                "posterior probability {p1} outside [0, 1]"
            )));
        }
        Ok(Self { p1 })
    }

    /// Posterior for a linear score `t = x' beta`.
    pub fn from_score(t: f64) -> Self {
        Self { p1: sigmoid(t) }
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        1.0 - self.p1
    }
}

/// `sigmoid(x' beta)`, saturating instead of overflowing.
pub fn posterior(x: &[f64], beta: &[f64]) -> Result<PosteriorPair> {
    check_len("posterior coefficient length", x.len(), beta.len())?;
    Ok(PosteriorPair::from_score(crate::linalg::dot(x, beta)))
}

/// Probability that a single annotator disagrees with the truth label:
/// `1 - p1^2 - p2^2`.
pub fn label_error_prob(p: PosteriorPair) -> f64 {
    1.0 - p.p1() * p.p1() - p.p2() * p.p2()
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn entropy(p: PosteriorPair) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    h(p.p1()) + h(p.p2())
}

/// How manual labels are generated from the posterior.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// The observed 0/1 label itself (`m = 1`).
    Truth,
    /// `S ~ Binomial(m, p1)`.
    Multinomial { m: u32 },
    /// `q ~ Beta(alpha0 p1, alpha0 p2)`, `S ~ Binomial(m, q)`.
    DirichletMultinomial { m: u32, alpha0: f64 },
}

impl NoiseModel {
    pub fn experts(&self) -> u32 {
        match *self {
            NoiseModel::Truth => 1,
            NoiseModel::Multinomial { m } | NoiseModel::DirichletMultinomial { m, .. } => m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Truth => Ok(()),
            NoiseModel::Multinomial { m } if m >= 1 => Ok(()),
            NoiseModel::DirichletMultinomial { m, alpha0 } if m >= 1 && alpha0 > 0.0 => Ok(()),
            other => Err(Error::InvalidParameter(format!(
                "noise model {other:?} needs m >= 1 and alpha0 > 0"
            ))),
        }
    }
}

/// Aggregated class-1 votes per row, out of `m` annotators.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CountVector {
    counts: Vec<u32>,
    m: u32,
}

impl CountVector {
    pub fn new(counts: Vec<u32>, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        if let Some(i) = counts.iter().position(|&s| s > m) {
            return Err(Error::InvalidParameter(format!(
                "count {} at row {i} exceeds m = {m}",
                counts[i]
            )));
        }
        Ok(Self { counts, m })
    }

    /// Truth labels as single-annotator counts.
    pub fn from_labels(y: &[u8]) -> Result<Self> {
        Self::new(y.iter().map(|&v| u32::from(v)).collect(), 1)
    }

    pub fn empty(m: u32) -> Self {
        Self {
            counts: Vec::new(),
            m: m.max(1),
        }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Counts as reals, the form the likelihood consumes.
    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&s| f64::from(s)).collect()
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            counts: self.counts[start..end].to_vec(),
            m: self.m,
        }
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            counts: rows.iter().map(|&i| self.counts[i]).collect(),
            m: self.m,
        }
    }

    /// `self` followed by `other`; both must share `m`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.m != other.m {
            return Err(Error::InvalidParameter(format!(
                "cannot pool counts with m = {} and m = {}",
                self.m, other.m
            )));
        }
        let mut counts = self.counts.clone();
        counts.extend_from_slice(&other.counts);
        Ok(Self { counts, m: self.m })
    }

    /// Plain-text form: a `m=<int>` header, then one count per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "m={}", self.m)?;
        for s in &self.counts {
            writeln!(out, "{s}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let m = match lines.next() {
            Some((_, line)) => {
                let line = line?;
                line.trim()
                    .strip_prefix("m=")
                    .and_then(|v| v.parse::<u32>().ok())
                    .ok_or_else(|| Error::Parse {
                        line: 1,
                        msg: format!("expected header `m=<int>`, found `{line}`"),
                    })?
            }
            None => return Err(Error::EmptyDataset),
        };
        let mut counts = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            counts.push(text.parse::<u32>().map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("bad count `{text}`: {e}"),
            })?);
        }
        Self::new(counts, m)
    }
}

/// Generator for row `row` derived from a master seed, so row-level draws do
/// not depend on iteration order or on how rows are sharded.
pub fn row_rng(seed: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}

/// Log of a `Gamma(shape, 1)` draw. Shapes below one use
/// `G(a) = G(a + 1) U^(1/a)` in log space so tiny shapes do not underflow.
fn ln_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape is positive");
        g.sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape is positive");
        let u: f64 = 1.0 - rng.random::<f64>();
        g.sample(rng).ln() + u.ln() / shape
    }
}

/// `Beta(a, b)` as `G_a / (G_a + G_b)` with independent gammas. A zero
/// shape is the point mass at the corresponding end of `[0, 1]`.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    debug_assert!(a >= 0.0 && b >= 0.0 && a + b > 0.0);
    if a == 0.0 {
        return 0.0;
    }
    if b == 0.0 {
        return 1.0;
    }
    let (la, lb) = (ln_gamma_draw(a, rng), ln_gamma_draw(b, rng));
    1.0 / (1.0 + (lb - la).exp())
}

fn binomial_draw<R: Rng + ?Sized>(m: u32, q: f64, rng: &mut R) -> u32 {
    let q = q.clamp(0.0, 1.0);
    let dist = Binomial::new(u64::from(m), q).expect("probability within [0, 1]");
    dist.sample(rng) as u32
}

/// Draw one aggregated count. `truth` is required (and only used) for the
/// [`NoiseModel::Truth`] branch.
pub fn draw_counts<R: Rng + ?Sized>(
    p: PosteriorPair,
    model: &NoiseModel,
    truth: Option<u8>,
    rng: &mut R,
) -> Result<u32> {
    match *model {
        NoiseModel::Truth => truth
            .map(u32::from)
            .ok_or(Error::MissingTruthLabel { row: 0 }),
        NoiseModel::Multinomial { m } => Ok(binomial_draw(m, p.p1(), rng)),
        NoiseModel::DirichletMultinomial { m, alpha0 } => {
            let q = sample_beta(alpha0 * p.p1(), alpha0 * p.p2(), rng);
            Ok(binomial_draw(m, q, rng))
        }
    }
}

/// Probability mass function of the count under `model` at posterior `p`,
/// indexed `0..=m`. Computed through the ratio `P(k+1)/P(k)` in log space,
/// which stays accurate for very large `alpha0`.
pub fn count_pmf(p: PosteriorPair, model: &NoiseModel) -> Vec<f64> {
    let m = model.experts() as usize;
    let point = |k: usize| {
        let mut v = vec![0.0; m + 1];
        v[k] = 1.0;
        v
    };
    if p.p1() == 0.0 {
        return point(0);
    }
    if p.p1() == 1.0 {
        return point(m);
    }
    let log_ratio: Box<dyn Fn(usize) -> f64> = match *model {
        NoiseModel::Truth | NoiseModel::Multinomial { .. } => {
            let lo = p.p1().ln() - p.p2().ln();
            Box::new(move |k| ((m - k) as f64).ln() - ((k + 1) as f64).ln() + lo)
        }
        NoiseModel::DirichletMultinomial { alpha0, .. } => {
            let (a, b) = (alpha0 * p.p1(), alpha0 * p.p2());
            Box::new(move |k| {
                ((m - k) as f64).ln() - ((k + 1) as f64).ln() + (a + k as f64).ln()
                    - (b + (m - k - 1) as f64).ln()
            })
        }
    };
    let mut logw = Vec::with_capacity(m + 1);
    logw.push(0.0);
    for k in 0..m {
        let next = logw[k] + log_ratio(k);
        logw.push(next);
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Count at quantile level `u` in `[0, 1)`: the smallest `k` whose CDF
/// exceeds `u`. Feeding the same uniform to two models couples their draws
/// monotonically while leaving each marginal law unchanged.
pub fn count_quantile(p: PosteriorPair, model: &NoiseModel, u: f64) -> u32 {
    let pmf = count_pmf(p, model);
    let mut cdf = 0.0;
    for (k, mass) in pmf.iter().enumerate() {
        cdf += mass;
        if u < cdf {
            return k as u32;
        }
    }
    // u within rounding of 1
    pmf.iter().rposition(|&v| v > 0.0).unwrap_or(0) as u32
}

/// Mean and variance of the Dirichlet-multinomial class-1 count:
/// `m p1` and `m p1 (1 - p1) (m + alpha0) / (1 + alpha0)`.
pub fn moments(m: u32, alpha0: f64, p1: f64) -> (f64, f64) {
    let mf = f64::from(m);
    (
        mf * p1,
        mf * p1 * (1.0 - p1) * (mf + alpha0) / (1.0 + alpha0),
    )
}

/// Draw counts for every row of `x` from the posteriors under `beta_ref`.
/// Row `i` uses [`row_rng`]`(seed, i)`. `truth` supplies labels for the
/// [`NoiseModel::Truth`] branch.
pub fn generate_dataset_counts(
    x: &DesignMatrix,
    beta_ref: &[f64],
    model: &NoiseModel,
    seed: u64,
    truth: Option<&[u8]>,
) -> Result<CountVector> {
    generate_counts_from_row(x, beta_ref, model, seed, truth, 0)
}

/// [`generate_dataset_counts`] for a block of rows whose first row has global
/// index `first_row`; concatenating blocks reproduces the full draw.
pub fn generate_counts_from_row(
    x: &DesignMatrix,
    beta_ref: &[f64],
    model: &NoiseModel,
    seed: u64,
    truth: Option<&[u8]>,
    first_row: usize,
) -> Result<CountVector> {
    model.validate()?;
    check_len("reference coefficient length", x.ncols(), beta_ref.len())?;
    if let Some(y) = truth {
        check_len("truth label count", x.nrows(), y.len())?;
    }
    let mut counts = Vec::with_capacity(x.nrows());
    for i in 0..x.nrows() {
        let p = PosteriorPair::from_score(x.row(i).dot(beta_ref));
        let mut rng = row_rng(seed, (first_row + i) as u64);
        let s = draw_counts(p, model, truth.map(|y| y[i]), &mut rng).map_err(|e| match e {
            Error::MissingTruthLabel { .. } => Error::MissingTruthLabel { row: first_row + i },
            other => other,
        })?;
        counts.push(s);
    }
    CountVector::new(counts, model.experts())
}

/// Counts drawn for rows whose labels are missing, tagged as imputed.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputedCounts {
    pub counts: CountVector,
    /// One flag per row; always `true` for rows produced by [`impute_missing`].
    pub imputed: Vec<bool>,
}

impl ImputedCounts {
    /// Observed counts followed by these imputed ones, with per-row flags.
    pub fn pool_after(&self, observed: &CountVector) -> Result<(CountVector, Vec<bool>)> {
        let counts = observed.concat(&self.counts)?;
        let mut flags = vec![false; observed.len()];
        flags.extend_from_slice(&self.imputed);
        Ok((counts, flags))
    }
}

/// Fill in labels for unlabeled rows by drawing counts from a fitted model.
/// Draws follow [`generate_dataset_counts`] exactly.
pub fn impute_missing(
    x_missing: &DesignMatrix,
    beta_fit: &[f64],
    model: &NoiseModel,
    seed: u64,
) -> Result<ImputedCounts> {
    if x_missing.nrows() == 0 {
        return Ok(ImputedCounts {
            counts: CountVector::empty(model.experts()),
            imputed: Vec::new(),
        });
    }
    if matches!(model, NoiseModel::Truth) {
        return Err(Error::InvalidParameter(
            "imputation draws labels from the posterior; the truth model has no labels to offer"
                .into(),
        ));
    }
    let counts = generate_dataset_counts(x_missing, beta_fit, model, seed, None)?;
    let imputed = vec![true; counts.len()];
    Ok(ImputedCounts { counts, imputed })
}
