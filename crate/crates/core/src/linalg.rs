//! Dense and compressed-sparse-row design matrices with the handful of
//! products the solvers need, plus a power-iteration bound on the spectral
//! norm of `mu * X'X`.
//!
//! Matrices are immutable after construction and can be shared across worker
//! threads. Row shards are produced with [`DesignMatrix::slice_rows`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    /// Row-major values, `nrows * ncols` long.
    Dense(Vec<f64>),
    /// CSR: `offsets[i]..offsets[i + 1]` indexes row `i` in `indices`/`values`.
    Sparse {
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

/// An `n x d` feature matrix, stored dense row-major or CSR.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    nrows: usize,
    ncols: usize,
    storage: Storage,
}

/// Borrowed view of one matrix row.
#[derive(Clone, Copy, Debug)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse(&'a [usize], &'a [f64]),
}

impl<'a> Row<'a> {
    /// Inner product with a length-`d` vector.
    #[inline]
    pub fn dot(&self, v: &[f64]) -> f64 {
        match *self {
            Row::Dense(vals) => vals.iter().zip(v).map(|(a, b)| a * b).sum(),
            Row::Sparse(idx, vals) => idx.iter().zip(vals).map(|(&j, a)| a * v[j]).sum(),
        }
    }

    /// `out += alpha * row`.
    #[inline]
    pub fn axpy(&self, alpha: f64, out: &mut [f64]) {
        match *self {
            Row::Dense(vals) => {
                for (o, a) in out.iter_mut().zip(vals) {
                    *o += alpha * a;
                }
            }
            Row::Sparse(idx, vals) => {
                for (&j, a) in idx.iter().zip(vals) {
                    out[j] += alpha * a;
                }
            }
        }
    }

    /// Nonzero-aware iteration over `(column, value)`.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (usize, f64)> + 'a> {
        match *self {
            Row::Dense(vals) => Box::new(vals.iter().copied().enumerate()),
            Row::Sparse(idx, vals) => Box::new(idx.iter().copied().zip(vals.iter().copied())),
        }
    }
}

impl DesignMatrix {
    /// Dense matrix from row-major values.
    pub fn from_dense(nrows: usize, ncols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nrows * ncols {
            return Err(Error::InvalidMatrix(format!(
                "{} values for a {nrows}x{ncols} matrix",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry at row {}, column {}",
                bad / ncols.max(1),
                bad % ncols.max(1)
            )));
        }
        Ok(Self {
            nrows,
            ncols,
            storage: Storage::Dense(values),
        })
    }

    /// Dense matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {ncols}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_dense(rows.len(), ncols, values)
    }

    /// CSR matrix. Column indices must be strictly increasing within each row.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if offsets.len() != nrows + 1 {
            return Err(Error::InvalidMatrix(format!(
                "offsets length {} for {nrows} rows",
                offsets.len()
            )));
        }
        if offsets[0] != 0 || offsets[nrows] != values.len() || indices.len() != values.len() {
            return Err(Error::InvalidMatrix(
                "offsets inconsistent with the number of stored entries".into(),
            ));
        }
        for i in 0..nrows {
            let (a, b) = (offsets[i], offsets[i + 1]);
            if b < a {
                return Err(Error::InvalidMatrix(format!("decreasing offsets at row {i}")));
            }
            let row = &indices[a..b];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidMatrix(format!(
                    "column indices not strictly increasing in row {i}"
                )));
            }
            if row.last().is_some_and(|&j| j >= ncols) {
                return Err(Error::InvalidMatrix(format!(
                    "column index out of range in row {i}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite stored value".into()));
        }
        Ok(Self {
            nrows,
            ncols,
            storage: Storage::Sparse {
                offsets,
                indices,
                values,
            },
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self {
            nrows: n,
            ncols: n,
            storage: Storage::Dense(values),
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            storage: Storage::Dense(vec![0.0; nrows * ncols]),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    /// Number of stored entries (all entries for dense storage).
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(v) => v.len(),
            Storage::Sparse { values, .. } => values.len(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.storage {
            Storage::Dense(v) => Row::Dense(&v[i * self.ncols..(i + 1) * self.ncols]),
            Storage::Sparse {
                offsets,
                indices,
                values,
            } => {
                let (a, b) = (offsets[i], offsets[i + 1]);
                Row::Sparse(&indices[a..b], &values[a..b])
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.row(i) {
            Row::Dense(vals) => vals[j],
            Row::Sparse(idx, vals) => idx.binary_search(&j).map_or(0.0, |k| vals[k]),
        }
    }

    /// Densified copy.
    pub fn to_dense(&self) -> Self {
        let mut values = vec![0.0; self.nrows * self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i).iter() {
                values[i * self.ncols + j] = v;
            }
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            storage: Storage::Dense(values),
        }
    }

    /// CSR copy holding only the nonzero entries.
    pub fn to_sparse(&self) -> Self {
        let mut offsets = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for i in 0..self.nrows {
            for (j, v) in self.row(i).iter() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            offsets.push(values.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            storage: Storage::Sparse {
                offsets,
                indices,
                values,
            },
        }
    }

    /// Rows as dense vectors.
    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows)
            .map(|i| {
                let mut row = vec![0.0; self.ncols];
                for (j, v) in self.row(i).iter() {
                    row[j] = v;
                }
                row
            })
            .collect()
    }

    /// Owned copy of rows `start..end`, in the same storage format.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.nrows, "row range out of bounds");
        let storage = match &self.storage {
            Storage::Dense(v) => Storage::Dense(v[start * self.ncols..end * self.ncols].to_vec()),
            Storage::Sparse {
                offsets,
                indices,
                values,
            } => {
                let (a, b) = (offsets[start], offsets[end]);
                Storage::Sparse {
                    offsets: offsets[start..=end].iter().map(|o| o - a).collect(),
                    indices: indices[a..b].to_vec(),
                    values: values[a..b].to_vec(),
                }
            }
        };
        Self {
            nrows: end - start,
            ncols: self.ncols,
            storage,
        }
    }

    /// Owned copy of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let storage = match &self.storage {
            Storage::Dense(v) => {
                let mut out = Vec::with_capacity(rows.len() * self.ncols);
                for &i in rows {
                    out.extend_from_slice(&v[i * self.ncols..(i + 1) * self.ncols]);
                }
                Storage::Dense(out)
            }
            Storage::Sparse {
                offsets,
                indices,
                values,
            } => {
                let mut new_offsets = Vec::with_capacity(rows.len() + 1);
                let mut new_indices = Vec::new();
                let mut new_values = Vec::new();
                new_offsets.push(0);
                for &i in rows {
                    let (a, b) = (offsets[i], offsets[i + 1]);
                    new_indices.extend_from_slice(&indices[a..b]);
                    new_values.extend_from_slice(&values[a..b]);
                    new_offsets.push(new_values.len());
                }
                Storage::Sparse {
                    offsets: new_offsets,
                    indices: new_indices,
                    values: new_values,
                }
            }
        };
        Self {
            nrows: rows.len(),
            ncols: self.ncols,
            storage,
        }
    }

    /// Owned copy of the given columns, in the given order. Indices must be
    /// distinct and in range.
    pub fn select_cols(&self, cols: &[usize]) -> Result<Self> {
        let mut position = vec![usize::MAX; self.ncols];
        for (k, &j) in cols.iter().enumerate() {
            if j >= self.ncols || position[j] != usize::MAX {
                return Err(Error::InvalidMatrix(format!(
                    "column {j} is out of range or repeated"
                )));
            }
            position[j] = k;
        }
        let k = cols.len();
        match &self.storage {
            Storage::Dense(v) => {
                let mut out = Vec::with_capacity(self.nrows * k);
                for i in 0..self.nrows {
                    let row = &v[i * self.ncols..(i + 1) * self.ncols];
                    out.extend(cols.iter().map(|&j| row[j]));
                }
                Self::from_dense(self.nrows, k, out)
            }
            Storage::Sparse {
                offsets,
                indices,
                values,
            } => {
                let mut new_offsets = Vec::with_capacity(self.nrows + 1);
                let mut new_indices = Vec::new();
                let mut new_values = Vec::new();
                new_offsets.push(0);
                for i in 0..self.nrows {
                    let mut row: Vec<(usize, f64)> = (offsets[i]..offsets[i + 1])
                        .filter(|&p| position[indices[p]] != usize::MAX)
                        .map(|p| (position[indices[p]], values[p]))
                        .collect();
                    row.sort_by_key(|e| e.0);
                    for (j, v) in row {
                        new_indices.push(j);
                        new_values.push(v);
                    }
                    new_offsets.push(new_values.len());
                }
                Self::from_csr(self.nrows, k, new_offsets, new_indices, new_values)
            }
        }
    }

    /// Stack `other` below `self`. The result is sparse if either input is.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        check_len("vstack column count", self.ncols, other.ncols)?;
        match (&self.storage, &other.storage) {
            (Storage::Dense(a), Storage::Dense(b)) => {
                let mut values = a.clone();
                values.extend_from_slice(b);
                Ok(Self {
                    nrows: self.nrows + other.nrows,
                    ncols: self.ncols,
                    storage: Storage::Dense(values),
                })
            }
            _ => {
                let (top, bottom) = (self.to_sparse(), other.to_sparse());
                let (Storage::Sparse { offsets: o1, indices: i1, values: v1 },
                     Storage::Sparse { offsets: o2, indices: i2, values: v2 }) =
                    (top.storage, bottom.storage)
                else {
                    unreachable!("to_sparse returns CSR storage")
                };
                let shift = v1.len();
                let mut offsets = o1;
                offsets.extend(o2.iter().skip(1).map(|o| o + shift));
                let mut indices = i1;
                indices.extend(i2);
                let mut values = v1;
                values.extend(v2);
                Ok(Self {
                    nrows: self.nrows + other.nrows,
                    ncols: self.ncols,
                    storage: Storage::Sparse {
                        offsets,
                        indices,
                        values,
                    },
                })
            }
        }
    }

    /// Copy with a trailing all-ones column.
    pub fn with_intercept(&self) -> Self {
        let d = self.ncols + 1;
        match &self.storage {
            Storage::Dense(v) => {
                let mut values = Vec::with_capacity(self.nrows * d);
                for row in v.chunks(self.ncols.max(1)).take(self.nrows) {
                    values.extend_from_slice(&row[..self.ncols]);
                    values.push(1.0);
                }
                if self.ncols == 0 {
                    values = vec![1.0; self.nrows];
                }
                Self {
                    nrows: self.nrows,
                    ncols: d,
                    storage: Storage::Dense(values),
                }
            }
            Storage::Sparse {
                offsets,
                indices,
                values,
            } => {
                let mut new_offsets = Vec::with_capacity(self.nrows + 1);
                let mut new_indices = Vec::with_capacity(indices.len() + self.nrows);
                let mut new_values = Vec::with_capacity(values.len() + self.nrows);
                new_offsets.push(0);
                for i in 0..self.nrows {
                    let (a, b) = (offsets[i], offsets[i + 1]);
                    new_indices.extend_from_slice(&indices[a..b]);
                    new_values.extend_from_slice(&values[a..b]);
                    new_indices.push(self.ncols);
                    new_values.push(1.0);
                    new_offsets.push(new_values.len());
                }
                Self {
                    nrows: self.nrows,
                    ncols: d,
                    storage: Storage::Sparse {
                        offsets: new_offsets,
                        indices: new_indices,
                        values: new_values,
                    },
                }
            }
        }
    }

    /// `X beta`.
    pub fn matvec(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_len("matvec vector length", self.ncols, beta.len())?;
        let mut out = vec![0.0; self.nrows];
        self.matvec_into(beta, &mut out);
        Ok(out)
    }

    /// `out = X beta`, with lengths checked only in debug builds.
    #[inline]
    pub fn matvec_into(&self, beta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(beta.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).dot(beta);
        }
    }

    /// `X' z`.
    pub fn tmatvec(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("tmatvec vector length", self.nrows, z.len())?;
        let mut out = vec![0.0; self.ncols];
        self.tmatvec_into(z, &mut out);
        Ok(out)
    }

    /// `out = X' z`, accumulating rows in ascending order.
    #[inline]
    pub fn tmatvec_into(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &zi) in z.iter().enumerate() {
            if zi != 0.0 {
                self.row(i).axpy(zi, out);
            }
        }
    }

    /// `X'X v`.
    pub fn gram_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let xv = self.matvec(v)?;
        self.tmatvec(&xv)
    }
}

/// Power-iteration estimate of the largest eigenvalue of `mu X'X`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralEstimate {
    /// Safety factor times the final Rayleigh quotient.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Tuning knobs for [`estimate_eta`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtaOptions {
    /// Relative change of the Rayleigh quotient that counts as converged.
    pub tol: f64,
    /// Multiplier (at least 1) applied to the converged estimate.
    pub safety: f64,
    pub max_iter: usize,
    /// Seed of the random unit start vector.
    pub seed: u64,
}

impl Default for EtaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            safety: 1.01,
            max_iter: 1000,
            seed: 0x5eed_e7a,
        }
    }
}

/// Estimate `eta >= lambda_max(mu X'X)` by power iteration on
/// `v -> mu X'(X v)` from a seeded random unit vector.
///
/// Non-convergence is not an error: the best estimate is returned with
/// `converged = false` and the caller may raise the safety factor.
pub fn estimate_eta(x: &DesignMatrix, mu: f64, opts: &EtaOptions) -> Result<SpectralEstimate> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "power-iteration tol must lie in (0, 1), got {}",
            opts.tol
        )));
    }
    if !(opts.safety >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "safety factor must be at least 1, got {}",
            opts.safety
        )));
    }
    let d = x.ncols();
    if d == 0 || x.nrows() == 0 {
        return Ok(SpectralEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    normalize(&mut v);

    let mut xv = vec![0.0; x.nrows()];
    let mut w = vec![0.0; d];
    let mut previous = f64::NAN;
    let mut quotient = 0.0;
    for iter in 1..=opts.max_iter {
        x.matvec_into(&v, &mut xv);
        x.tmatvec_into(&xv, &mut w);
        w.iter_mut().for_each(|wi| *wi *= mu);
        quotient = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let norm = normalize(&mut w);
        if norm == 0.0 {
            // v lies in the null space; X'X = 0 unless the start was unlucky,
            // which a random Gaussian start rules out almost surely.
            return Ok(SpectralEstimate {
                value: 0.0,
                iterations: iter,
                converged: true,
            });
        }
        std::mem::swap(&mut v, &mut w);
        if previous.is_finite() && (quotient - previous).abs() <= opts.tol * quotient.abs() {
            return Ok(SpectralEstimate {
                value: opts.safety * quotient,
                iterations: iter,
                converged: true,
            });
        }
        previous = quotient;
    }
    Ok(SpectralEstimate {
        value: opts.safety * quotient,
        iterations: opts.max_iter,
        converged: false,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
    norm
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
