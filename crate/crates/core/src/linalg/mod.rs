//! Dense row-major matrices and the handful of kernels the filter needs.
//!
//! All kernels accumulate in a fixed left-to-right order so that results are
//! bit-reproducible.

mod rng;

pub use rng::{seeded_gaussian, RngState};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Zero-vector threshold for cosine similarity and normalization.
pub const EPS_NORM: f64 = 1e-12;

/// Row-major `rows x cols` matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major values. Rejects empty shapes, length
    /// mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Matrix::new",
                expected: alloc::format!("{} values", rows * cols),
                found: alloc::format!("{} values", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("ragged rows"));
        }
        Matrix::new(n, m, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Internal constructor for values produced by finite arithmetic.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(u: &[f64]) -> f64 {
    libm::sqrt(dot(u, u))
}

/// `a · b`. The inner loop runs over `k` in increasing order for every output
/// entry.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::dims("matmul", (a.cols, b.cols), (b.rows, b.cols)));
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &aip) in arow.iter().enumerate().take(k) {
            let brow = b.row(p);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Matrix::from_parts(n, m, out))
}

/// Numerically stable softmax of a single row, written into `out`.
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = libm::exp(v - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log Σ exp(v)` with max-shift.
pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

pub fn row_softmax(z: &Matrix) -> Result<Matrix> {
    if !z.is_finite() {
        return Err(Error::NonFinite("row_softmax"));
    }
    let mut out = Matrix::zeros(z.rows, z.cols);
    for i in 0..z.rows {
        softmax_into(z.row(i), out.row_mut(i));
    }
    Ok(out)
}

/// Cosine similarity clamped to `[-1, 1]`. Either vector with norm at or below
/// [`EPS_NORM`] is rejected.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::dims("cosine_sim", (1, u.len()), (1, v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if !(nu > EPS_NORM && nv > EPS_NORM) {
        return Err(Error::DegenerateVector("cosine_sim"));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Unit vector in the direction of `u`.
pub fn normalized(u: &[f64], context: &'static str) -> Result<Vec<f64>> {
    let n = norm(u);
    if !(n > EPS_NORM) {
        return Err(Error::DegenerateVector(context));
    }
    Ok(u.iter().map(|v| v / n).collect())
}

/// Modified Gram–Schmidt with one re-orthogonalization pass per row.
///
/// A row whose residual after projection is below `1e-10` times its original
/// norm is treated as linearly dependent.
pub fn orthonormalize(v: &Matrix) -> Result<Matrix> {
    let (k, d) = v.shape();
    if k > d {
        return Err(Error::DegenerateInput(alloc::format!(
            "cannot orthonormalize {k} rows in dimension {d}"
        )));
    }
    let mut out = v.clone();
    for i in 0..k {
        let original = norm(v.row(i));
        for _pass in 0..2 {
            for j in 0..i {
                let (done, rest) = out.data.split_at_mut(i * d);
                let q = &done[j * d..(j + 1) * d];
                let r = &mut rest[..d];
                let c = dot(q, r);
                for (x, &qv) in r.iter_mut().zip(q) {
                    *x -= c * qv;
                }
            }
        }
        let row = out.row_mut(i);
        let n = norm(row);
        if !(n > 1e-10 * original) || !(n > EPS_NORM) {
            return Err(Error::DegenerateInput(alloc::format!(
                "row {i} is linearly dependent on earlier rows"
            )));
        }
        for x in row.iter_mut() {
            *x /= n;
        }
    }
    Ok(out)
}
