//! Minimal dense matrices for the Kalman recursions and Gaussian proposals.
//!
//! Dimensions here are small (state and parameter dimensions), so a plain
//! row-major `Vec` is sufficient.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_diag(d: &[F]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[&[F]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_f64_rows(rows: &[&[f64]]) -> Self {
        let conv: Vec<Vec<F>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| F::lit(x)).collect())
            .collect();
        let refs: Vec<&[F]> = conv.iter().map(|r| r.as_slice()).collect();
        Self::from_rows(&refs)
    }

    pub fn column(v: &[F]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == F::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: F) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(F, F) -> F) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn trace(&self) -> F {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrize(&self) -> Self {
        let half = F::lit(0.5);
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Lower Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Result<Self> {
        self.cholesky_impl(false)
    }

    /// Cholesky factor tolerating zero pivots (positive semidefinite input);
    /// columns with a zero pivot are left at zero.
    pub fn cholesky_psd(&self) -> Result<Self> {
        self.cholesky_impl(true)
    }

    fn cholesky_impl(&self, allow_singular: bool) -> Result<Self> {
        assert_eq!(self.rows, self.cols, "cholesky of non-square matrix");
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        let scale = (0..n).map(|i| self[(i, i)].abs()).fold(F::zero(), F::max);
        let tol = scale * F::epsilon() * F::from_count(n.max(1)) * F::lit(16.0);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > F::zero()) || d.is_nan() {
                if allow_singular && d.abs() <= tol.max(F::min_positive_value()) {
                    continue;
                }
                return Err(Error::Numerical(format!(
                    "cholesky: matrix not positive definite (pivot {j} = {d})"
                )));
            }
            let dj = d.sqrt();
            l[(j, j)] = dj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dj;
            }
        }
        Ok(l)
    }

    /// Solves `L x = b` for lower-triangular `L`.
    pub fn solve_lower(&self, b: &[F]) -> Vec<F> {
        let n = self.rows;
        let mut x = vec![F::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self[(i, k)] * x[k];
            }
            x[i] = s / self[(i, i)];
        }
        x
    }

    /// Solves `L^T x = b` for lower-triangular `L`.
    pub fn solve_lower_transpose(&self, b: &[F]) -> Vec<F> {
        let n = self.rows;
        let mut x = vec![F::zero(); n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self[(k, i)] * x[k];
            }
            x[i] = s / self[(i, i)];
        }
        x
    }

    /// Inverse of a symmetric positive definite matrix via Cholesky.
    pub fn spd_inverse(&self) -> Result<Self> {
        let l = self.cholesky()?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        let mut e = vec![F::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = F::zero());
            e[j] = F::one();
            let y = l.solve_lower(&e);
            let x = l.solve_lower_transpose(&y);
            for i in 0..n {
                inv[(i, j)] = x[i];
            }
        }
        Ok(inv.symmetrize())
    }

    /// `log det` from a lower Cholesky factor.
    pub fn chol_log_det(l: &Self) -> F {
        let two = F::lit(2.0);
        (0..l.rows).map(|i| two * l[(i, i)].ln()).sum()
    }
}

impl<F> Index<(usize, usize)> for Matrix<F> {
    type Output = F;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F> IndexMut<(usize, usize)> for Matrix<F> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

/// Log-density of `N(mean, cov)` at `x`, given the lower Cholesky factor of
/// `cov`.
pub fn mvn_logpdf_chol<F: Real>(x: &[F], mean: &[F], chol: &Matrix<F>) -> F {
    let d = x.len();
    if d == 0 {
        return F::zero();
    }
    let diff: Vec<F> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    let z = chol.solve_lower(&diff);
    let q: F = z.iter().map(|&v| v * v).sum();
    let half = F::lit(0.5);
    -half * (F::from_count(d) * (F::TAU()).ln() + Matrix::chol_log_det(chol) + q)
}
