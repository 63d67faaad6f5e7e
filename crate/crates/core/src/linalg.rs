//! Small dense matrices for per-cell thermodynamics and a banded direct solver for
//! the global systems assembled on the staggered grid.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{norm2, Scalar};

/// Square row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![S::zero(); dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from nested rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter(format!(
                "matrix rows must all have length {dim}"
            )));
        }
        Ok(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_symmetric(&self, tol: S) -> bool {
        (0..self.dim).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (self[(i, j)], self[(j, i)]);
                (a - b).abs() <= tol * S::one().max(a.abs()).max(b.abs())
            })
        })
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        (0..self.dim)
            .map(|i| (0..self.dim).fold(S::zero(), |acc, j| acc + self[(i, j)] * x[j]))
            .collect()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }
}

impl<S> Index<(usize, usize)> for DenseMatrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.dim + j]
    }
}

impl<S> IndexMut<(usize, usize)> for DenseMatrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.dim + j]
    }
}

/// Square banded matrix with `lower` sub-diagonals and `upper` super-diagonals.
///
/// Rows carry `lower` extra slots on the right so that the LU factorization with
/// partial pivoting can be done in place.
#[derive(Clone, Debug)]
pub struct BandMatrix<S> {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<S>,
}

impl<S: Scalar> BandMatrix<S> {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        let width = 2 * lower + upper + 1;
        Self {
            n,
            lower,
            upper,
            width,
            data: vec![S::zero(); n * width],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        row * self.width + (col + self.lower - row)
    }

    #[inline]
    fn in_band(&self, row: usize, col: usize) -> bool {
        col + self.lower >= row && col <= row + self.upper
    }

    /// Entry `(row, col)`; zero outside the band.
    pub fn get(&self, row: usize, col: usize) -> S {
        if self.in_band(row, col) {
            self.data[self.slot(row, col)]
        } else {
            S::zero()
        }
    }

    /// Accumulates `value` into `(row, col)`.
    ///
    /// # Panics
    /// If the entry lies outside the declared band.
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: S) {
        assert!(
            self.in_band(row, col),
            "entry ({row}, {col}) outside band (-{}, +{})",
            self.lower,
            self.upper
        );
        let k = self.slot(row, col);
        self.data[k] = self.data[k] + value;
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.lower);
                let hi = (r + self.upper).min(self.n - 1);
                (lo..=hi).fold(S::zero(), |acc, c| acc + self.data[self.slot(r, c)] * x[c])
            })
            .collect()
    }

    /// Sum of each column, used to check conservative assemblies.
    pub fn column_sums(&self) -> Vec<S> {
        let mut sums = vec![S::zero(); self.n];
        for r in 0..self.n {
            let lo = r.saturating_sub(self.lower);
            let hi = (r + self.upper).min(self.n - 1);
            for (c, s) in sums.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *s = *s + self.data[self.slot(r, c)];
            }
        }
        sums
    }

    /// LU factorization with partial pivoting.
    pub fn factor(&self) -> Result<BandLu<S>> {
        let mut a = self.clone();
        let n = self.n;
        let kl = self.lower;
        let reach = self.lower + self.upper;
        let mut pivots = vec![0usize; n];
        let mut multipliers = vec![S::zero(); n * kl.max(1)];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.data[a.slot(k, k)].abs();
            for r in k + 1..=last_row {
                let v = a.data[a.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == S::zero() || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            pivots[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let (i, j) = (a.slot(k, c), a.slot(p, c));
                    a.data.swap(i, j);
                }
            }
            let pivot = a.data[a.slot(k, k)];
            let len = last_col - k;
            let src_start = a.slot(k, k + 1);
            for r in k + 1..=last_row {
                let sr = a.slot(r, k);
                let m = a.data[sr] / pivot;
                multipliers[k * kl + (r - k - 1)] = m;
                a.data[sr] = S::zero();
                if m == S::zero() {
                    continue;
                }
                // rows are contiguous in the column index, pivot row first
                let dst_start = a.slot(r, k + 1);
                let (head, tail) = a.data.split_at_mut(r * a.width);
                let src = &head[src_start..src_start + len];
                let dst = &mut tail[dst_start - r * a.width..dst_start - r * a.width + len];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d - m * s;
                }
            }
        }
        Ok(BandLu {
            factors: a,
            pivots,
            multipliers,
        })
    }

    /// Solves `A x = b` to a relative residual of `tol`, refining the direct solution
    /// iteratively when round-off leaves it short.
    pub fn solve(&self, rhs: &[S], tol: S) -> Result<(Vec<S>, S)> {
        let lu = self.factor()?;
        let b_norm = norm2(rhs);
        let scale = if b_norm > S::zero() { b_norm } else { S::one() };
        let mut x = lu.solve(rhs);
        let mut residual = self.residual(&x, rhs);
        let mut rel = norm2(&residual) / scale;
        for _ in 0..4 {
            if rel <= tol {
                break;
            }
            let dx = lu.solve(&residual);
            let trial: Vec<S> = x.iter().zip(&dx).map(|(&a, &d)| a + d).collect();
            let trial_residual = self.residual(&trial, rhs);
            let trial_rel = norm2(&trial_residual) / scale;
            if trial_rel >= rel {
                break;
            }
            x = trial;
            residual = trial_residual;
            rel = trial_rel;
        }
        if !(rel <= tol) {
            return Err(Error::Singular(format!(
                "relative residual {:e} above tolerance {:e}",
                rel.to_f64_lossy(),
                tol.to_f64_lossy()
            )));
        }
        Ok((x, rel))
    }

    fn residual(&self, x: &[S], rhs: &[S]) -> Vec<S> {
        self.mul_vec(x).into_iter().zip(rhs).map(|(ax, &b)| b - ax).collect()
    }
}

/// In-place banded LU factors.
#[derive(Clone, Debug)]
pub struct BandLu<S> {
    factors: BandMatrix<S>,
    pivots: Vec<usize>,
    multipliers: Vec<S>,
}

impl<S: Scalar> BandLu<S> {
    pub fn solve(&self, rhs: &[S]) -> Vec<S> {
        let a = &self.factors;
        let n = a.n;
        let kl = a.lower;
        let reach = a.lower + a.upper;
        let mut x = rhs.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                x[r] = x[r] - self.multipliers[k * kl + (r - k - 1)] * xk;
            }
        }
        for k in (0..n).rev() {
            let last = (k + reach).min(n - 1);
            let start = a.slot(k, k + 1);
            let row = &a.data[start..start + (last - k)];
            let acc = row
                .iter()
                .zip(&x[k + 1..=last])
                .fold(x[k], |acc, (&v, &xc)| acc - v * xc);
            x[k] = acc / a.data[a.slot(k, k)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())
                .unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for r in k + 1..n {
                let f = m[r][k] / m[k][k];
                for c in k..n {
                    m[r][c] -= f * m[k][c];
                }
                x[r] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|c| m[k][c] * x[c]).sum();
            x[k] = (x[k] - s) / m[k][k];
        }
        x
    }

    #[test]
    fn band_solve_matches_dense_elimination_with_pivoting() {
        let n = 30;
        let (kl, ku) = (3, 2);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = vec![vec![0.0; n]; n];
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                // weak diagonal forces row exchanges
                let v = if r == c { 0.01 * next() } else { next() };
                band.add(r, c, v);
                dense[r][c] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, rel) = band.solve(&b, 1e-12).unwrap();
        let reference = dense_solve(&dense, &b);
        for (a, e) in x.iter().zip(&reference) {
            assert!((a - e).abs() <= 1e-9 * e.abs().max(1.0), "{a} vs {e}");
        }
        assert!(rel <= 1e-12);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let band = BandMatrix::<f64>::zeros(4, 1, 1);
        assert!(matches!(band.factor(), Err(Error::Singular(_))));
    }

    #[test]
    #[should_panic(expected = "outside band")]
    fn entries_outside_band_are_rejected() {
        let mut band = BandMatrix::<f64>::zeros(5, 1, 1);
        band.add(0, 3, 1.0);
    }

    #[test]
    fn column_sums_of_tridiagonal() {
        let mut band = BandMatrix::<f64>::zeros(3, 1, 1);
        for i in 0..3 {
            band.add(i, i, 2.0);
            if i > 0 {
                band.add(i, i - 1, -1.0);
                band.add(i - 1, i, -1.0);
            }
        }
        assert_eq!(band.column_sums(), vec![1.0, 0.0, 1.0]);
    }
}
