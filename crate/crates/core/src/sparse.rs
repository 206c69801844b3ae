//! Compressed sparse row matrices.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use rayon::prelude::*;

/// Field element of a sparse matrix: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn norm_sqr(self) -> f64;
    fn re(self) -> f64;
    fn scale(self, s: f64) -> Self;
    fn into_complex(self) -> Complex64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn re(self) -> f64 {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn into_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn into_complex(self) -> Complex64 {
        self
    }
}

const PAR_ROWS: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows).map(|r| self.get(r, r)).collect()
    }

    /// `y = A x`.
    pub fn mul_vec_into<X>(&self, x: &[X], y: &mut [X])
    where
        X: Scalar,
        T: Into<X>,
    {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let row = |r: usize| {
            let (cols, vals) = self.row(r);
            let mut s = X::zero();
            for (c, v) in cols.iter().zip(vals) {
                s += (*v).into() * x[*c];
            }
            s
        };
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = row(r));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = row(r);
            }
        }
    }

    pub fn mul_vec<X>(&self, x: &[X]) -> Vec<X>
    where
        X: Scalar,
        T: Into<X>,
    {
        let mut y = vec![X::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Scales row `r` by `left[r]` and column `c` by `right[c]`.
    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.values[k] = self.values[k].scale(left[r] * right[self.indices[k]]);
            }
        }
        out
    }

    pub fn conj_transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                trip.push((*c, r, v.conj()));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    /// Sum of two matrices of equal shape.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for m in [self, other] {
            for r in 0..m.nrows {
                let (cols, vals) = m.row(r);
                trip.extend(cols.iter().zip(vals).map(|(c, v)| (r, *c, *v)));
            }
        }
        Self::from_triplets(self.nrows, self.ncols, trip)
    }

    /// Largest absolute entry of `A - B`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let neg = other.map(|v| -v);
        self.add(&neg).values.iter().fold(0.0, |m, v| m.max(v.norm_sqr().sqrt()))
    }

    /// Converts to a dense row-major matrix.
    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.nrows * self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                d[r * self.ncols + c] = *v;
            }
        }
        d
    }

    /// True if every entry has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.into_complex().im == 0.0)
    }
}
