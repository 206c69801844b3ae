use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::profile::{envelope_size, rcm_order, ProfileCholesky};
use super::{hermitian_part, scaled_operator};
use crate::operator::DiscretizedHamiltonian;
use crate::sparse::{CsrMatrix, Scalar};
use crate::states::WaveFunction;

/// Lowest eigenpairs, ascending.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal under the operator's weights.
    pub eigenvectors: Vec<WaveFunction>,
    /// `|H psi - E psi|_w` per pair.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("requested {k} eigenpairs of a {n}-dimensional problem")]
    InvalidCount { k: usize, n: usize },
    #[error("operator is time dependent")]
    TimeDependent,
    #[error("operator is not Hermitian under its weights (relative defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("{converged} of {requested} eigenpairs converged; residuals {residuals:?}")]
    NoConvergence { converged: usize, requested: usize, residuals: Vec<f64> },
}

/// Restriction to the `sign` eigenspace of an involutive permutation of grid
/// points, such as particle exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    perm: Vec<usize>,
    sign: f64,
}

impl Sector {
    /// Panics unless `perm` is an involution and `sign` is ±1.
    pub fn new(perm: Vec<usize>, sign: f64) -> Self {
        assert!(sign == 1.0 || sign == -1.0, "sector sign must be ±1");
        assert!(perm.iter().enumerate().all(|(i, &j)| j < perm.len() && perm[j] == i), "permutation is not an involution");
        Self { perm, sign }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    /// `x <- (x + sign x∘perm) / 2`.
    pub fn project<T: Scalar>(&self, x: &mut [T]) {
        let src = x.to_vec();
        for (i, v) in x.iter_mut().enumerate() {
            *v = (src[i] + src[self.perm[i]].scale(self.sign)).scale(0.5);
        }
    }

    /// Number of independent vectors in the sector.
    pub fn dimension(&self) -> usize {
        let fixed = self.perm.iter().enumerate().filter(|(i, j)| i == *j).count();
        let pairs = (self.perm.len() - fixed) / 2;
        pairs + if self.sign > 0.0 { fixed } else { 0 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub seed: u64,
    /// Problems with fewer unknowns are diagonalized densely.
    pub dense_threshold: usize,
    pub sector: Option<Sector>,
    /// Lanczos restarts before giving up.
    pub max_rounds: usize,
    /// Largest envelope for which shift-invert is used.
    pub max_envelope: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { seed: 0, dense_threshold: 1024, sector: None, max_rounds: 40, max_envelope: 60_000_000 }
    }
}

pub fn lowest_eigenpairs(h: &DiscretizedHamiltonian, k: usize, tol: f64) -> Result<EigenResult, EigenError> {
    lowest_eigenpairs_with(h, k, tol, &EigenOptions::default())
}

pub fn lowest_eigenpairs_with(
    h: &DiscretizedHamiltonian,
    k: usize,
    tol: f64,
    opts: &EigenOptions,
) -> Result<EigenResult, EigenError> {
    let n = h.len();
    if h.time_dependent() {
        return Err(EigenError::TimeDependent);
    }
    let avail = opts.sector.as_ref().map_or(n, |s| {
        assert_eq!(s.perm.len(), n, "sector size does not match operator");
        s.dimension()
    });
    if k == 0 || k >= avail {
        return Err(EigenError::InvalidCount { k, n: avail });
    }
    let (b, sw, defect) = scaled_operator(h);
    if defect > 1e-10 {
        return Err(EigenError::NotHermitian { defect });
    }
    let b = hermitian_part(&b);
    let dense = n < opts.dense_threshold;
    let pairs = if b.is_real() {
        let br = b.map(|v| v.re);
        let (vals, vecs, res) = if dense {
            dense_lowest(&br, k, opts.sector.as_ref())
        } else {
            sparse_lowest(&br, k, tol, avail, opts)?
        };
        (vals, vecs.into_iter().map(|v| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect()).collect(), res)
    } else if dense {
        dense_lowest(&b, k, opts.sector.as_ref())
    } else {
        sparse_lowest(&b, k, tol, avail, opts)?
    };
    let (eigenvalues, vectors, residuals): (Vec<f64>, Vec<Vec<Complex64>>, Vec<f64>) = pairs;
    if residuals.iter().any(|r| !(*r <= tol)) {
        return Err(EigenError::NoConvergence {
            converged: residuals.iter().filter(|r| **r <= tol).count(),
            requested: k,
            residuals,
        });
    }
    let eigenvectors = vectors
        .into_iter()
        .map(|mut x| {
            fix_phase(&mut x);
            WaveFunction::new(x.iter().zip(&sw).map(|(v, s)| v / *s).collect())
        })
        .collect();
    Ok(EigenResult { eigenvalues, eigenvectors, residuals })
}

/// Rotates so that the largest component is real and positive.
fn fix_phase(x: &mut [Complex64]) {
    let big = x.iter().copied().fold(Complex64::new(0.0, 0.0), |m, v| if v.norm_sqr() > m.norm_sqr() { v } else { m });
    if big.norm_sqr() > 0.0 {
        let rot = big.conj() / big.norm();
        for v in x.iter_mut() {
            *v *= rot;
        }
    }
}

trait Field: Scalar + ComplexField<RealField = f64> {}
impl<T: Scalar + ComplexField<RealField = f64>> Field for T {}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += x.conj() * *y;
    }
    s
}

fn vnorm<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (a, b) in x.iter().zip(y.iter_mut()) {
        *b += alpha * *a;
    }
}

/// Rayleigh quotient and residual norm of a unit vector.
fn rayleigh<T: Scalar>(b: &CsrMatrix<T>, x: &[T]) -> (f64, f64) {
    let bx = b.mul_vec(x);
    let lam = dot(x, &bx).re();
    let r = bx.iter().zip(x).map(|(u, v)| (*u - v.scale(lam)).norm_sqr()).sum::<f64>().sqrt();
    (lam, r)
}

type Pairs<T> = (Vec<f64>, Vec<Vec<T>>, Vec<f64>);

fn dense_lowest<T: Field>(b: &CsrMatrix<T>, k: usize, sector: Option<&Sector>) -> Pairs<T> {
    let n = b.nrows();
    // orthonormal basis of the sector: (index, coefficient) lists
    let basis: Vec<Vec<(usize, f64)>> = match sector {
        None => (0..n).map(|i| vec![(i, 1.0)]).collect(),
        Some(s) => (0..n)
            .filter_map(|i| {
                let j = s.perm[i];
                if i < j {
                    let c = std::f64::consts::FRAC_1_SQRT_2;
                    Some(vec![(i, c), (j, s.sign * c)])
                } else if i == j && s.sign > 0.0 {
                    Some(vec![(i, 1.0)])
                } else {
                    None
                }
            })
            .collect(),
    };
    let m = basis.len();
    let mut owner = vec![Vec::new(); n];
    for (a, q) in basis.iter().enumerate() {
        for &(r, c) in q {
            owner[r].push((a, c));
        }
    }
    let mut red = DMatrix::<T>::zeros(m, m);
    for (a, q) in basis.iter().enumerate() {
        // row a of Q^H B Q = sum over the support of q_a of rows of B
        for &(r, c) in q {
            let (cols, vals) = b.row(r);
            for (col, v) in cols.iter().zip(vals) {
                for &(bi, cb) in &owner[*col] {
                    red[(a, bi)] += Scalar::scale(*v, c * cb);
                }
            }
        }
    }
    let eig = SymmetricEigen::new(red);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut vals = Vec::with_capacity(k);
    let mut vecs = Vec::with_capacity(k);
    let mut res = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut x = vec![<T as Scalar>::zero(); n];
        for (a, q) in basis.iter().enumerate() {
            let s = eig.eigenvectors[(a, c)];
            for &(r, cf) in q {
                x[r] += Scalar::scale(s, cf);
            }
        }
        let nx = vnorm(&x);
        for v in &mut x {
            *v = Scalar::scale(*v, 1.0 / nx);
        }
        let (lam, r) = rayleigh(b, &x);
        vals.push(lam);
        vecs.push(x);
        res.push(r);
    }
    (vals, vecs, res)
}

/// The operator whose largest eigenvalues Lanczos extracts.
enum Spectral<'a, T> {
    /// `(B - sigma)^{-1}` for a shift below the spectrum
    ShiftInvert(ProfileCholesky<T>),
    /// `-B`
    Negated(&'a CsrMatrix<T>),
}

impl<T: Scalar> Spectral<'_, T> {
    fn apply(&self, x: &[T]) -> Vec<T> {
        match self {
            Spectral::ShiftInvert(chol) => chol.solve(x),
            Spectral::Negated(b) => b.mul_vec(x).into_iter().map(|v| -v).collect(),
        }
    }

    fn inverted(&self) -> bool {
        matches!(self, Spectral::ShiftInvert(_))
    }

    fn steps(&self, need: usize) -> usize {
        match self {
            Spectral::ShiftInvert(_) => (2 * need + 24).max(40),
            Spectral::Negated(_) => (4 * need + 100).max(160),
        }
    }
}

struct Workspace<'a, T> {
    locked: Vec<(f64, Vec<T>, f64)>,
    sector: Option<&'a Sector>,
}

impl<T: Scalar> Workspace<'_, T> {
    fn project(&self, x: &mut [T]) {
        if let Some(s) = self.sector {
            s.project(x);
        }
    }

    /// Twice-iterated classical Gram–Schmidt against locked vectors and `basis`.
    fn orthogonalize(&self, x: &mut [T], basis: &[Vec<T>]) {
        for _ in 0..2 {
            for q in self.locked.iter().map(|l| &l.1).chain(basis.iter()) {
                let c = dot(q, x);
                axpy(-c, q, x);
            }
        }
    }
}

/// Lanczos basis and tridiagonal coefficients; `betas[j]` couples `j` and `j+1`.
fn lanczos<T: Scalar>(
    op: impl Fn(&[T]) -> Vec<T>,
    ws: &Workspace<'_, T>,
    mut v: Vec<T>,
    steps: usize,
) -> (Vec<Vec<T>>, Vec<f64>, Vec<f64>) {
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(steps + 1);
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    ws.project(&mut v);
    ws.orthogonalize(&mut v, &[]);
    let nv = vnorm(&v);
    if nv == 0.0 {
        return (basis, alphas, betas);
    }
    v.iter_mut().for_each(|x| *x = x.scale(1.0 / nv));
    basis.push(v);
    let mut scale: f64 = 0.0;
    for j in 0..steps {
        let mut w = op(&basis[j]);
        ws.project(&mut w);
        let a = dot(&basis[j], &w).re();
        alphas.push(a);
        scale = scale.max(a.abs());
        ws.orthogonalize(&mut w, &basis);
        let b = vnorm(&w);
        betas.push(b);
        scale = scale.max(b);
        if b <= 1e-13 * scale || j + 1 == steps {
            break;
        }
        w.iter_mut().for_each(|x| *x = x.scale(1.0 / b));
        basis.push(w);
    }
    (basis, alphas, betas)
}

/// Ritz values (descending) and the corresponding coefficient vectors.
fn ritz(alphas: &[f64], betas: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut out: Vec<(f64, Vec<f64>)> =
        (0..m).map(|c| (eig.eigenvalues[c], eig.eigenvectors.column(c).iter().copied().collect())).collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

fn combine<T: Scalar>(basis: &[Vec<T>], s: &[f64]) -> Vec<T> {
    let mut x = vec![T::zero(); basis[0].len()];
    for (q, c) in basis.iter().zip(s) {
        axpy(T::from_real(*c), q, &mut x);
    }
    x
}

fn random_vector<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..n).map(|_| T::from_real(rng.random::<f64>() - 0.5)).collect()
}

/// A shift strictly below the lowest eigenvalue, proven by a successful
/// Cholesky factorization of `B - sigma`.
fn find_shift<T: Scalar>(b: &CsrMatrix<T>, ws: &Workspace<'_, T>, rng: &mut ChaCha8Rng) -> Option<(f64, ProfileCholesky<T>)> {
    let n = b.nrows();
    let perm = rcm_order(b);
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    for r in 0..n {
        let (cols, vals) = b.row(r);
        let mut d = 0.0;
        let mut off = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            if *c == r {
                d = v.re();
            } else {
                off += v.norm_sqr().sqrt();
            }
        }
        lower = lower.min(d - off);
        upper = upper.min(d);
    }
    let (basis, alphas, betas) = lanczos(|x| b.mul_vec(x), ws, random_vector(n, rng), 60.min(n));
    let mut first_try = None;
    if !basis.is_empty() {
        let rz = ritz(&alphas, &betas);
        let (theta, s) = rz.last().unwrap();
        let resid = betas.last().copied().unwrap_or(0.0) * s.last().copied().unwrap_or(0.0).abs();
        let delta = 1e-3 * (1.0 + theta.abs());
        upper = upper.min(*theta);
        first_try = Some(theta - resid.max(delta));
    }
    let width = |x: f64| 1e-3 * (1.0 + x.abs());
    let mut lo = lower - width(lower);
    let mut best = None;
    if let Some(s) = first_try.filter(|s| *s > lo) {
        if let Some(f) = ProfileCholesky::factor(b, &perm, s) {
            lo = s;
            best = Some((s, f));
        } else {
            upper = upper.min(s);
        }
    }
    let mut hi = upper;
    for _ in 0..80 {
        if hi - lo <= width(lo) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match ProfileCholesky::factor(b, &perm, mid) {
            Some(f) => {
                lo = mid;
                best = Some((mid, f));
            }
            None => hi = mid,
        }
    }
    // keep a margin below the lowest eigenvalue
    let sigma = lo - width(lo);
    ProfileCholesky::factor(b, &perm, sigma).map(|f| (sigma, f)).or(best)
}

fn sparse_lowest<T: Scalar>(
    b: &CsrMatrix<T>,
    k: usize,
    tol: f64,
    avail: usize,
    opts: &EigenOptions,
) -> Result<Pairs<T>, EigenError> {
    let n = b.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut ws = Workspace { locked: Vec::new(), sector: opts.sector.as_ref() };
    let perm = rcm_order(b);
    let spectral = if envelope_size(b, &perm) <= opts.max_envelope {
        match find_shift(b, &ws, &mut rng) {
            Some((_, chol)) => Spectral::ShiftInvert(chol),
            None => Spectral::Negated(b),
        }
    } else {
        Spectral::Negated(b)
    };

    let mut best_unconverged: Vec<f64> = Vec::new();
    for _ in 0..opts.max_rounds {
        let verifying = ws.locked.len() >= k;
        let need = if verifying { 1 } else { k - ws.locked.len() };
        let room = avail - ws.locked.len();
        if room == 0 {
            break;
        }
        let steps = spectral.steps(need).min(room);
        let (basis, alphas, betas) = lanczos(|x| spectral.apply(x), &ws, random_vector(n, &mut rng), steps);
        if basis.is_empty() {
            break;
        }
        let kth = {
            let mut v: Vec<f64> = ws.locked.iter().map(|l| l.0).collect();
            v.sort_by(f64::total_cmp);
            v.get(k - 1).copied()
        };
        let mut verified = false;
        best_unconverged.clear();
        for (c, (mu, s)) in ritz(&alphas, &betas).into_iter().take(need + 4).enumerate() {
            if spectral.inverted() && mu <= 0.0 {
                continue;
            }
            let mut x = combine(&basis, &s);
            ws.project(&mut x);
            ws.orthogonalize(&mut x, &[]);
            let nx = vnorm(&x);
            if nx < 0.5 {
                continue;
            }
            x.iter_mut().for_each(|v| *v = v.scale(1.0 / nx));
            let (lam, r) = rayleigh(b, &x);
            if r <= tol {
                // the lowest eigenvalue outside the locked space lies above the k-th
                if verifying && c == 0 && kth.is_some_and(|e| lam >= e - tol) {
                    verified = true;
                }
                ws.locked.push((lam, x, r));
            } else {
                best_unconverged.push(r);
            }
        }
        if verified {
            break;
        }
    }
    ws.locked.sort_by(|a, b| a.0.total_cmp(&b.0));
    if ws.locked.len() < k {
        let mut residuals: Vec<f64> = ws.locked.iter().map(|l| l.2).collect();
        residuals.extend(best_unconverged.iter().take(k - ws.locked.len()));
        return Err(EigenError::NoConvergence { converged: ws.locked.len(), requested: k, residuals });
    }
    ws.locked.truncate(k);
    let mut vals = Vec::with_capacity(k);
    let mut vecs = Vec::with_capacity(k);
    let mut res = Vec::with_capacity(k);
    for (l, x, r) in ws.locked {
        vals.push(l);
        vecs.push(x);
        res.push(r);
    }
    Ok((vals, vecs, res))
}
