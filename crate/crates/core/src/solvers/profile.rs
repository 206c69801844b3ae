//! Envelope (skyline) factorizations after reverse Cuthill–McKee ordering.

use std::collections::VecDeque;

use crate::sparse::{CsrMatrix, Scalar};

/// Reverse Cuthill–McKee ordering of the symmetrized pattern of `a`.
/// `perm[new] = old`.
pub fn rcm_order<T: Scalar>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for &c in a.row(r).0 {
            if c != r {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut levels = vec![0usize; n];

    let bfs_last = |start: usize, levels: &mut [usize]| -> (usize, usize) {
        // returns (eccentricity, a minimum-degree node of the last level)
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        levels[start] = 0;
        let (mut depth, mut last) = (0, start);
        while let Some(v) = q.pop_front() {
            let lv = levels[v];
            if lv > depth || (lv == depth && degree[v] < degree[last]) {
                depth = lv;
                last = v;
            }
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    levels[w] = lv + 1;
                    q.push_back(w);
                }
            }
        }
        (depth, last)
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let (mut ecc, mut cand) = bfs_last(start, &mut levels);
        for _ in 0..8 {
            let (e2, c2) = bfs_last(cand, &mut levels);
            if e2 <= ecc {
                break;
            }
            start = cand;
            ecc = e2;
            cand = c2;
        }
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|w| !visited[*w]).collect();
            nb.sort_by_key(|w| (degree[*w], *w));
            for w in nb {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Matrix stored inside its envelope: row `i` of the lower part and column
/// `i` of the upper part both start at index `first[i]`.
#[derive(Debug, Clone)]
struct Envelope<T> {
    n: usize,
    first: Vec<usize>,
    ptr: Vec<usize>,
    lower: Vec<T>,
    upper: Vec<T>,
    diag: Vec<T>,
}

impl<T: Scalar> Envelope<T> {
    /// Permutes `a` by `perm` (`perm[new] = old`) into envelope storage.
    fn from_csr(a: &CsrMatrix<T>, perm: &[usize], shift: f64) -> Self {
        let n = a.nrows();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for r in 0..n {
            for &c in a.row(r).0 {
                let (i, j) = (inv[r], inv[c]);
                let (hi, lo) = if i > j { (i, j) } else { (j, i) };
                first[hi] = first[hi].min(lo);
            }
        }
        let mut ptr = vec![0usize; n + 1];
        for i in 0..n {
            ptr[i + 1] = ptr[i] + (i - first[i]);
        }
        let total = ptr[n];
        let mut env = Self {
            n,
            first,
            ptr,
            lower: vec![T::zero(); total],
            upper: vec![T::zero(); total],
            diag: vec![T::from_real(-shift); n],
        };
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let (i, j) = (inv[r], inv[c]);
                if i == j {
                    env.diag[i] += v;
                } else if i > j {
                    let k = env.ptr[i] + (j - env.first[i]);
                    env.lower[k] += v;
                } else {
                    let k = env.ptr[j] + (i - env.first[j]);
                    env.upper[k] += v;
                }
            }
        }
        env
    }

    #[inline]
    fn lower_row(&self, i: usize) -> &[T] {
        &self.lower[self.ptr[i]..self.ptr[i + 1]]
    }

    #[inline]
    fn upper_col(&self, j: usize) -> &[T] {
        &self.upper[self.ptr[j]..self.ptr[j + 1]]
    }
}

#[inline]
fn dot_range<T: Scalar>(a: &[T], a0: usize, b: &[T], b0: usize, from: usize, to: usize, conj_b: bool) -> T {
    // sum_{p=from}^{to-1} a[p - a0] * b[p - b0]
    let mut s = T::zero();
    let (xa, xb) = (&a[from - a0..to - a0], &b[from - b0..to - b0]);
    if conj_b {
        for (x, y) in xa.iter().zip(xb) {
            s += *x * y.conj();
        }
    } else {
        for (x, y) in xa.iter().zip(xb) {
            s += *x * *y;
        }
    }
    s
}

/// `L L^H` factorization of a Hermitian matrix; fails unless it is positive
/// definite.
#[derive(Debug, Clone)]
pub struct ProfileCholesky<T> {
    perm: Vec<usize>,
    env: Envelope<T>,
}

impl<T: Scalar> ProfileCholesky<T> {
    /// Factors `a - shift I` with a precomputed ordering. Returns `None` if
    /// a pivot is not strictly positive.
    pub fn factor(a: &CsrMatrix<T>, perm: &[usize], shift: f64) -> Option<Self> {
        let mut env = Envelope::from_csr(a, perm, shift);
        let n = env.n;
        for i in 0..n {
            let fi = env.first[i];
            for j in fi..i {
                let fj = env.first[j];
                let from = fi.max(fj);
                let s = {
                    let (ri, rj) = (env.lower_row(i), env.lower_row(j));
                    dot_range(ri, fi, rj, fj, from, j, true)
                };
                let k = env.ptr[i] + (j - fi);
                env.lower[k] = (env.lower[k] - s) / env.diag[j];
            }
            let ri = env.lower_row(i);
            let s: f64 = ri.iter().map(|v| v.norm_sqr()).sum();
            let d = env.diag[i].re() - s;
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            env.diag[i] = T::from_real(d.sqrt());
        }
        Some(Self { perm: perm.to_vec(), env })
    }

    /// Solves `(A - shift I) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let env = &self.env;
        let n = env.n;
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = env.first[i];
            let s = dot_range(env.lower_row(i), fi, &y, 0, fi, i, false);
            y[i] = (y[i] - s) / env.diag[i];
        }
        for i in (0..n).rev() {
            y[i] = y[i] / env.diag[i].conj();
            let yi = y[i];
            let fi = env.first[i];
            for (k, l) in env.lower_row(i).iter().enumerate() {
                let j = fi + k;
                y[j] = y[j] - l.conj() * yi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Number of stored off-diagonal entries.
    pub fn envelope_size(&self) -> usize {
        self.env.ptr[self.env.n]
    }
}

/// `L U` factorization without pivoting on a symmetric-pattern envelope.
/// Stable for matrices whose Hermitian part is definite.
#[derive(Debug, Clone)]
pub struct ProfileLu<T> {
    perm: Vec<usize>,
    env: Envelope<T>,
}

impl<T: Scalar> ProfileLu<T> {
    pub fn factor(a: &CsrMatrix<T>, perm: &[usize]) -> Option<Self> {
        let mut env = Envelope::from_csr(a, perm, 0.0);
        let n = env.n;
        for k in 0..n {
            let fk = env.first[k];
            // column k of U
            for i in fk..k {
                let fi = env.first[i];
                let from = fi.max(fk);
                let s = dot_range(env.lower_row(i), fi, env.upper_col(k), fk, from, i, false);
                let idx = env.ptr[k] + (i - fk);
                env.upper[idx] = env.upper[idx] - s;
            }
            // row k of L
            for j in fk..k {
                let fj = env.first[j];
                let from = fk.max(fj);
                let s = dot_range(env.lower_row(k), fk, env.upper_col(j), fj, from, j, false);
                let idx = env.ptr[k] + (j - fk);
                env.lower[idx] = (env.lower[idx] - s) / env.diag[j];
            }
            let s = dot_range(env.lower_row(k), fk, env.upper_col(k), fk, fk, k, false);
            env.diag[k] = env.diag[k] - s;
            let d = env.diag[k];
            if d.norm_sqr() == 0.0 || !d.norm_sqr().is_finite() {
                return None;
            }
        }
        Some(Self { perm: perm.to_vec(), env })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let env = &self.env;
        let n = env.n;
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = env.first[i];
            let s = dot_range(env.lower_row(i), fi, &y, 0, fi, i, false);
            y[i] = y[i] - s;
        }
        for j in (0..n).rev() {
            y[j] = y[j] / env.diag[j];
            let yj = y[j];
            let fj = env.first[j];
            for (k, u) in env.upper_col(j).iter().enumerate() {
                let i = fj + k;
                y[i] = y[i] - *u * yj;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn envelope_size(&self) -> usize {
        self.env.ptr[self.env.n]
    }
}

/// Number of off-diagonal entries an envelope factorization of `a` would store.
pub fn envelope_size<T: Scalar>(a: &CsrMatrix<T>, perm: &[usize]) -> usize {
    let n = a.nrows();
    let mut inv = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let mut first: Vec<usize> = (0..n).collect();
    for r in 0..n {
        for &c in a.row(r).0 {
            let (i, j) = (inv[r], inv[c]);
            let (hi, lo) = if i > j { (i, j) } else { (j, i) };
            first[hi] = first[hi].min(lo);
        }
    }
    (0..n).map(|i| i - first[i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    /// A ring with scrambled labels.
    fn ring(n: usize) -> CsrMatrix<f64> {
        let label = |i: usize| (i * 37) % n;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((label(i), label(i), 2.5));
            t.push((label(i), label((i + 1) % n), -1.0));
            t.push((label((i + 1) % n), label(i), -1.0));
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn rcm_narrows_a_ring() {
        let a = ring(200);
        let p = rcm_order(&a);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..200).collect::<Vec<_>>());
        let identity: Vec<usize> = (0..200).collect();
        assert!(envelope_size(&a, &p) <= 2 * 200);
        assert!(envelope_size(&a, &identity) > 10 * 200);
    }

    #[test]
    fn cholesky_and_lu_solve() {
        let a = ring(50);
        let p = rcm_order(&a);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let ch = ProfileCholesky::factor(&a, &p, 0.0).unwrap();
        let x = ch.solve(&b);
        let r = a.mul_vec(&x);
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
        // eigenvalues of the ring lie in [0.5, 4.5]
        assert!(ProfileCholesky::factor(&a, &p, 0.49).is_some());
        assert!(ProfileCholesky::factor(&a, &p, 0.51).is_none());

        let i = Complex64::i();
        let c = a.map(|v| Complex64::new(v, 0.0) * i * 0.3).add(&CsrMatrix::from_diagonal(&vec![Complex64::new(1.0, 0.0); 50]));
        let lu = ProfileLu::factor(&c, &p).unwrap();
        let bc: Vec<Complex64> = b.iter().map(|v| Complex64::new(*v, 1.0 - v)).collect();
        let xc = lu.solve(&bc);
        let rc = c.mul_vec(&xc);
        assert!(rc.iter().zip(&bc).all(|(u, v)| (u - v).norm() < 1e-12));
    }
}
