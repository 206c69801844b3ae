//! Hamiltonian and momentum operators on a chart.
//!
//! ```text
//! H = -(hbar^2/2m) Lap + (i hbar/2) [u^p D_p + (1/sqrt g) D_p (sqrt g u^p .)] + (m/2) u_p u^p + W
//! ```
//!
//! which is `(1/2m) g^pq (p_p - m u_p)(p_q - m u_q) + W` with the momentum
//! products ordered symmetrically. `Lap` is the divergence-form
//! Laplace–Beltrami matrix and `D_p` the centred difference that treats the
//! wavefunction as zero beyond Dirichlet edges.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsl::{EvalError, ProblemSpec};
use crate::geometry::{
    laplacian_matrix, spd_inverse, wave_derivative, Boundary, CoordinateChart, GeometryData,
    GeometryError, MetricSource,
};
use crate::sparse::CsrMatrix;
use crate::states::{inner, norm, WaveFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Ordering of the gauge term. Only `Symmetric` is Hermitian for
/// non-constant `u`; `Unsymmetrized` exists to check that the Hermiticity
/// test can tell the difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeOrdering {
    Symmetric,
    #[doc(hidden)]
    Unsymmetrized,
}

/// A sparse Hamiltonian with the quadrature weights of its inner product.
#[derive(Debug, Clone)]
pub struct DiscretizedHamiltonian {
    matrix: CsrMatrix<Complex64>,
    weights: Vec<f64>,
    chart: Option<CoordinateChart>,
    hbar: f64,
    time: f64,
    time_dependent: bool,
    source: Option<Arc<ProblemSpec>>,
}

impl DiscretizedHamiltonian {
    /// An operator given directly as a matrix, with no chart attached.
    pub fn from_parts(matrix: CsrMatrix<Complex64>, weights: Vec<f64>, hbar: f64) -> Self {
        assert_eq!(matrix.nrows(), weights.len());
        assert_eq!(matrix.ncols(), weights.len());
        Self { matrix, weights, chart: None, hbar, time: 0.0, time_dependent: false, source: None }
    }

    pub fn matrix(&self) -> &CsrMatrix<Complex64> {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn chart(&self) -> Option<&CoordinateChart> {
        self.chart.as_ref()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.chart.as_ref().map_or(vec![self.len()], |c| c.shape())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Time at which the coefficients were evaluated.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn time_dependent(&self) -> bool {
        self.time_dependent
    }

    /// The problem this operator quantizes, when built from one.
    pub fn source(&self) -> Option<&ProblemSpec> {
        self.source.as_deref()
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        self.matrix.mul_vec(psi)
    }

    /// `<psi, H psi>_w`.
    pub fn expectation(&self, psi: &[Complex64]) -> Complex64 {
        inner(&self.weights, psi, &self.apply(psi))
    }
}

/// Assembles the Hamiltonian at time `t`.
pub fn build_hamiltonian(
    spec: &ProblemSpec,
    geo: &GeometryData,
    t: f64,
) -> Result<DiscretizedHamiltonian, OperatorError> {
    build_hamiltonian_with(spec, geo, t, GaugeOrdering::Symmetric)
}

#[doc(hidden)]
pub fn build_hamiltonian_with(
    spec: &ProblemSpec,
    geo: &GeometryData,
    t: f64,
    ordering: GaugeOrdering,
) -> Result<DiscretizedHamiltonian, OperatorError> {
    let chart = geo.chart();
    let metric = geo.metric();
    let n = chart.dim();
    let len = chart.len();
    let (m, hbar) = (spec.mass(), spec.hbar());

    let lap = laplacian_matrix(metric, chart);
    let kin = -hbar * hbar / (2.0 * m);
    let mut trip: Vec<(usize, usize, Complex64)> = Vec::with_capacity(lap.nnz() + len * 2 * n);
    for r in 0..len {
        let (cols, vals) = lap.row(r);
        trip.extend(cols.iter().zip(vals).map(|(c, v)| (r, *c, Complex64::new(kin * v, 0.0))));
    }

    let mut diag = spec.sample_potential(t)?;
    if spec.has_gauge() {
        let (u_cov, u_up) = raised_gauge(spec, geo, t)?;
        for (i, d) in diag.iter_mut().enumerate() {
            let uu: f64 = (0..n).map(|p| u_cov[p][i] * u_up[p][i]).sum();
            *d += 0.5 * m * uu;
        }
        let sg = metric.sqrt_det_field();
        let ih = Complex64::new(0.0, hbar);
        for (p, u) in u_up.iter().enumerate() {
            if u.iter().all(|v| *v == 0.0) {
                continue;
            }
            let d = 0.5 / chart.spacing(p);
            for i in 0..len {
                for (dir, sign) in [(1isize, 1.0), (-1, -1.0)] {
                    let Some(j) = chart.neighbor(i, p, dir) else { continue };
                    let coeff = match ordering {
                        GaugeOrdering::Symmetric => 0.5 * (u[i] + sg[j] * u[j] / sg[i]),
                        GaugeOrdering::Unsymmetrized => u[i],
                    };
                    trip.push((i, j, ih * (sign * d * coeff)));
                }
            }
        }
    }
    trip.extend(diag.iter().enumerate().map(|(i, v)| (i, i, Complex64::new(*v, 0.0))));

    Ok(DiscretizedHamiltonian {
        matrix: CsrMatrix::from_triplets(len, len, trip),
        weights: geo.weights().to_vec(),
        chart: Some(chart.clone()),
        hbar,
        time: t,
        time_dependent: spec.time_dependent(),
        source: Some(Arc::new(spec.clone())),
    })
}

/// Covariant and contravariant components of the gauge field at time `t`,
/// one field per axis.
pub(crate) fn raised_gauge(
    spec: &ProblemSpec,
    geo: &GeometryData,
    t: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), EvalError> {
    let n = spec.dim();
    let len = geo.chart().len();
    if !spec.has_gauge() {
        return Ok((vec![vec![0.0; len]; n], vec![vec![0.0; len]; n]));
    }
    let u_cov = spec.sample_gauge(t)?;
    let mut u_up = vec![vec![0.0; len]; n];
    let mut cov = vec![0.0; n];
    let mut up = vec![0.0; n];
    for i in 0..len {
        for p in 0..n {
            cov[p] = u_cov[p][i];
        }
        geo.metric().raise(i, &cov, &mut up);
        for p in 0..n {
            u_up[p][i] = up[p];
        }
    }
    Ok((u_cov, u_up))
}

/// Momentum components of `psi`.
#[derive(Debug, Clone)]
pub struct Momentum {
    /// `-i hbar D_p psi`, one field per axis.
    pub covariant: Vec<Vec<Complex64>>,
    /// `-i hbar g^pq D_q psi`.
    pub contravariant: Vec<Vec<Complex64>>,
}

pub fn apply_momentum(psi: &WaveFunction, geo: &GeometryData, hbar: f64) -> Momentum {
    let chart = geo.chart();
    let n = chart.dim();
    let mih = Complex64::new(0.0, -hbar);
    let covariant: Vec<Vec<Complex64>> = (0..n)
        .map(|p| wave_derivative(&psi.values, chart, p).into_iter().map(|d| mih * d).collect())
        .collect();
    let mut contravariant = vec![vec![Complex64::new(0.0, 0.0); chart.len()]; n];
    for i in 0..chart.len() {
        let gu = geo.metric().upper(i);
        for p in 0..n {
            contravariant[p][i] = (0..n).map(|q| covariant[q][i] * gu[p * n + q]).sum();
        }
    }
    Momentum { covariant, contravariant }
}

/// `H_c = (1/2m) g^pq (P_p - m u_p)(P_q - m u_q) + W` at a point.
pub fn classical_hamiltonian(spec: &ProblemSpec, x: &[f64], momentum: &[f64], t: f64) -> Result<f64, OperatorError> {
    let n = spec.dim();
    let mut g = vec![0.0; n * n];
    spec.metric_at(x, &mut g)?;
    let mut gu = vec![0.0; n * n];
    spd_inverse(&g, n, &mut gu).ok_or_else(|| GeometryError::SingularMetric { point: x.to_vec() })?;
    let u = spec.gauge_at(x, t)?;
    let m = spec.mass();
    let k: Vec<f64> = (0..n).map(|p| momentum[p] - m * u[p]).collect();
    let mut kin = 0.0;
    for p in 0..n {
        for q in 0..n {
            kin += gu[p * n + q] * k[p] * k[q];
        }
    }
    Ok(kin / (2.0 * m) + spec.potential_at(x, t)?)
}

/// A smooth random field that satisfies the chart's boundary conditions:
/// sine modes on Dirichlet axes and Fourier modes on periodic axes.
fn smooth_trial(chart: &CoordinateChart, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let n = chart.dim();
    let mut out = vec![Complex64::new(0.0, 0.0); chart.len()];
    let terms = 3;
    let mut factors: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for _ in 0..terms {
        factors.clear();
        for p in 0..n {
            let a = chart.axis(p);
            let len = a.upper - a.lower;
            let modes: Vec<(i32, Complex64)> = (0..3)
                .map(|_| {
                    let j = match a.boundary {
                        Boundary::Dirichlet => rng.random_range(1..=4),
                        Boundary::Periodic => rng.random_range(-2..=2),
                    };
                    (j, Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                })
                .collect();
            let f: Vec<Complex64> = (0..a.points)
                .map(|i| {
                    let x = a.coord(i) - a.lower;
                    modes
                        .iter()
                        .map(|(j, c)| match a.boundary {
                            Boundary::Dirichlet => c * (*j as f64 * std::f64::consts::PI * x / len).sin(),
                            Boundary::Periodic => {
                                c * Complex64::from_polar(1.0, *j as f64 * std::f64::consts::TAU * x / len)
                            }
                        })
                        .sum()
                })
                .collect();
            factors.push(f);
        }
        for (flat, o) in out.iter_mut().enumerate() {
            let mut v = Complex64::new(1.0, 0.0);
            for (p, f) in factors.iter().enumerate() {
                v *= f[chart.axis_index(flat, p)];
            }
            *o += v;
        }
    }
    out
}

fn white_trial(len: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..len).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

/// Neumaier-compensated sum of complex terms.
#[derive(Default)]
struct CompensatedSum {
    re: (f64, f64),
    im: (f64, f64),
}

impl CompensatedSum {
    fn add(&mut self, z: Complex64) {
        fn step(acc: &mut (f64, f64), x: f64) {
            let t = acc.0 + x;
            if acc.0.abs() >= x.abs() {
                acc.1 += (acc.0 - t) + x;
            } else {
                acc.1 += (x - t) + acc.0;
            }
            acc.0 = t;
        }
        step(&mut self.re, z.re);
        step(&mut self.im, z.im);
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

/// `<phi, H psi>_w` summed entry by entry. Rounding in the row sums of
/// `H psi` would otherwise swamp the asymmetry being measured on fine grids.
fn weighted_form(h: &DiscretizedHamiltonian, phi: &[Complex64], psi: &[Complex64]) -> Complex64 {
    let mut acc = CompensatedSum::default();
    for (i, (w, f)) in h.weights.iter().zip(phi).enumerate() {
        let (cols, vals) = h.matrix.row(i);
        for (j, v) in cols.iter().zip(vals) {
            acc.add(f.conj() * psi[*j] * (v * *w));
        }
    }
    acc.value()
}

/// Largest `|<phi, H psi>_w - conj(<psi, H phi>_w)| / (|phi| |psi|)` over
/// `trials` seeded random pairs.
pub fn hermiticity_check(h: &DiscretizedHamiltonian, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = h.weights();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (phi, psi) = match h.chart() {
            Some(c) => (smooth_trial(c, &mut rng), smooth_trial(c, &mut rng)),
            None => (white_trial(h.len(), &mut rng), white_trial(h.len(), &mut rng)),
        };
        let a = weighted_form(h, &phi, &psi);
        let b = weighted_form(h, &psi, &phi).conj();
        let scale = norm(w, &phi) * norm(w, &psi);
        if scale > 0.0 {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    worst
}
