//! Exchange symmetry for two identical particles.
//!
//! A chart is exchange-symmetric when its axes split into two equal halves
//! `(x1.., x2..)` with matching ranges, point counts and boundaries, the
//! problem carries a symmetry flag, and the metric, gauge and potential are
//! invariant under swapping the halves on the grid.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsl::{ProblemSpec, Symmetry};
use crate::geometry::{CoordinateChart, GeometryData};
use crate::operator::DiscretizedHamiltonian;
use crate::solvers::Sector;
use crate::states::{norm, WaveFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExchangeError {
    #[error("not an exchange-symmetric chart: {0}")]
    NotExchangeSymmetricChart(String),
    #[error("state has {got} values, chart has {want}")]
    SizeMismatch { got: usize, want: usize },
    #[error("exchange sign must be +1 or -1, got {0}")]
    InvalidSign(f64),
}

fn not_symmetric(msg: impl Into<String>) -> ExchangeError {
    ExchangeError::NotExchangeSymmetricChart(msg.into())
}

/// Grid permutation swapping the two particles.
pub fn swap_permutation(chart: &CoordinateChart) -> Result<Vec<usize>, ExchangeError> {
    let n = chart.dim();
    if n == 0 || n % 2 != 0 {
        return Err(not_symmetric(format!("{n} axes do not split into two particles")));
    }
    let d = n / 2;
    for p in 0..d {
        let (a, b) = (chart.axis(p), chart.axis(p + d));
        if a.lower != b.lower || a.upper != b.upper || a.points != b.points || a.boundary != b.boundary {
            return Err(not_symmetric(format!("axes {} and {} differ", a.name, b.name)));
        }
    }
    Ok((0..chart.len())
        .map(|i| {
            let mut idx = chart.multi_index(i);
            idx.rotate_left(d);
            chart.flat_index(&idx)
        })
        .collect())
}

fn invariant(values: &[f64], perm: &[usize]) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values.iter().enumerate().all(|(i, v)| (v - values[perm[i]]).abs() <= 1e-12 * scale.max(1e-300))
}

/// Checks the flag and the grid invariance of the problem data, and
/// returns the swap permutation.
pub fn exchange_permutation(spec: &ProblemSpec, geo: &GeometryData) -> Result<Vec<usize>, ExchangeError> {
    if spec.symmetry() == Symmetry::None {
        return Err(not_symmetric("problem has no symmetry flag"));
    }
    let chart = geo.chart();
    let perm = swap_permutation(chart)?;
    let n = chart.dim();
    let d = n / 2;
    let rotate = |p: usize| (p + d) % n;
    let w = spec.sample_potential(0.0).map_err(|e| not_symmetric(e.to_string()))?;
    if !invariant(&w, &perm) {
        return Err(not_symmetric("potential is not exchange invariant"));
    }
    if !invariant(geo.weights(), &perm) {
        return Err(not_symmetric("volume element is not exchange invariant"));
    }
    for i in 0..chart.len() {
        let (a, b) = (geo.metric().lower(i), geo.metric().lower(perm[i]));
        for p in 0..n {
            for q in 0..n {
                let (x, y) = (a[p * n + q], b[rotate(p) * n + rotate(q)]);
                if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
                    return Err(not_symmetric("metric is not exchange invariant"));
                }
            }
        }
    }
    if spec.has_gauge() {
        let u = spec.sample_gauge(0.0).map_err(|e| not_symmetric(e.to_string()))?;
        for i in 0..chart.len() {
            for p in 0..n {
                let (x, y) = (u[p][i], u[rotate(p)][perm[i]]);
                if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
                    return Err(not_symmetric("gauge field is not exchange invariant"));
                }
            }
        }
    }
    Ok(perm)
}

/// Eigensolver sector for the problem's symmetry flag.
pub fn exchange_sector(spec: &ProblemSpec, geo: &GeometryData) -> Result<Sector, ExchangeError> {
    let perm = exchange_permutation(spec, geo)?;
    let sign = if spec.symmetry() == Symmetry::Antisymmetric { -1.0 } else { 1.0 };
    Ok(Sector::new(perm, sign))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeProjection {
    pub psi: WaveFunction,
    /// Norm of `(psi + sign psi∘swap) / 2` before renormalization.
    pub norm: f64,
}

impl ExchangeProjection {
    /// True when the input had no component in the requested sector.
    pub fn annihilated(&self) -> bool {
        self.norm <= 1e-14
    }
}

/// `(psi + sign psi∘swap) / 2`, renormalized unless it vanishes.
pub fn project_exchange(
    psi: &WaveFunction,
    spec: &ProblemSpec,
    geo: &GeometryData,
    sign: f64,
) -> Result<ExchangeProjection, ExchangeError> {
    if sign != 1.0 && sign != -1.0 {
        return Err(ExchangeError::InvalidSign(sign));
    }
    let perm = exchange_permutation(spec, geo)?;
    if psi.len() != perm.len() {
        return Err(ExchangeError::SizeMismatch { got: psi.len(), want: perm.len() });
    }
    let values: Vec<Complex64> = (0..perm.len()).map(|i| (psi.values[i] + psi.values[perm[i]] * sign) * 0.5).collect();
    let mut out = WaveFunction { values, time: psi.time };
    let n = norm(geo.weights(), &out.values);
    let relative = n / psi.norm(geo.weights()).max(f64::MIN_POSITIVE);
    if relative > 1e-14 {
        out.normalize(geo.weights());
    } else {
        for v in &mut out.values {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(ExchangeProjection { psi: out, norm: relative })
}

/// Largest `|H P psi - P H psi|_w` over `trials` seeded random normalized
/// states, with `P` the unnormalized sector projector.
pub fn exchange_commutator(
    h: &DiscretizedHamiltonian,
    perm: &[usize],
    sign: f64,
    trials: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = h.weights();
    let project = |x: &[Complex64]| -> Vec<Complex64> {
        (0..x.len()).map(|i| (x[i] + x[perm[i]] * sign) * 0.5).collect()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut psi: Vec<Complex64> =
            (0..h.len()).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let n = norm(w, &psi);
        for v in &mut psi {
            *v /= n;
        }
        let a = h.apply(&project(&psi));
        let b = project(&h.apply(&psi));
        let d: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        worst = worst.max(norm(w, &d));
    }
    worst
}
