//! Mean velocity, mean force and the Ehrenfest residual `dV/dt - <F>/m`.
//!
//! Momenta use a fourth-order centred difference with the wavefunction
//! taken as zero beyond Dirichlet edges. Against the second-order
//! Hamiltonian this makes the discrete commutator `[x, p]` exact up to
//! `O(h^4)`, so a uniform force accelerates the mean velocity by `F/m`
//! almost exactly.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::{EvalError, ProblemSpec};
use crate::geometry::{field_derivative, Boundary, CoordinateChart, GeometryData};
use crate::operator::{raised_gauge, DiscretizedHamiltonian};
use crate::solvers::Trajectory;
use crate::states::{inner, WaveFunction};

/// Largest fraction of probability allowed in the two outermost layers of
/// Dirichlet axes before a report is flagged.
pub const LEAKAGE_LIMIT: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EhrenfestError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("state has {got} values, chart has {want}")]
    SizeMismatch { got: usize, want: usize },
    #[error("trajectory needs at least 3 samples, got {0}")]
    ShortTrajectory(usize),
}

/// Fourth-order centred derivative along axis `p`; second order on axes
/// with fewer than five points.
fn momentum_derivative(psi: &[Complex64], chart: &CoordinateChart, p: usize) -> Vec<Complex64> {
    let h = chart.spacing(p);
    let zero = Complex64::new(0.0, 0.0);
    let at = |k: Option<usize>| k.map_or(zero, |k| psi[k]);
    let step = |i: Option<usize>, d: isize| i.and_then(|i| chart.neighbor(i, p, d));
    let wide = chart.axis(p).points >= 5;
    (0..psi.len())
        .map(|i| {
            let (u1, d1) = (chart.neighbor(i, p, 1), chart.neighbor(i, p, -1));
            if wide {
                let (u2, d2) = (step(u1, 1), step(d1, -1));
                (8.0 * (at(u1) - at(d1)) - (at(u2) - at(d2))) / (12.0 * h)
            } else {
                (at(u1) - at(d1)) / (2.0 * h)
            }
        })
        .collect()
}

/// `(v^op psi)^p = (1/m) g^pq (-i hbar d_q psi) - u^p psi`, one field per component.
fn velocity_fields(psi: &[Complex64], spec: &ProblemSpec, geo: &GeometryData, u_up: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
    let chart = geo.chart();
    let n = chart.dim();
    let c = Complex64::new(0.0, -spec.hbar() / spec.mass());
    let d: Vec<Vec<Complex64>> = (0..n).map(|q| momentum_derivative(psi, chart, q)).collect();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); chart.len()]; n];
    for i in 0..chart.len() {
        let gu = geo.metric().upper(i);
        for p in 0..n {
            let s: Complex64 = (0..n).map(|q| d[q][i] * gu[p * n + q]).sum();
            out[p][i] = c * s - psi[i] * u_up[p][i];
        }
    }
    out
}

fn check_len(psi: &WaveFunction, chart: &CoordinateChart) -> Result<(), EhrenfestError> {
    if psi.len() != chart.len() {
        return Err(EhrenfestError::SizeMismatch { got: psi.len(), want: chart.len() });
    }
    Ok(())
}

/// `Re <psi, v^op psi>_w` per contravariant component.
pub fn mean_velocity(psi: &WaveFunction, spec: &ProblemSpec, geo: &GeometryData) -> Result<Vec<f64>, EhrenfestError> {
    check_len(psi, geo.chart())?;
    let (_, u_up) = raised_gauge(spec, geo, psi.time)?;
    let v = velocity_fields(&psi.values, spec, geo, &u_up);
    Ok(v.iter().map(|vp| inner(geo.weights(), &psi.values, vp).re).collect())
}

/// `d_t u_p` by a centred difference in time.
fn gauge_rate(spec: &ProblemSpec, t: f64) -> Result<Vec<Vec<f64>>, EvalError> {
    let eps = 1e-5 * (1.0 + t.abs());
    let a = spec.sample_gauge(t + eps)?;
    let b = spec.sample_gauge(t - eps)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) / (2.0 * eps)).collect()).collect())
}

/// Expectation of `-grad W - m d_t u + (1/2)(f v^op + v^op f)` per
/// contravariant component, with `f_pq = m (d_p u_q - d_q u_p)`.
pub fn mean_force(psi: &WaveFunction, spec: &ProblemSpec, geo: &GeometryData) -> Result<Vec<f64>, EhrenfestError> {
    let chart = geo.chart();
    check_len(psi, chart)?;
    let n = chart.dim();
    let len = chart.len();
    let m = spec.mass();
    let t = psi.time;
    let w = spec.sample_potential(t)?;
    // covariant scalar part of the force
    let mut cov: Vec<Vec<f64>> = (0..n).map(|p| field_derivative(&w, chart, p).iter().map(|d| -d).collect()).collect();
    let (u_cov, u_up) = raised_gauge(spec, geo, t)?;
    let gauge = spec.has_gauge();
    if gauge && spec.gauge_time_dependent() {
        for (c, r) in cov.iter_mut().zip(gauge_rate(spec, t)?) {
            for (a, b) in c.iter_mut().zip(r) {
                *a -= m * b;
            }
        }
    }
    let rho = psi.density();
    let wts = geo.weights();
    let mut force = vec![0.0; n];
    for i in 0..len {
        let gu = geo.metric().upper(i);
        for r in 0..n {
            let s: f64 = (0..n).map(|p| gu[r * n + p] * cov[p][i]).sum();
            force[r] += wts[i] * rho[i] * s;
        }
    }
    if gauge {
        let du: Vec<Vec<Vec<f64>>> =
            (0..n).map(|p| (0..n).map(|q| field_derivative(&u_cov[q], chart, p)).collect()).collect();
        let v = velocity_fields(&psi.values, spec, geo, &u_up);
        for i in 0..len {
            let gu = geo.metric().upper(i);
            for r in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in 0..n {
                    for q in 0..n {
                        let f = m * (du[p][q][i] - du[q][p][i]);
                        if f != 0.0 {
                            acc += v[q][i] * (gu[r * n + p] * f);
                        }
                    }
                }
                force[r] += wts[i] * (psi.values[i].conj() * acc).re;
            }
        }
    }
    Ok(force)
}

/// `(m / i hbar) <psi, [v^op, H] psi>_w`, the force expectation obtained from
/// the commutator with the discretized Hamiltonian.
pub fn commutator_force(
    psi: &WaveFunction,
    h: &DiscretizedHamiltonian,
    spec: &ProblemSpec,
    geo: &GeometryData,
) -> Result<Vec<f64>, EhrenfestError> {
    check_len(psi, geo.chart())?;
    let (_, u_up) = raised_gauge(spec, geo, psi.time)?;
    let w = geo.weights();
    let hpsi = h.apply(&psi.values);
    let v_psi = velocity_fields(&psi.values, spec, geo, &u_up);
    let v_hpsi = velocity_fields(&hpsi, spec, geo, &u_up);
    let scale = Complex64::new(0.0, -spec.mass() / spec.hbar());
    Ok((0..geo.chart().dim())
        .map(|p| {
            let c = inner(w, &psi.values, &v_hpsi[p]) - inner(w, &hpsi, &v_psi[p]);
            (scale * c).re
        })
        .collect())
}

/// Probability in the two outermost layers of every Dirichlet axis.
pub fn boundary_mass(psi: &WaveFunction, geo: &GeometryData) -> f64 {
    let chart = geo.chart();
    let w = geo.weights();
    (0..chart.len())
        .filter(|&i| {
            chart.axes().iter().enumerate().any(|(p, a)| {
                let k = chart.axis_index(i, p);
                a.boundary == Boundary::Dirichlet && (k < 2 || k + 2 >= a.points)
            })
        })
        .map(|i| w[i] * psi.values[i].norm_sqr())
        .sum()
}

#[derive(Debug, Clone)]
pub struct EhrenfestReport {
    pub times: Vec<f64>,
    pub mean_velocity: Vec<Vec<f64>>,
    pub mean_force: Vec<Vec<f64>>,
    /// `dV/dt - <F>/m` at the interior samples `1..len-1`.
    pub residual: Vec<Vec<f64>>,
    pub max_residual: f64,
    pub grid: Vec<usize>,
    pub sample_dt: f64,
    /// Largest boundary-layer probability along the trajectory.
    pub boundary_mass: f64,
}

impl EhrenfestReport {
    /// True when boundary terms could spoil the comparison.
    pub fn boundary_leakage(&self) -> bool {
        self.boundary_mass > LEAKAGE_LIMIT
    }
}

pub fn ehrenfest_residual(
    traj: &Trajectory,
    spec: &ProblemSpec,
    geo: &GeometryData,
) -> Result<EhrenfestReport, EhrenfestError> {
    let count = traj.states.len();
    if count < 3 {
        return Err(EhrenfestError::ShortTrajectory(count));
    }
    let rows: Vec<Result<(Vec<f64>, Vec<f64>, f64), EhrenfestError>> = traj
        .states
        .par_iter()
        .map(|s| Ok((mean_velocity(s, spec, geo)?, mean_force(s, spec, geo)?, boundary_mass(s, geo))))
        .collect();
    let mut mean_velocity = Vec::with_capacity(count);
    let mut mean_force = Vec::with_capacity(count);
    let mut leak: f64 = 0.0;
    for r in rows {
        let (v, f, b) = r?;
        mean_velocity.push(v);
        mean_force.push(f);
        leak = leak.max(b);
    }
    let dt = traj.sample_dt;
    let m = spec.mass();
    let residual: Vec<Vec<f64>> = (1..count - 1)
        .map(|k| {
            (0..mean_velocity[k].len())
                .map(|p| (mean_velocity[k + 1][p] - mean_velocity[k - 1][p]) / (2.0 * dt) - mean_force[k][p] / m)
                .collect()
        })
        .collect();
    let max_residual = residual.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(EhrenfestReport {
        times: traj.times(),
        mean_velocity,
        mean_force,
        residual,
        max_residual,
        grid: geo.chart().shape(),
        sample_dt: dt,
        boundary_mass: leak,
    })
}
