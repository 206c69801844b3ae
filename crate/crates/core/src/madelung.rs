//! Density, phase, velocity and flux fields of a wavefunction, and the
//! continuity and Hamilton–Jacobi residuals built from them.

use std::collections::VecDeque;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::{EvalError, ProblemSpec};
use crate::geometry::{divergence, wave_derivative, Boundary, CoordinateChart, GeometryData};
use crate::operator::raised_gauge;
use crate::solvers::Trajectory;
use crate::states::WaveFunction;

/// Points with `rho <= MASK_RATIO * max rho` carry no phase.
pub const MASK_RATIO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MadelungError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("density vanishes everywhere; phase undefined")]
    PhaseUndefined,
    #[error("state has {got} values, chart has {want}")]
    SizeMismatch { got: usize, want: usize },
    #[error("trajectory needs at least {need} samples, got {got}")]
    ShortTrajectory { need: usize, got: usize },
}

/// A connected set of grid points where the density is below the mask threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseUndefined {
    pub first: usize,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct MadelungFields {
    pub rho: Vec<f64>,
    /// Unwrapped phase on the mask; the principal value of `arg psi` elsewhere.
    pub phi: Vec<f64>,
    /// Contravariant `v^p = (hbar/m) g^pq d_q phi - u^p`, zero outside the mask.
    pub v: Vec<Vec<f64>>,
    /// Contravariant flux computed from `psi` itself.
    pub j: Vec<Vec<f64>>,
    /// `-(hbar^2/2m) (Lap sqrt rho) / sqrt rho`, zero outside the mask.
    pub quantum_potential: Vec<f64>,
    pub mask: Vec<bool>,
    /// Connected component of the mask per point, `usize::MAX` outside it.
    pub component: Vec<usize>,
    pub components: usize,
    pub undefined: Vec<PhaseUndefined>,
    pub time: f64,
}

impl MadelungFields {
    /// Mask points whose stencil neighbours up to two cells away are all masked in.
    pub fn interior(&self, chart: &CoordinateChart) -> Vec<bool> {
        interior_of(&self.mask, chart)
    }
}

fn interior_of(mask: &[bool], chart: &CoordinateChart) -> Vec<bool> {
    (0..mask.len())
        .map(|i| {
            mask[i]
                && (0..chart.dim()).all(|p| {
                    [1isize, -1].iter().all(|&d| match chart.neighbor(i, p, d) {
                        Some(k) => mask[k] && chart.neighbor(k, p, d).is_none_or(|k2| mask[k2]),
                        None => chart.axis(p).boundary == Boundary::Periodic,
                    })
                })
        })
        .collect()
}

/// Nodes of the mask graph reachable from each other along axis neighbours.
fn label_components(mask: &[bool], chart: &CoordinateChart, rho: &[f64], on: bool) -> (Vec<usize>, Vec<usize>) {
    let mut label = vec![usize::MAX; mask.len()];
    let mut roots = Vec::new();
    for s in 0..mask.len() {
        if mask[s] != on || label[s] != usize::MAX {
            continue;
        }
        let id = roots.len();
        let mut best = s;
        let mut q = VecDeque::from([s]);
        label[s] = id;
        while let Some(i) = q.pop_front() {
            if rho[i] > rho[best] {
                best = i;
            }
            for p in 0..chart.dim() {
                for d in [1isize, -1] {
                    if let Some(k) = chart.neighbor(i, p, d) {
                        if mask[k] == on && label[k] == usize::MAX {
                            label[k] = id;
                            q.push_back(k);
                        }
                    }
                }
            }
        }
        roots.push(best);
    }
    (label, roots)
}

/// `arg(a conj(b))`, the phase step from `b` to `a` in `(-pi, pi]`.
#[inline]
fn phase_step(a: Complex64, b: Complex64) -> f64 {
    (a * b.conj()).arg()
}

/// Gradient of the phase along axis `p` from wrapped phase differences, so
/// that linear phases are differentiated exactly.
fn phase_derivative(psi: &[Complex64], chart: &CoordinateChart, p: usize) -> Vec<f64> {
    let a = chart.axis(p);
    let h = a.spacing();
    let s = chart.stride(p);
    (0..psi.len())
        .map(|i| {
            let k = chart.axis_index(i, p);
            match (chart.neighbor(i, p, 1), chart.neighbor(i, p, -1)) {
                (Some(u), Some(d)) => phase_step(psi[u], psi[d]) / (2.0 * h),
                (Some(_), None) if a.points >= 3 => {
                    let (u1, u2) = (i + s, i + 2 * s);
                    (4.0 * phase_step(psi[u1], psi[i]) - phase_step(psi[u2], psi[i])) / (2.0 * h)
                }
                (None, Some(_)) if a.points >= 3 && k + 1 == a.points => {
                    let (d1, d2) = (i - s, i - 2 * s);
                    -(4.0 * phase_step(psi[d1], psi[i]) - phase_step(psi[d2], psi[i])) / (2.0 * h)
                }
                _ => 0.0,
            }
        })
        .collect()
}

fn check_len(psi: &WaveFunction, chart: &CoordinateChart) -> Result<(), MadelungError> {
    if psi.len() != chart.len() {
        return Err(MadelungError::SizeMismatch { got: psi.len(), want: chart.len() });
    }
    Ok(())
}

/// Contravariant flux `(hbar/m) g^pq Im(psi* D_q psi) - u^p rho`.
fn flux(psi: &[Complex64], rho: &[f64], spec: &ProblemSpec, geo: &GeometryData, u_up: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let chart = geo.chart();
    let n = chart.dim();
    let c = spec.hbar() / spec.mass();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|q| wave_derivative(psi, chart, q).iter().zip(psi).map(|(d, v)| (v.conj() * d).im).collect())
        .collect();
    let mut j = vec![vec![0.0; chart.len()]; n];
    for i in 0..chart.len() {
        let gu = geo.metric().upper(i);
        for p in 0..n {
            let s: f64 = (0..n).map(|q| gu[p * n + q] * cov[q][i]).sum();
            j[p][i] = c * s - u_up[p][i] * rho[i];
        }
    }
    j
}

/// `-(hbar^2/2m) (Lap sqrt rho)/sqrt rho` in the form `-(hbar^2/2m)(Lap s + |grad s|^2)`
/// with `s = ln sqrt rho`, which stays finite where the density is small.
fn quantum_potential(rho: &[f64], spec: &ProblemSpec, geo: &GeometryData) -> Vec<f64> {
    let chart = geo.chart();
    let n = chart.dim();
    let s: Vec<f64> = rho.iter().map(|r| 0.5 * r.max(f64::MIN_POSITIVE).ln()).collect();
    let ds: Vec<Vec<f64>> = (0..n).map(|p| crate::geometry::field_derivative(&s, chart, p)).collect();
    let mut grad_up = vec![vec![0.0; chart.len()]; n];
    let mut sq = vec![0.0; chart.len()];
    for i in 0..chart.len() {
        let gu = geo.metric().upper(i);
        for p in 0..n {
            let up: f64 = (0..n).map(|q| gu[p * n + q] * ds[q][i]).sum();
            grad_up[p][i] = up;
            sq[i] += up * ds[p][i];
        }
    }
    let lap = divergence(&grad_up, geo.metric(), chart);
    let c = -spec.hbar() * spec.hbar() / (2.0 * spec.mass());
    lap.iter().zip(&sq).map(|(l, q)| c * (l + q)).collect()
}

/// Splits `psi` into density, phase, velocity and flux fields at `psi.time`.
pub fn decompose(psi: &WaveFunction, spec: &ProblemSpec, geo: &GeometryData) -> Result<MadelungFields, MadelungError> {
    let chart = geo.chart();
    check_len(psi, chart)?;
    let n = chart.dim();
    let len = chart.len();
    let rho = psi.density();
    let peak = rho.iter().copied().fold(0.0, f64::max);
    let mask: Vec<bool> = rho.iter().map(|r| *r > MASK_RATIO * peak && peak > 0.0).collect();
    let (component, roots) = label_components(&mask, chart, &rho, true);
    let (holes, hole_roots) = label_components(&mask, chart, &rho, false);
    let mut undefined: Vec<PhaseUndefined> =
        hole_roots.iter().map(|_| PhaseUndefined { first: usize::MAX, points: 0 }).collect();
    for (i, h) in holes.iter().enumerate() {
        if *h != usize::MAX {
            let u = &mut undefined[*h];
            u.first = u.first.min(i);
            u.points += 1;
        }
    }

    // unwrap the phase outward from the densest point of each component
    let mut phi: Vec<f64> = psi.values.iter().map(|v| v.arg()).collect();
    let mut seen = vec![false; len];
    for &r in &roots {
        phi[r] = psi.values[r].arg();
        seen[r] = true;
        let mut q = VecDeque::from([r]);
        while let Some(i) = q.pop_front() {
            for p in 0..n {
                for d in [1isize, -1] {
                    if let Some(k) = chart.neighbor(i, p, d) {
                        if mask[k] && !seen[k] {
                            seen[k] = true;
                            phi[k] = phi[i] + phase_step(psi.values[k], psi.values[i]);
                            q.push_back(k);
                        }
                    }
                }
            }
        }
    }

    let (_, u_up) = raised_gauge(spec, geo, psi.time)?;
    let dphi: Vec<Vec<f64>> = (0..n).map(|p| phase_derivative(&psi.values, chart, p)).collect();
    let c = spec.hbar() / spec.mass();
    let mut v = vec![vec![0.0; len]; n];
    for i in 0..len {
        if !mask[i] {
            continue;
        }
        let gu = geo.metric().upper(i);
        for p in 0..n {
            let s: f64 = (0..n).map(|q| gu[p * n + q] * dphi[q][i]).sum();
            v[p][i] = c * s - u_up[p][i];
        }
    }
    let j = flux(&psi.values, &rho, spec, geo, &u_up);
    let mut qp = quantum_potential(&rho, spec, geo);
    for (q, m) in qp.iter_mut().zip(&mask) {
        if !m {
            *q = 0.0;
        }
    }
    Ok(MadelungFields {
        rho,
        phi,
        v,
        j,
        quantum_potential: qp,
        mask,
        component,
        components: roots.len(),
        undefined,
        time: psi.time,
    })
}

/// Reconstruction over a mask with several components; each component's
/// phase is fixed independently.
#[derive(Debug, Clone, Error)]
#[error("mask has {components} disconnected components")]
pub struct DisconnectedMask {
    pub components: usize,
    pub psi: WaveFunction,
}

/// `sqrt(rho) exp(i phi)`.
pub fn reconstruct(fields: &MadelungFields) -> Result<WaveFunction, DisconnectedMask> {
    let values = fields
        .rho
        .iter()
        .zip(&fields.phi)
        .map(|(r, p)| Complex64::from_polar(r.sqrt(), *p))
        .collect();
    let psi = WaveFunction { values, time: fields.time };
    if fields.components > 1 {
        return Err(DisconnectedMask { components: fields.components, psi });
    }
    Ok(psi)
}

/// Per-sample continuity residual `d_t rho + div j`.
#[derive(Debug, Clone)]
pub struct ContinuityReport {
    pub times: Vec<f64>,
    /// Weighted L2 norm of the residual field.
    pub l2: Vec<f64>,
    /// Weighted integral of the residual field.
    pub integral: Vec<f64>,
    pub max_l2: f64,
    /// Largest deviation of the total probability from its initial value.
    pub probability_drift: f64,
}

/// Time derivative at sample `k` from central differences, one-sided
/// second-order stencils at the ends.
fn time_derivative<T: Copy>(
    k: usize,
    count: usize,
    dt: f64,
    at: impl Fn(usize) -> T,
    diff: impl Fn(T, T) -> f64,
) -> f64 {
    if k == 0 {
        (4.0 * diff(at(1), at(0)) - diff(at(2), at(0))) / (2.0 * dt)
    } else if k + 1 == count {
        -(4.0 * diff(at(k - 1), at(k)) - diff(at(k - 2), at(k))) / (2.0 * dt)
    } else {
        diff(at(k + 1), at(k - 1)) / (2.0 * dt)
    }
}

pub fn continuity_residual(
    traj: &Trajectory,
    spec: &ProblemSpec,
    geo: &GeometryData,
) -> Result<ContinuityReport, MadelungError> {
    let count = traj.states.len();
    if count < 3 {
        return Err(MadelungError::ShortTrajectory { need: 3, got: count });
    }
    let chart = geo.chart();
    for s in &traj.states {
        check_len(s, chart)?;
    }
    let w = geo.weights();
    let dt = traj.sample_dt;
    let densities: Vec<Vec<f64>> = traj.states.iter().map(|s| s.density()).collect();
    let rows: Vec<Result<(f64, f64), MadelungError>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let psi = &traj.states[k];
            let (_, u_up) = raised_gauge(spec, geo, psi.time)?;
            let j = flux(&psi.values, &densities[k], spec, geo, &u_up);
            let div = divergence(&j, geo.metric(), chart);
            let (mut l2, mut integral) = (0.0, 0.0);
            for i in 0..chart.len() {
                let drho = time_derivative(k, count, dt, |m| densities[m][i], |a, b| a - b);
                let r = drho + div[i];
                l2 += w[i] * r * r;
                integral += w[i] * r;
            }
            Ok((l2.sqrt(), integral))
        })
        .collect();
    let mut l2 = Vec::with_capacity(count);
    let mut integral = Vec::with_capacity(count);
    for r in rows {
        let (a, b) = r?;
        l2.push(a);
        integral.push(b);
    }
    let total = |d: &Vec<f64>| d.iter().zip(w).map(|(r, w)| r * w).sum::<f64>();
    let p0 = total(&densities[0]);
    let probability_drift = densities.iter().map(|d| (total(d) - p0).abs()).fold(0.0, f64::max);
    Ok(ContinuityReport {
        times: traj.times(),
        max_l2: l2.iter().copied().fold(0.0, f64::max),
        l2,
        integral,
        probability_drift,
    })
}

/// `d_t phi` at sample `k` of a trajectory from wrapped phase differences.
pub fn phase_time_derivative(traj: &Trajectory, k: usize) -> Result<Vec<f64>, MadelungError> {
    let count = traj.states.len();
    if count < 3 {
        return Err(MadelungError::ShortTrajectory { need: 3, got: count });
    }
    let len = traj.states[k].len();
    Ok((0..len)
        .map(|i| time_derivative(k, count, traj.sample_dt, |m| traj.states[m].values[i], phase_step))
        .collect())
}

/// Hamilton–Jacobi residual on the interior of the mask.
#[derive(Debug, Clone)]
pub struct HamiltonJacobiReport {
    /// `hbar d_t phi + (1/2m) g^pq (hbar d_p phi - m u_p)(hbar d_q phi - m u_q) + W + Q`,
    /// zero outside `interior`.
    pub residual: Vec<f64>,
    pub quantum_potential: Vec<f64>,
    pub interior: Vec<bool>,
    pub max_residual: f64,
    pub max_quantum: f64,
}

pub fn hamilton_jacobi_residual(
    psi: &WaveFunction,
    spec: &ProblemSpec,
    geo: &GeometryData,
    dphi_dt: &[f64],
) -> Result<HamiltonJacobiReport, MadelungError> {
    let fields = decompose(psi, spec, geo)?;
    let chart = geo.chart();
    let n = chart.dim();
    let interior = fields.interior(chart);
    if !interior.iter().any(|b| *b) {
        return Err(MadelungError::PhaseUndefined);
    }
    let (hbar, m) = (spec.hbar(), spec.mass());
    let w = spec.sample_potential(psi.time)?;
    let (u_cov, _) = raised_gauge(spec, geo, psi.time)?;
    let dphi: Vec<Vec<f64>> = (0..n).map(|p| phase_derivative(&psi.values, chart, p)).collect();
    let mut residual = vec![0.0; chart.len()];
    let mut k = vec![0.0; n];
    let (mut max_residual, mut max_quantum) = (0.0f64, 0.0f64);
    for i in 0..chart.len() {
        if !interior[i] {
            continue;
        }
        for p in 0..n {
            k[p] = hbar * dphi[p][i] - m * u_cov[p][i];
        }
        let gu = geo.metric().upper(i);
        let mut kin = 0.0;
        for p in 0..n {
            for q in 0..n {
                kin += gu[p * n + q] * k[p] * k[q];
            }
        }
        let q = fields.quantum_potential[i];
        let r = hbar * dphi_dt[i] + kin / (2.0 * m) + w[i] + q;
        residual[i] = r;
        max_residual = max_residual.max(r.abs());
        max_quantum = max_quantum.max(q.abs());
    }
    Ok(HamiltonJacobiReport { residual, quantum_potential: fields.quantum_potential, interior, max_residual, max_quantum })
}
