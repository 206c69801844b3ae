use std::borrow::Cow;

use num_complex::Complex64;
use thiserror::Error;

use super::profile::{envelope_size, rcm_order, ProfileLu};
use super::{hermitian_part, scaled_operator};
use crate::dsl::ProblemSpec;
use crate::geometry::GeometryData;
use crate::operator::{build_hamiltonian, DiscretizedHamiltonian, OperatorError};
use crate::sparse::CsrMatrix;
use crate::states::WaveFunction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("initial state has norm {0}, expected 1")]
    NotNormalized(f64),
    #[error("initial state has {got} values, operator has {want}")]
    SizeMismatch { got: usize, want: usize },
    #[error("operator is not Hermitian under its weights (relative defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("linear solve failed at step {step} (relative residual {residual:e})")]
    LinearSolveFailure { step: usize, residual: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Source of the Hamiltonian at a given time.
pub trait HamiltonianProvider {
    fn hamiltonian_at(&self, t: f64) -> Result<Cow<'_, DiscretizedHamiltonian>, OperatorError>;
    fn time_dependent(&self) -> bool;
}

impl HamiltonianProvider for DiscretizedHamiltonian {
    fn hamiltonian_at(&self, _t: f64) -> Result<Cow<'_, DiscretizedHamiltonian>, OperatorError> {
        Ok(Cow::Borrowed(self))
    }

    fn time_dependent(&self) -> bool {
        false
    }
}

/// Reassembles the Hamiltonian of a problem whenever its coefficients depend on time.
pub struct SpecProvider<'a> {
    spec: &'a ProblemSpec,
    geo: &'a GeometryData,
    fixed: Option<DiscretizedHamiltonian>,
}

impl<'a> SpecProvider<'a> {
    pub fn new(spec: &'a ProblemSpec, geo: &'a GeometryData) -> Result<Self, OperatorError> {
        let fixed = if spec.time_dependent() { None } else { Some(build_hamiltonian(spec, geo, 0.0)?) };
        Ok(Self { spec, geo, fixed })
    }
}

impl HamiltonianProvider for SpecProvider<'_> {
    fn hamiltonian_at(&self, t: f64) -> Result<Cow<'_, DiscretizedHamiltonian>, OperatorError> {
        match &self.fixed {
            Some(h) => Ok(Cow::Borrowed(h)),
            None => build_hamiltonian(self.spec, self.geo, t).map(Cow::Owned),
        }
    }

    fn time_dependent(&self) -> bool {
        self.fixed.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    /// Keep every `stride`-th state.
    pub stride: usize,
    /// Relative residual the linear solves must reach.
    pub tol: f64,
    /// Factor envelopes at least this large use an iterative solver instead.
    pub max_envelope: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { stride: 1, tol: 1e-12, max_envelope: 20_000_000 }
    }
}

/// States sampled at uniform time intervals.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<WaveFunction>,
    /// Time between consecutive samples.
    pub sample_dt: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }

    pub fn norms(&self, weights: &[f64]) -> Vec<f64> {
        self.states.iter().map(|s| s.norm(weights)).collect()
    }

    pub fn last(&self) -> &WaveFunction {
        self.states.last().expect("trajectory is never empty")
    }
}

pub fn evolve(
    provider: &dyn HamiltonianProvider,
    psi0: &WaveFunction,
    dt: f64,
    steps: usize,
) -> Result<Trajectory, EvolveError> {
    evolve_with(provider, psi0, dt, steps, &EvolveOptions::default())
}

/// Crank–Nicolson with the Hamiltonian evaluated at the midpoint of each step.
pub fn evolve_with(
    provider: &dyn HamiltonianProvider,
    psi0: &WaveFunction,
    dt: f64,
    steps: usize,
    opts: &EvolveOptions,
) -> Result<Trajectory, EvolveError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EvolveError::InvalidStep(dt));
    }
    let stride = opts.stride.max(1);
    let h0 = provider.hamiltonian_at(psi0.time + 0.5 * dt)?;
    let n = h0.len();
    if psi0.len() != n {
        return Err(EvolveError::SizeMismatch { got: psi0.len(), want: n });
    }
    let nrm = psi0.norm(h0.weights());
    if (nrm - 1.0).abs() > 1e-8 {
        return Err(EvolveError::NotNormalized(nrm));
    }
    let sw: Vec<f64> = h0.weights().iter().map(|w| w.sqrt()).collect();
    let mut y: Vec<Complex64> = psi0.values.iter().zip(&sw).map(|(v, s)| v * *s).collect();
    let mut t = psi0.time;
    let mut states = vec![psi0.clone()];
    let stepper = if provider.time_dependent() { None } else { Some(CnStepper::new(&h0, dt, opts)?) };

    for step in 1..=steps {
        let owned;
        let st = match &stepper {
            Some(s) => s,
            None => {
                let h = provider.hamiltonian_at(t + 0.5 * dt)?;
                owned = CnStepper::new(&h, dt, opts)?;
                &owned
            }
        };
        y = st.step(&y).map_err(|residual| EvolveError::LinearSolveFailure { step, residual })?;
        t = psi0.time + step as f64 * dt;
        if step % stride == 0 {
            let values = y.iter().zip(&sw).map(|(v, s)| v / *s).collect();
            states.push(WaveFunction { values, time: t });
        }
    }
    Ok(Trajectory { states, sample_dt: dt * stride as f64 })
}

enum Solver {
    Direct(ProfileLu<Complex64>),
    Iterative,
}

/// One Crank–Nicolson step in the scaled variables `y = W^{1/2} psi`.
struct CnStepper {
    /// `I + i delta B`
    lhs: CsrMatrix<Complex64>,
    /// `I - i delta B`
    rhs: CsrMatrix<Complex64>,
    solver: Solver,
    tol: f64,
}

impl CnStepper {
    fn new(h: &DiscretizedHamiltonian, dt: f64, opts: &EvolveOptions) -> Result<Self, EvolveError> {
        let (b, _, defect) = scaled_operator(h);
        if defect > 1e-10 {
            return Err(EvolveError::NotHermitian { defect });
        }
        let b = hermitian_part(&b);
        let delta = dt / (2.0 * h.hbar());
        let id = CsrMatrix::from_diagonal(&vec![Complex64::new(1.0, 0.0); b.nrows()]);
        let lhs = id.add(&b.map(|v| v * Complex64::new(0.0, delta)));
        let rhs = id.add(&b.map(|v| v * Complex64::new(0.0, -delta)));
        let perm = rcm_order(&lhs);
        let solver = if envelope_size(&lhs, &perm) < opts.max_envelope {
            ProfileLu::factor(&lhs, &perm).map_or(Solver::Iterative, Solver::Direct)
        } else {
            Solver::Iterative
        };
        Ok(Self { lhs, rhs, solver, tol: opts.tol })
    }

    /// Advances one step; on failure returns the relative residual reached.
    fn step(&self, y: &[Complex64]) -> Result<Vec<Complex64>, f64> {
        let b = self.rhs.mul_vec(y);
        let bn = l2(&b);
        if bn == 0.0 {
            return Ok(b);
        }
        match &self.solver {
            Solver::Direct(lu) => {
                let mut x = lu.solve(&b);
                let mut rel = f64::INFINITY;
                for _ in 0..4 {
                    let r = residual(&self.lhs, &x, &b);
                    let new = l2(&r) / bn;
                    if new >= rel || new <= 1e-3 * self.tol {
                        rel = rel.min(new);
                        break;
                    }
                    rel = new;
                    let dx = lu.solve(&r);
                    for (a, d) in x.iter_mut().zip(dx) {
                        *a += d;
                    }
                }
                let rel = rel.min(l2(&residual(&self.lhs, &x, &b)) / bn);
                if rel <= self.tol {
                    Ok(x)
                } else {
                    Err(rel)
                }
            }
            Solver::Iterative => bicgstab(&self.lhs, &b, y, 1e-3 * self.tol, 2000),
        }
    }
}

fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn residual(a: &CsrMatrix<Complex64>, x: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let ax = a.mul_vec(x);
    b.iter().zip(ax).map(|(u, v)| u - v).collect()
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Jacobi-preconditioned BiCGSTAB; returns the relative residual on failure.
fn bicgstab(
    a: &CsrMatrix<Complex64>,
    b: &[Complex64],
    guess: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<Complex64>, f64> {
    let dinv: Vec<Complex64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let precond = |v: &[Complex64]| -> Vec<Complex64> { v.iter().zip(&dinv).map(|(x, d)| x * d).collect() };
    let bn = l2(b);
    let mut x = guess.to_vec();
    let mut r = residual(a, &x, b);
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
    let mut v = vec![Complex64::new(0.0, 0.0); b.len()];
    let mut p = v.clone();
    let mut rel = l2(&r) / bn;
    for _ in 0..max_iter {
        if rel <= tol {
            return Ok(x);
        }
        let rho_new = dotc(&r0, &r);
        if rho_new.norm() == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let ph = precond(&p);
        v = a.mul_vec(&ph);
        alpha = rho / dotc(&r0, &v);
        let s: Vec<Complex64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        let sh = precond(&s);
        let t = a.mul_vec(&sh);
        let tt = dotc(&t, &t).re;
        omega = if tt > 0.0 { dotc(&t, &s) / tt } else { Complex64::new(0.0, 0.0) };
        for i in 0..x.len() {
            x[i] += alpha * ph[i] + omega * sh[i];
        }
        r = residual(a, &x, b);
        rel = l2(&r) / bn;
        if omega.norm() == 0.0 {
            break;
        }
    }
    if rel <= tol * 1e3 {
        Ok(x)
    } else {
        Err(rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hamiltonian_leaves_state_fixed() {
        let m = CsrMatrix::from_triplets(1, 1, vec![(0, 0, Complex64::new(0.0, 0.0))]);
        let h = DiscretizedHamiltonian::from_parts(m, vec![1.0], 1.0);
        let psi = WaveFunction::new(vec![Complex64::new(0.6, 0.8)]);
        let tr = evolve(&h, &psi, 0.1, 10).unwrap();
        assert_eq!(tr.states.len(), 11);
        assert_eq!(tr.last().values, psi.values);
        assert!((tr.last().time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_level_phase_and_solvers_agree() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, Complex64::new(1.0, 0.0)), (1, 1, Complex64::new(3.0, 0.0))]);
        let h = DiscretizedHamiltonian::from_parts(m, vec![2.0, 2.0], 1.0);
        let s = 0.5f64.sqrt();
        let psi = WaveFunction::new(vec![Complex64::new(s, 0.0), Complex64::new(0.0, 0.0)]);
        let tr = evolve(&h, &psi, 1e-3, 1000).unwrap();
        // Cayley phase per step: (1 - i d)/(1 + i d), d = dt/2
        let d: f64 = 5e-4;
        let phase = 1000.0 * 2.0 * d.atan();
        let want = Complex64::from_polar(s, -phase);
        assert!((tr.last().values[0] - want).norm() < 1e-12);
        let it = evolve_with(&h, &psi, 1e-3, 1000, &EvolveOptions { max_envelope: 0, ..Default::default() }).unwrap();
        assert!((it.last().values[0] - want).norm() < 1e-11);
    }
}
