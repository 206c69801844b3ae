//! Stochastic electrodynamics: a charged harmonic oscillator driven by a
//! sampled zero-point field in the dipole approximation.
//!
//! Units are `c = 1`. The field enters as an acceleration `a(t) = qE(t)/m`
//! whose one-sided spectral density per Cartesian component is
//!
//! ```text
//! G(w) = gamma hbar w^3 / (pi m w0^2)
//! ```
//!
//! With radiation damping `gamma = (2/3) q^2 w0^2 / m` this is the
//! zero-point form `2 hbar w^3 / (3 pi)` for the field itself, and a narrow
//! resonance absorbs a mean energy of `hbar w0 / 2` per component.
//!
//! Sampled fields place `M` modes on a uniform grid across the band
//! `w0 (1 +- delta)`. Each mode gets a complex Gaussian coefficient, so the
//! field is a stationary Gaussian process whose mean energy per mode is
//! `hbar w / 2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SedError {
    #[error("step {dt} exceeds 2 pi / (64 w_max) = {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("damping {gamma} exceeds 1e-3 w0 = {limit}")]
    DampingTooLarge { gamma: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("field has {field} components, oscillator expects {oscillator}")]
    ComponentMismatch { field: usize, oscillator: usize },
}

/// Oscillator `x'' = -w0^2 x - gamma x' + a(t)`, one copy per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillator {
    pub mass: f64,
    pub omega0: f64,
    pub gamma: f64,
    pub components: usize,
}

impl Oscillator {
    pub fn new(mass: f64, omega0: f64, gamma: f64, components: usize) -> Result<Self, SedError> {
        if !(mass > 0.0 && omega0 > 0.0 && gamma >= 0.0) || !(components == 1 || components == 3) {
            return Err(SedError::InvalidParameter(format!(
                "mass {mass}, omega0 {omega0}, gamma {gamma}, components {components}"
            )));
        }
        if gamma > 1e-3 * omega0 {
            return Err(SedError::DampingTooLarge { gamma, limit: 1e-3 * omega0 });
        }
        Ok(Oscillator { mass, omega0, gamma, components })
    }

    pub fn energy(&self, x: f64, v: f64) -> f64 {
        0.5 * self.mass * (v * v + self.omega0 * self.omega0 * x * x)
    }
}

/// Field parameters for [`sample_field`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldParams {
    pub omega0: f64,
    pub gamma: f64,
    pub hbar: f64,
    pub mass: f64,
    /// Relative half-width of the band.
    pub band: f64,
    pub modes: usize,
    pub components: usize,
}

impl FieldParams {
    pub fn for_oscillator(osc: &Oscillator, hbar: f64) -> Self {
        FieldParams {
            omega0: osc.omega0,
            gamma: osc.gamma,
            hbar,
            mass: osc.mass,
            band: 0.1,
            modes: 1000,
            components: osc.components,
        }
    }

    /// One-sided acceleration spectral density per component.
    pub fn density(&self, w: f64) -> f64 {
        self.gamma * self.hbar * w.powi(3) / (PI * self.mass * self.omega0 * self.omega0)
    }
}

/// A superposition `a_i(t) = sum_k A_k e_ki cos(w_k t + phi_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SzpfModeSet {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    /// Per-mode component weights, empty for a single component.
    pub polarizations: Vec<[f64; 3]>,
    pub components: usize,
    /// Common frequency spacing when every mode lies on `k * spacing`.
    pub spacing: Option<f64>,
}

impl SzpfModeSet {
    /// A single deterministic mode for one component.
    pub fn single(frequency: f64, amplitude: f64, phase: f64) -> Self {
        SzpfModeSet {
            frequencies: vec![frequency],
            amplitudes: vec![amplitude],
            phases: vec![phase],
            polarizations: Vec::new(),
            components: 1,
            spacing: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Every amplitude multiplied by `s`; `0.0` switches the field off.
    pub fn scaled(mut self, s: f64) -> Self {
        for a in &mut self.amplitudes {
            *a *= s;
        }
        self
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies.iter().fold(0.0, |m, w| m.max(*w))
    }

    fn weight(&self, k: usize, c: usize) -> f64 {
        if self.polarizations.is_empty() {
            1.0
        } else {
            self.polarizations[k][c]
        }
    }

    /// Direct evaluation of component `c` at time `t`.
    pub fn evaluate(&self, c: usize, t: f64) -> f64 {
        (0..self.len())
            .map(|k| self.weight(k, c) * self.amplitudes[k] * (self.frequencies[k] * t + self.phases[k]).cos())
            .sum()
    }
}

/// Random stream for ensemble member `member` under `seed`.
pub fn member_rng(seed: u64, member: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    rng
}

/// Samples a zero-point field on `params.modes` grid frequencies.
///
/// Each grid frequency stands for the field integrated over all propagation
/// directions, so the three components get independent coefficients.
pub fn sample_field(params: &FieldParams, rng: &mut impl Rng) -> Result<SzpfModeSet, SedError> {
    let FieldParams { omega0, band, modes, components, .. } = *params;
    if modes == 0 || !(band > 0.0 && band < 1.0) || !(components == 1 || components == 3) {
        return Err(SedError::InvalidParameter(format!("modes {modes}, band {band}, components {components}")));
    }
    let spacing = 2.0 * band * omega0 / modes as f64;
    let first = ((1.0 - band) * omega0 / spacing).round() as usize;
    let mut set = SzpfModeSet {
        frequencies: Vec::with_capacity(modes),
        amplitudes: Vec::with_capacity(modes),
        phases: Vec::with_capacity(modes),
        polarizations: Vec::new(),
        components,
        spacing: Some(spacing),
    };
    let axes: Vec<[f64; 3]> = match components {
        1 => vec![[1.0, 0.0, 0.0]],
        _ => vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };
    for k in 0..modes {
        let w = (first + k) as f64 * spacing;
        let s = (params.density(w) * spacing).sqrt();
        for e in &axes {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let c = Complex64::new(re, im) * s;
            set.frequencies.push(w);
            set.amplitudes.push(c.norm());
            set.phases.push(c.arg());
            if components == 3 {
                set.polarizations.push(*e);
            }
        }
    }
    Ok(set)
}

/// Fast evaluation of a mode set.
///
/// Grid mode sets are written as `Re[e^{i wc t} b(t)]` with a slowly varying
/// envelope `b` tabulated by one inverse FFT over its period `2 pi / spacing`
/// and read back by cubic interpolation. Other sets are summed directly.
enum Field<'a> {
    Direct(&'a SzpfModeSet),
    Envelope { center: f64, tau: f64, table: Vec<Vec<Complex64>> },
}

const OVERSAMPLE: usize = 64;

impl<'a> Field<'a> {
    fn new(modes: &'a SzpfModeSet) -> Self {
        let Some(spacing) = modes.spacing.filter(|_| modes.len() > 16) else {
            return Field::Direct(modes);
        };
        let idx: Vec<i64> = modes.frequencies.iter().map(|w| (w / spacing).round() as i64).collect();
        let lo = *idx.iter().min().unwrap();
        let hi = *idx.iter().max().unwrap();
        let mid = (lo + hi) / 2;
        let n = ((hi - lo + 1) as usize * OVERSAMPLE).next_power_of_two();
        let mut fft = FftPlanner::new();
        let plan = fft.plan_fft_inverse(n);
        let table = (0..modes.components)
            .map(|c| {
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                for (k, &j) in idx.iter().enumerate() {
                    let slot = (j - mid).rem_euclid(n as i64) as usize;
                    buf[slot] += Complex64::from_polar(modes.weight(k, c) * modes.amplitudes[k], modes.phases[k]);
                }
                plan.process(&mut buf);
                buf
            })
            .collect();
        Field::Envelope { center: mid as f64 * spacing, tau: 2.0 * PI / (spacing * n as f64), table }
    }

    fn at(&self, c: usize, t: f64) -> f64 {
        match self {
            Field::Direct(m) => m.evaluate(c, t),
            Field::Envelope { center, tau, table } => {
                let b = &table[c];
                let n = b.len();
                let u = t / tau;
                let f = u.floor();
                let s = u - f;
                let i = (f as i64).rem_euclid(n as i64) as usize;
                let p = |d: isize| b[(i as isize + d).rem_euclid(n as isize) as usize];
                // four-point Lagrange on nodes -1, 0, 1, 2
                let env = p(-1) * (-s * (s - 1.0) * (s - 2.0) / 6.0)
                    + p(0) * ((s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0)
                    + p(1) * (-(s + 1.0) * s * (s - 2.0) / 2.0)
                    + p(2) * ((s + 1.0) * s * (s - 1.0) / 6.0);
                (Complex64::from_polar(1.0, center * t) * env).re
            }
        }
    }
}

/// Positions and velocities sampled every `record_every` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SedTrajectory {
    pub sample_dt: f64,
    /// `states[sample][component] = (x, v)`.
    pub states: Vec<Vec<(f64, f64)>>,
}

impl SedTrajectory {
    /// Total energy at every sample.
    pub fn energies(&self, osc: &Oscillator) -> Vec<f64> {
        self.states.iter().map(|s| s.iter().map(|&(x, v)| osc.energy(x, v)).sum()).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| k as f64 * self.sample_dt).collect()
    }
}

/// Velocity Verlet for the conservative part with the damping factor
/// `e^{-gamma dt / 2}` applied on both sides, starting at rest.
pub fn integrate_trajectory(
    modes: &SzpfModeSet,
    osc: &Oscillator,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<SedTrajectory, SedError> {
    if modes.components != osc.components {
        return Err(SedError::ComponentMismatch { field: modes.components, oscillator: osc.components });
    }
    let limit = 2.0 * PI / (64.0 * modes.max_frequency().max(osc.omega0));
    if !(dt > 0.0) || dt > limit {
        return Err(SedError::StepTooLarge { dt, limit });
    }
    if record_every == 0 {
        return Err(SedError::InvalidParameter("record_every must be positive".into()));
    }
    let field = Field::new(modes);
    let w2 = osc.omega0 * osc.omega0;
    let damp = (-0.5 * osc.gamma * dt).exp();
    let nc = osc.components;
    let mut x = vec![0.0; nc];
    let mut v = vec![0.0; nc];
    let mut a: Vec<f64> = (0..nc).map(|c| field.at(c, 0.0)).collect();
    let mut states = Vec::with_capacity(steps / record_every + 1);
    states.push(x.iter().zip(&v).map(|(x, v)| (*x, *v)).collect());
    for step in 1..=steps {
        let t = step as f64 * dt;
        for c in 0..nc {
            v[c] = damp * v[c] + 0.5 * dt * (a[c] - w2 * x[c]);
            x[c] += dt * v[c];
            a[c] = field.at(c, t);
            v[c] = damp * (v[c] + 0.5 * dt * (a[c] - w2 * x[c]));
        }
        if step % record_every == 0 {
            states.push(x.iter().zip(&v).map(|(x, v)| (*x, *v)).collect());
        }
    }
    Ok(SedTrajectory { sample_dt: dt * record_every as f64, states })
}

/// Ensemble run settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub members: usize,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
}

/// One trajectory per member, each with its own field drawn from
/// [`member_rng`]`(seed, member)`.
pub fn run_ensemble(
    params: &FieldParams,
    osc: &Oscillator,
    cfg: &EnsembleConfig,
) -> Result<Vec<SedTrajectory>, SedError> {
    (0..cfg.members)
        .into_par_iter()
        .map(|m| {
            let mut rng = member_rng(cfg.seed, m as u64);
            let modes = sample_field(params, &mut rng)?;
            integrate_trajectory(&modes, osc, cfg.dt, cfg.steps, cfg.record_every)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub members: usize,
    pub samples: usize,
    pub mean_energy: f64,
    pub mean_energy_se: f64,
    /// `<E^2> / <E>^2`.
    pub ratio: f64,
    pub ratio_se: f64,
}

fn post_discard<'a>(runs: &'a [SedTrajectory], discard: f64) -> impl Iterator<Item = &'a [Vec<(f64, f64)>]> {
    runs.iter().map(move |r| {
        let skip = (discard * r.states.len() as f64).ceil() as usize;
        &r.states[skip.min(r.states.len())..]
    })
}

/// Mean energy and second-moment ratio over all samples after the first
/// `discard` fraction of each run. Standard errors treat members as
/// independent and samples within a member as correlated.
pub fn ensemble_stats(runs: &[SedTrajectory], osc: &Oscillator, discard: f64) -> Result<EnsembleStats, SedError> {
    if !(0.0..=0.9).contains(&discard) {
        return Err(SedError::InvalidParameter(format!("discard fraction {discard}")));
    }
    let per: Vec<(f64, f64, usize)> = post_discard(runs, discard)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let e: Vec<f64> = s.iter().map(|c| c.iter().map(|&(x, v)| osc.energy(x, v)).sum()).collect();
            let n = e.len() as f64;
            (e.iter().sum::<f64>() / n, e.iter().map(|x| x * x).sum::<f64>() / n, e.len())
        })
        .collect();
    let members = per.len();
    if members < 2 {
        return Err(SedError::InvalidParameter(format!("need at least 2 non-empty runs, got {members}")));
    }
    let samples = per.iter().map(|p| p.2).sum();
    let mf = members as f64;
    let a = per.iter().map(|p| p.0).sum::<f64>() / mf;
    let b = per.iter().map(|p| p.1).sum::<f64>() / mf;
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for p in &per {
        vaa += (p.0 - a).powi(2);
        vbb += (p.1 - b).powi(2);
        vab += (p.0 - a) * (p.1 - b);
    }
    let norm = mf * (mf - 1.0);
    let (vaa, vbb, vab) = (vaa / norm, vbb / norm, vab / norm);
    let ratio = b / (a * a);
    let (da, db) = (-2.0 * b / a.powi(3), 1.0 / (a * a));
    let var_r = da * da * vaa + db * db * vbb + 2.0 * da * db * vab;
    Ok(EnsembleStats {
        members,
        samples,
        mean_energy: a,
        mean_energy_se: vaa.sqrt(),
        ratio,
        ratio_se: var_r.max(0.0).sqrt(),
    })
}

/// Mean energy over the first and second halves of the post-discard window
/// and the standard error of their difference.
pub fn stationarity(runs: &[SedTrajectory], osc: &Oscillator, discard: f64) -> (f64, f64, f64) {
    let halves: Vec<(f64, f64)> = post_discard(runs, discard)
        .filter(|s| s.len() >= 2)
        .map(|s| {
            let e: Vec<f64> = s.iter().map(|c| c.iter().map(|&(x, v)| osc.energy(x, v)).sum()).collect();
            let h = e.len() / 2;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            (mean(&e[..h]), mean(&e[h..]))
        })
        .collect();
    let n = halves.len() as f64;
    let first = halves.iter().map(|h| h.0).sum::<f64>() / n;
    let second = halves.iter().map(|h| h.1).sum::<f64>() / n;
    let d = first - second;
    let var = halves.iter().map(|h| (h.0 - h.1 - d).powi(2)).sum::<f64>() / (n * (n - 1.0));
    (first, second, var.sqrt())
}

/// Kolmogorov-Smirnov distance between `samples` and the exponential law
/// with the sample mean, and the 1% critical value `1.628 / sqrt(n)`.
pub fn exponential_ks(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let mean = s.iter().sum::<f64>() / n as f64;
    let nf = n as f64;
    let d = s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = 1.0 - (-x / mean).exp();
        d.max(((i + 1) as f64 / nf - f).abs()).max((f - i as f64 / nf).abs())
    });
    (d, 1.628 / nf.sqrt())
}

/// Final-sample energies, one per run, independent across members.
pub fn final_energies(runs: &[SedTrajectory], osc: &Oscillator) -> Vec<f64> {
    runs.iter()
        .filter_map(|r| r.states.last())
        .map(|s| s.iter().map(|&(x, v)| osc.energy(x, v)).sum())
        .collect()
}

/// One-sided Hann-windowed periodogram averaged over `segments`
/// non-overlapping pieces. Returns angular frequencies and densities.
pub fn periodogram(signal: &[f64], dt: f64, segments: usize) -> (Vec<f64>, Vec<f64>) {
    let len = signal.len() / segments.max(1);
    let mut planner = FftPlanner::new();
    let plan = planner.plan_fft_forward(len);
    let win: Vec<f64> = (0..len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos()).collect();
    let wss: f64 = win.iter().map(|w| w * w).sum();
    let half = len / 2 + 1;
    let mut psd = vec![0.0; half];
    for s in 0..segments.max(1) {
        let mut buf: Vec<Complex64> =
            signal[s * len..(s + 1) * len].iter().zip(&win).map(|(x, w)| Complex64::new(x * w, 0.0)).collect();
        plan.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            // one-sided density in angular frequency
            let fold = if k == 0 || 2 * k == len { 1.0 } else { 2.0 };
            *p += fold * buf[k].norm_sqr() * dt / (2.0 * PI * wss);
        }
    }
    let freqs = (0..half).map(|k| 2.0 * PI * k as f64 / (len as f64 * dt)).collect();
    (freqs, psd.into_iter().map(|p| p / segments.max(1) as f64).collect())
}
