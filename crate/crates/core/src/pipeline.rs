//! End-to-end runs that write CSV tables and text summaries.
//!
//! Every table starts with a header row and floats are written as
//! `{:.16e}`. Outputs depend only on the inputs and seeds, so reruns are
//! byte-identical. If a run fails part way, the files it already wrote are
//! removed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use thiserror::Error;

use crate::dsl::{parse_problem, DslError, ProblemSpec, Symmetry};
use crate::ehrenfest::{ehrenfest_residual, EhrenfestError, EhrenfestReport, LEAKAGE_LIMIT};
use crate::exchange::{exchange_commutator, exchange_sector, ExchangeError};
use crate::geometry::{GeometryData, GeometryError};
use crate::madelung::{
    continuity_residual, decompose, hamilton_jacobi_residual, phase_time_derivative, reconstruct, ContinuityReport,
    MadelungError,
};
use crate::operator::{build_hamiltonian, hermiticity_check, OperatorError};
use crate::presets::{load_preset, PresetError};
use crate::sed::{
    ensemble_stats, exponential_ks, final_energies, run_ensemble, stationarity, EnsembleConfig, FieldParams,
    Oscillator, SedError,
};
use crate::solvers::{
    evolve, evolve_with, lowest_eigenpairs_with, EigenError, EigenOptions, EvolveError, EvolveOptions, SpecProvider,
    Trajectory,
};
use crate::states::{coherent_state, gaussian_1d, WaveFunction};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Preset(#[from] PresetError),
    #[error("{path}: {source}")]
    Parse { path: String, source: DslError },
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Madelung(#[from] MadelungError),
    #[error(transparent)]
    Ehrenfest(#[from] EhrenfestError),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Sed(#[from] SedError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Config(String),
}

fn config(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// Where the problem comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Preset(String),
    File(PathBuf),
}

impl Source {
    pub fn load(&self) -> Result<ProblemSpec, PipelineError> {
        match self {
            Source::Preset(name) => Ok(load_preset(name)?),
            Source::File(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
                parse_problem(&text).map_err(|source| PipelineError::Parse { path: path.display().to_string(), source })
            }
        }
    }
}

/// Starting state for `evolve` and `verify`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    /// Lowest eigenstate of the problem.
    Ground,
    /// Oscillator coherent state displaced by the amplitude; needs a
    /// one-dimensional harmonic potential.
    Coherent { amplitude: f64 },
    /// Gaussian packet `exp(-(x-x0)^2/(4 sigma^2) + i k x)` on a
    /// one-dimensional chart.
    Packet { x0: f64, sigma: f64, k: f64 },
}

/// One pass/fail line of a summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `true` when the value must not exceed the threshold, `false` when it
    /// must reach it.
    pub upper: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, upper: true }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, upper: false }
    }

    pub fn passed(&self) -> bool {
        if self.upper {
            self.value <= self.threshold
        } else {
            self.value >= self.threshold
        }
    }

    fn line(&self) -> String {
        format!(
            "{} {:.16e} {} {:.16e} {}",
            self.name,
            self.value,
            if self.upper { "<=" } else { ">=" },
            self.threshold,
            if self.passed() { "pass" } else { "FAIL" }
        )
    }
}

/// Files written and checks made by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Writes a set of files, all or nothing.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn commit(self, checks: Vec<Check>) -> Result<Outcome, PipelineError> {
        let io = |path: &Path, source| PipelineError::Io { path: path.display().to_string(), source };
        fs::create_dir_all(&self.dir).map_err(|e| io(&self.dir, e))?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let path = self.dir.join(name);
            if let Err(e) = fs::write(&path, contents) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(&path);
                return Err(io(&path, e));
            }
            written.push(path);
        }
        Ok(Outcome { files: written, checks })
    }
}

fn summary(checks: &[Check]) -> String {
    let mut s = String::from("check value relation threshold status\n");
    for c in checks {
        s.push_str(&c.line());
        s.push('\n');
    }
    let ok = checks.iter().all(Check::passed);
    let _ = writeln!(s, "overall {}", if ok { "pass" } else { "FAIL" });
    s
}

fn geometry(spec: &ProblemSpec) -> Result<GeometryData, PipelineError> {
    Ok(GeometryData::new(spec, spec.chart().clone())?)
}

fn coord_header(spec: &ProblemSpec) -> String {
    spec.chart().axes().iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join(",")
}

fn coords(spec: &ProblemSpec, i: usize) -> String {
    spec.chart().point(i).iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
}

/// Settings for [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub hermiticity_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { k: 5, tol: 1e-9, seed: 0, hermiticity_tol: 1e-10 }
    }
}

/// Lowest eigenpairs. Problems with a symmetry flag are solved in that
/// exchange sector. Writes `spectrum.csv`, `states.csv` and
/// `hermiticity.txt`.
pub fn solve(spec: &ProblemSpec, cfg: &SolveConfig, out: &Path) -> Result<Outcome, PipelineError> {
    let geo = geometry(spec)?;
    let h = build_hamiltonian(spec, &geo, 0.0)?;
    let defect = hermiticity_check(&h, 4, cfg.seed);
    let mut checks = vec![Check::at_most("hermiticity", defect, cfg.hermiticity_tol)];
    let mut opts = EigenOptions { seed: cfg.seed, ..EigenOptions::default() };
    if spec.symmetry() != Symmetry::None {
        let sector = exchange_sector(spec, &geo)?;
        let comm = exchange_commutator(&h, sector.perm(), sector.sign(), 4, cfg.seed);
        checks.push(Check::at_most("exchange_commutator", comm, cfg.hermiticity_tol));
        opts.sector = Some(sector);
    }
    let res = lowest_eigenpairs_with(&h, cfg.k, cfg.tol, &opts)?;

    let mut out_files = Outputs::new(out);
    let mut spectrum = String::from("index,eigenvalue,residual\n");
    for (n, (e, r)) in res.eigenvalues.iter().zip(&res.residuals).enumerate() {
        let _ = writeln!(spectrum, "{n},{e:.16e},{r:.16e}");
    }
    out_files.add("spectrum.csv", spectrum);

    let mut states = coord_header(spec);
    for n in 0..res.eigenvectors.len() {
        let _ = write!(states, ",re_{n},im_{n}");
    }
    states.push('\n');
    for i in 0..h.len() {
        states.push_str(&coords(spec, i));
        for v in &res.eigenvectors {
            let _ = write!(states, ",{:.16e},{:.16e}", v.values[i].re, v.values[i].im);
        }
        states.push('\n');
    }
    out_files.add("states.csv", states);
    out_files.add("hermiticity.txt", summary(&checks));
    out_files.commit(checks)
}

/// Angular frequency of a one-dimensional harmonic potential
/// `W = W0 + m w^2 (x - x0)^2 / 2`, checked on the grid.
fn harmonic_frequency(spec: &ProblemSpec) -> Result<(f64, f64), PipelineError> {
    if spec.dim() != 1 || spec.time_dependent() || spec.has_gauge() {
        return Err(config("a coherent state needs a static one-dimensional problem without gauge field"));
    }
    let w = spec.sample_potential(0.0).map_err(|e| config(e.to_string()))?;
    let chart = spec.chart();
    let n = w.len();
    if n < 3 {
        return Err(config("grid too small"));
    }
    let h = chart.spacing(0);
    let curv = (w[2] - 2.0 * w[1] + w[0]) / (h * h);
    let slope = (w[1] - w[0]) / h - 0.5 * curv * h;
    let x0 = chart.point(0)[0];
    let centre = x0 - slope / curv;
    let omega = (curv / spec.mass()).sqrt();
    let base = w[0] - 0.5 * curv * (x0 - centre).powi(2);
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let fits = (0..n).all(|i| {
        let x = chart.point(i)[0];
        (w[i] - base - 0.5 * curv * (x - centre).powi(2)).abs() <= 1e-9 * scale.max(1.0)
    });
    if !(curv > 0.0) || !fits {
        return Err(config("a coherent state needs a harmonic potential"));
    }
    Ok((omega, centre))
}

fn initial_state(spec: &ProblemSpec, geo: &GeometryData, init: InitialState, seed: u64) -> Result<WaveFunction, PipelineError> {
    let mut psi = match init {
        InitialState::Ground => {
            let h = build_hamiltonian(spec, geo, 0.0)?;
            let opts = EigenOptions { seed, ..EigenOptions::default() };
            lowest_eigenpairs_with(&h, 1, 1e-10, &opts)?.eigenvectors.remove(0)
        }
        InitialState::Coherent { amplitude } => {
            let (omega, centre) = harmonic_frequency(spec)?;
            if centre.abs() > 1e-9 {
                return Err(config("coherent states need the potential minimum at x = 0"));
            }
            coherent_state(spec.chart(), spec.mass(), omega, spec.hbar(), amplitude, 0.0)
        }
        InitialState::Packet { x0, sigma, k } => {
            if spec.dim() != 1 {
                return Err(config("a Gaussian packet needs a one-dimensional chart"));
            }
            if !(sigma > 0.0) {
                return Err(config("packet width must be positive"));
            }
            gaussian_1d(spec.chart(), x0, sigma, k)
        }
    };
    psi.normalize(geo.weights());
    Ok(psi)
}

/// Settings for [`evolve_run`] and [`verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub init: InitialState,
    pub seed: u64,
    pub tol: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig { dt: 1e-3, steps: 1000, stride: 10, init: InitialState::Ground, seed: 0, tol: 1e-12 }
    }
}

fn run_evolution(spec: &ProblemSpec, geo: &GeometryData, cfg: &EvolveConfig) -> Result<Trajectory, PipelineError> {
    if cfg.stride == 0 || cfg.steps == 0 {
        return Err(config("steps and stride must be positive"));
    }
    let psi0 = initial_state(spec, geo, cfg.init, cfg.seed)?;
    let provider = SpecProvider::new(spec, geo)?;
    let opts = EvolveOptions { stride: cfg.stride, tol: cfg.tol, ..EvolveOptions::default() };
    Ok(evolve_with(&provider, &psi0, cfg.dt, cfg.steps, &opts)?)
}

/// Crank–Nicolson evolution. Writes `trajectory.csv` and `norm.csv`.
pub fn evolve_run(spec: &ProblemSpec, cfg: &EvolveConfig, out: &Path) -> Result<Outcome, PipelineError> {
    let geo = geometry(spec)?;
    let traj = run_evolution(spec, &geo, cfg)?;
    let norms = traj.norms(geo.weights());
    let drift = norms.iter().map(|n| (n * n - norms[0] * norms[0]).abs()).fold(0.0, f64::max);
    let checks = vec![Check::at_most("probability_drift", drift, 1e-10)];

    let mut files = Outputs::new(out);
    let mut t = format!("t,{},re,im\n", coord_header(spec));
    for s in &traj.states {
        for (i, v) in s.values.iter().enumerate() {
            let _ = writeln!(t, "{:.16e},{},{:.16e},{:.16e}", s.time, coords(spec, i), v.re, v.im);
        }
    }
    files.add("trajectory.csv", t);
    let mut n = String::from("t,norm,probability_drift\n");
    for (s, v) in traj.states.iter().zip(&norms) {
        let _ = writeln!(n, "{:.16e},{:.16e},{:.16e}", s.time, v, v * v - norms[0] * norms[0]);
    }
    files.add("norm.csv", n);
    files.commit(checks)
}

/// Thresholds used by [`verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyTolerances {
    pub probability_drift: f64,
    pub round_trip: f64,
    /// Smallest acceptable error ratio when `h` and `dt` are halved.
    pub convergence_ratio: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        VerifyTolerances { probability_drift: 1e-10, round_trip: 1e-12, convergence_ratio: 3.5 }
    }
}

struct Level {
    points: Vec<usize>,
    continuity: ContinuityReport,
    ehrenfest: EhrenfestReport,
    hj: Vec<(f64, f64, f64)>,
    round_trip: f64,
    last: WaveFunction,
}

/// Hamilton–Jacobi residual at every interior sample, with `d_t phi` taken
/// from two extra steps of size `dt`. Returns `(t, rho-weighted rms, max)`.
fn hj_samples(
    traj: &Trajectory,
    spec: &ProblemSpec,
    geo: &GeometryData,
    dt: f64,
) -> Result<Vec<(f64, f64, f64)>, PipelineError> {
    let provider = SpecProvider::new(spec, geo)?;
    let w = geo.weights();
    let count = traj.states.len();
    let mut out = Vec::new();
    for s in &traj.states[1..count.saturating_sub(1)] {
        let local = evolve(&provider, s, dt, 2)?;
        let d = phase_time_derivative(&local, 1)?;
        let psi = &local.states[1];
        let r = hamilton_jacobi_residual(psi, spec, geo, &d)?;
        let rho = psi.density();
        let rms = (0..rho.len())
            .filter(|&i| r.interior[i])
            .map(|i| w[i] * rho[i] * r.residual[i] * r.residual[i])
            .sum::<f64>()
            .sqrt();
        out.push((psi.time, rms, r.max_residual));
    }
    Ok(out)
}

fn verify_level(spec: &ProblemSpec, cfg: &EvolveConfig) -> Result<Level, PipelineError> {
    let geo = geometry(spec)?;
    let traj = run_evolution(spec, &geo, cfg)?;
    let continuity = continuity_residual(&traj, spec, &geo)?;
    let ehrenfest = ehrenfest_residual(&traj, spec, &geo)?;
    let hj = hj_samples(&traj, spec, &geo, cfg.dt)?;
    let mut round_trip: f64 = 0.0;
    for s in &traj.states {
        let f = decompose(s, spec, &geo)?;
        let back = match reconstruct(&f) {
            Ok(p) => p,
            Err(e) => e.psi,
        };
        // compare up to a global phase
        let k = (0..s.len()).max_by(|&a, &b| s.values[a].norm_sqr().total_cmp(&s.values[b].norm_sqr())).unwrap_or(0);
        let g = if back.values[k].norm() > 0.0 { s.values[k] / back.values[k] } else { Complex64::new(1.0, 0.0) };
        let g = g / g.norm();
        for (a, b) in s.values.iter().zip(&back.values) {
            round_trip = round_trip.max((a - b * g).norm());
        }
    }
    Ok(Level { points: spec.chart().shape(), continuity, ehrenfest, hj, round_trip, last: traj.last().clone() })
}

fn ratio(coarse: f64, fine: f64) -> f64 {
    if fine > 0.0 {
        coarse / fine
    } else if coarse > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Evolves at the requested resolution and again with `h` and `dt` halved,
/// then checks probability conservation, the Madelung round trip, the
/// boundary leakage and second-order convergence of the continuity,
/// Ehrenfest and Hamilton–Jacobi residuals. Writes `madelung.csv`,
/// `continuity.csv`, `ehrenfest.csv`, `hj_residual.csv` and `summary.txt`.
pub fn verify(spec: &ProblemSpec, cfg: &EvolveConfig, tols: &VerifyTolerances, out: &Path) -> Result<Outcome, PipelineError> {
    if cfg.steps / cfg.stride.max(1) < 4 {
        return Err(config("verify needs at least four samples; lower the stride or add steps"));
    }
    let fine_points: Vec<usize> = spec.chart().shape().iter().map(|p| 2 * p).collect();
    let fine_spec = spec.with_points(&fine_points)?;
    let fine_cfg = EvolveConfig { dt: cfg.dt / 2.0, steps: cfg.steps * 2, ..cfg.clone() };
    let levels = [verify_level(spec, cfg)?, verify_level(&fine_spec, &fine_cfg)?];

    let rms_hj = |l: &Level| l.hj.iter().fold(0.0f64, |m, h| m.max(h.1));
    let (c, f) = (&levels[0], &levels[1]);
    let drift = levels.iter().map(|l| l.continuity.probability_drift).fold(0.0, f64::max);
    let leak = levels.iter().map(|l| l.ehrenfest.boundary_mass).fold(0.0, f64::max);
    let round_trip = levels.iter().map(|l| l.round_trip).fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("probability_drift", drift, tols.probability_drift),
        Check::at_most("madelung_round_trip", round_trip, tols.round_trip),
        Check::at_most("boundary_mass", leak, LEAKAGE_LIMIT),
        Check::at_least(
            "continuity_convergence",
            ratio(c.continuity.max_l2, f.continuity.max_l2),
            tols.convergence_ratio,
        ),
        Check::at_least(
            "ehrenfest_convergence",
            ratio(c.ehrenfest.max_residual, f.ehrenfest.max_residual),
            tols.convergence_ratio,
        ),
        Check::at_least("hamilton_jacobi_convergence", ratio(rms_hj(c), rms_hj(f)), tols.convergence_ratio),
    ];

    let mut files = Outputs::new(out);
    let level_name = |l: &Level| l.points.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("x");

    let geo = geometry(spec)?;
    let m = decompose(&levels[0].last, spec, &geo)?;
    let n = spec.dim();
    let mut s = coord_header(spec);
    s.push_str(",rho,phi");
    for p in 0..n {
        let _ = write!(s, ",v_{}", p + 1);
    }
    for p in 0..n {
        let _ = write!(s, ",j_{}", p + 1);
    }
    s.push_str(",quantum_potential,mask\n");
    for i in 0..m.rho.len() {
        let _ = write!(s, "{},{:.16e},{:.16e}", coords(spec, i), m.rho[i], m.phi[i]);
        for p in 0..n {
            let _ = write!(s, ",{:.16e}", m.v[p][i]);
        }
        for p in 0..n {
            let _ = write!(s, ",{:.16e}", m.j[p][i]);
        }
        let _ = writeln!(s, ",{:.16e},{}", m.quantum_potential[i], u8::from(m.mask[i]));
    }
    files.add("madelung.csv", s);

    let mut s = String::from("grid,t,l2,integral\n");
    for l in &levels {
        let name = level_name(l);
        for k in 0..l.continuity.times.len() {
            let c = &l.continuity;
            let _ = writeln!(s, "{name},{:.16e},{:.16e},{:.16e}", c.times[k], c.l2[k], c.integral[k]);
        }
    }
    files.add("continuity.csv", s);

    let mut s = String::from("grid,t");
    for p in 0..n {
        let _ = write!(s, ",mean_velocity_{0},mean_force_{0},residual_{0}", p + 1);
    }
    s.push('\n');
    for l in &levels {
        let name = level_name(l);
        let e = &l.ehrenfest;
        for k in 1..e.times.len().saturating_sub(1) {
            let _ = write!(s, "{name},{:.16e}", e.times[k]);
            for p in 0..n {
                let _ = write!(s, ",{:.16e},{:.16e},{:.16e}", e.mean_velocity[k][p], e.mean_force[k][p], e.residual[k - 1][p]);
            }
            s.push('\n');
        }
    }
    files.add("ehrenfest.csv", s);

    let mut s = String::from("grid,t,weighted_rms,max_on_mask\n");
    for l in &levels {
        let name = level_name(l);
        for (t, rms, max) in &l.hj {
            let _ = writeln!(s, "{name},{t:.16e},{rms:.16e},{max:.16e}");
        }
    }
    files.add("hj_residual.csv", s);
    files.add("summary.txt", summary(&checks));
    files.commit(checks)
}

/// Settings for [`sed`].
#[derive(Debug, Clone, PartialEq)]
pub struct SedConfig {
    pub members: usize,
    pub components: usize,
    pub omega0: f64,
    pub gamma: f64,
    pub hbar: f64,
    pub mass: f64,
    pub band: f64,
    pub modes: usize,
    pub seed: u64,
    /// Time step; `None` uses the largest allowed step.
    pub dt: Option<f64>,
    /// Run length in units of `1/gamma`.
    pub duration: f64,
    /// Discarded equilibration time in units of `1/gamma`.
    pub equilibration: f64,
    /// Interval between recorded samples in units of `1/w0`.
    pub record_interval: f64,
    pub energy_tol: f64,
    pub ratio_tol: f64,
}

impl Default for SedConfig {
    fn default() -> Self {
        SedConfig {
            members: 1000,
            components: 3,
            omega0: 1.0,
            gamma: 1e-3,
            hbar: 1.0,
            mass: 1.0,
            band: 0.1,
            modes: 1000,
            seed: 0,
            dt: None,
            duration: 15.0,
            equilibration: 5.0,
            record_interval: 10.0,
            energy_tol: 0.05,
            ratio_tol: 0.1,
        }
    }
}

/// Oscillator ensemble in the sampled zero-point field. Writes
/// `ensemble.csv` and `stats.txt`.
pub fn sed(cfg: &SedConfig, out: &Path) -> Result<Outcome, PipelineError> {
    if cfg.members < 2 {
        return Err(config("an ensemble needs at least two members"));
    }
    if !(cfg.duration > cfg.equilibration && cfg.equilibration >= 0.0 && cfg.record_interval > 0.0) {
        return Err(config("duration must exceed the equilibration time"));
    }
    let osc = Oscillator::new(cfg.mass, cfg.omega0, cfg.gamma, cfg.components)?;
    let params = FieldParams {
        omega0: cfg.omega0,
        gamma: cfg.gamma,
        hbar: cfg.hbar,
        mass: cfg.mass,
        band: cfg.band,
        modes: cfg.modes,
        components: cfg.components,
    };
    let w_max = cfg.omega0 * (1.0 + cfg.band);
    let dt = cfg.dt.unwrap_or(2.0 * std::f64::consts::PI / (64.0 * w_max));
    if cfg.gamma <= 0.0 {
        return Err(config("the ensemble needs positive damping"));
    }
    let total = cfg.duration / cfg.gamma;
    let steps = (total / dt).ceil() as usize;
    let record_every = ((cfg.record_interval / cfg.omega0 / dt).round() as usize).max(1);
    let run = EnsembleConfig { members: cfg.members, seed: cfg.seed, dt, steps, record_every };
    let runs = run_ensemble(&params, &osc, &run)?;
    let discard = (cfg.equilibration / cfg.duration).min(0.9);
    let stats = ensemble_stats(&runs, &osc, discard)?;
    let finals = final_energies(&runs, &osc);
    let (ks, ks_crit) = exponential_ks(&finals);
    let (first, second, stat_se) = stationarity(&runs, &osc, discard);

    let target = cfg.components as f64 * 0.5 * cfg.hbar * cfg.omega0;
    let target_ratio = 1.0 + 1.0 / cfg.components as f64;
    let mut checks = vec![
        Check::at_most("mean_energy_relative_error", (stats.mean_energy / target - 1.0).abs(), cfg.energy_tol),
        Check::at_most("second_moment_ratio_error", (stats.ratio - target_ratio).abs(), cfg.ratio_tol),
    ];
    if cfg.components == 1 {
        checks.push(Check::at_most("exponential_ks", ks, ks_crit));
    }

    let mut files = Outputs::new(out);
    let mut s = String::from("member,mean_energy,final_energy\n");
    for (m, r) in runs.iter().enumerate() {
        let e = r.energies(&osc);
        let skip = (discard * e.len() as f64).ceil() as usize;
        let kept = &e[skip.min(e.len())..];
        let mean = kept.iter().sum::<f64>() / kept.len().max(1) as f64;
        let _ = writeln!(s, "{m},{mean:.16e},{:.16e}", finals[m]);
    }
    files.add("ensemble.csv", s);

    let mut s = String::new();
    let _ = writeln!(s, "members {}", stats.members);
    let _ = writeln!(s, "components {}", cfg.components);
    let _ = writeln!(s, "seed {}", cfg.seed);
    let _ = writeln!(s, "modes_per_component {}", cfg.modes);
    let _ = writeln!(s, "dt {dt:.16e}");
    let _ = writeln!(s, "steps {steps}");
    let _ = writeln!(s, "discard_fraction {discard:.16e}");
    let _ = writeln!(s, "samples {}", stats.samples);
    let _ = writeln!(s, "mean_energy {:.16e} +- {:.16e}", stats.mean_energy, stats.mean_energy_se);
    let _ = writeln!(s, "target_energy {target:.16e}");
    let _ = writeln!(s, "second_moment_ratio {:.16e} +- {:.16e}", stats.ratio, stats.ratio_se);
    let _ = writeln!(s, "target_ratio {target_ratio:.16e}");
    let _ = writeln!(s, "ks_statistic {ks:.16e}");
    let _ = writeln!(s, "ks_critical_1pct {ks_crit:.16e}");
    let _ = writeln!(s, "window_means {first:.16e} {second:.16e} +- {stat_se:.16e}");
    s.push_str(&summary(&checks));
    files.add("stats.txt", s);
    files.commit(checks)
}
