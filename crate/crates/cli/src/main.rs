use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nspace_qm::dsl::ProblemSpec;
use nspace_qm::pipeline::{self, EvolveConfig, InitialState, Outcome, SedConfig, SolveConfig, Source, VerifyTolerances};
use nspace_qm::presets::{preset_names, preset_source};

#[derive(Parser)]
#[command(name = "nspace", version, about = "Schrodinger problems in generalized coordinates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest eigenpairs: spectrum.csv, states.csv, hermiticity.txt
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(short = 'k', long, default_value_t = 5)]
        k: usize,
        /// Residual tolerance for eigenpairs
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 1e-10)]
        hermiticity_tol: f64,
    },
    /// Crank–Nicolson evolution: trajectory.csv, norm.csv
    Evolve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        time: TimeArgs,
    },
    /// Evolution plus hydrodynamic and Ehrenfest checks at two resolutions
    Verify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        time: TimeArgs,
        #[arg(long, default_value_t = 1e-10)]
        drift_tol: f64,
        #[arg(long, default_value_t = 1e-12)]
        round_trip_tol: f64,
        /// Smallest error ratio accepted when h and dt are halved
        #[arg(long, default_value_t = 3.5)]
        convergence_ratio: f64,
    },
    /// Oscillator ensemble in the sampled zero-point field: ensemble.csv, stats.txt
    Sed(SedArgs),
    /// List presets, or print one
    Presets { name: Option<String> },
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem file
    #[arg(conflicts_with = "preset", required_unless_present = "preset")]
    input: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Override grid points, comma separated, one per axis
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, env = "NSPACE_OUT", default_value = ".")]
    out: PathBuf,
}

impl ProblemArgs {
    fn load(&self) -> Result<ProblemSpec> {
        let source = match (&self.preset, &self.input) {
            (Some(p), None) => Source::Preset(p.clone()),
            (None, Some(f)) => Source::File(f.clone()),
            _ => bail!("give exactly one of a problem file or --preset"),
        };
        let spec = source.load()?;
        Ok(match &self.points {
            Some(p) => spec.with_points(p)?,
            None => spec,
        })
    }
}

#[derive(Args)]
struct TimeArgs {
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Coherent initial state, e.g. `A=1`
    #[arg(long, conflicts_with = "packet")]
    coherent: Option<String>,
    /// Gaussian initial packet, e.g. `x0=0,sigma=2,k=0`
    #[arg(long)]
    packet: Option<String>,
    /// Linear-solve residual tolerance per step
    #[arg(long, default_value_t = 1e-12)]
    solve_tol: f64,
}

fn key_values(text: &str) -> Result<Vec<(String, f64)>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').with_context(|| format!("expected key=value, got `{kv}`"))?;
            let v: f64 = v.trim().parse().with_context(|| format!("`{v}` is not a number"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

impl TimeArgs {
    fn config(&self, seed: u64) -> Result<EvolveConfig> {
        if !(self.dt > 0.0) || self.steps == 0 || self.stride == 0 {
            bail!("dt, steps and stride must be positive");
        }
        let init = if let Some(c) = &self.coherent {
            let mut amplitude = None;
            for (k, v) in key_values(c)? {
                match k.as_str() {
                    "A" | "a" | "amplitude" => amplitude = Some(v),
                    _ => bail!("unknown coherent-state key `{k}`"),
                }
            }
            InitialState::Coherent { amplitude: amplitude.context("coherent state needs A=<amplitude>")? }
        } else if let Some(p) = &self.packet {
            let (mut x0, mut sigma, mut k) = (0.0, 1.0, 0.0);
            for (key, v) in key_values(p)? {
                match key.as_str() {
                    "x0" => x0 = v,
                    "sigma" => sigma = v,
                    "k" => k = v,
                    _ => bail!("unknown packet key `{key}`"),
                }
            }
            InitialState::Packet { x0, sigma, k }
        } else {
            InitialState::Ground
        };
        Ok(EvolveConfig { dt: self.dt, steps: self.steps, stride: self.stride, init, seed, tol: self.solve_tol })
    }
}

#[derive(Args)]
struct SedArgs {
    #[arg(long, default_value_t = 1000)]
    members: usize,
    /// 1 or 3 Cartesian components
    #[arg(long, default_value_t = 3)]
    components: usize,
    #[arg(long, default_value_t = 1.0)]
    omega0: f64,
    /// Damping rate, at most 1e-3 omega0
    #[arg(long, default_value_t = 1e-3)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    hbar: f64,
    /// Relative half-width of the sampled band
    #[arg(long, default_value_t = 0.1)]
    band: f64,
    /// Field modes per component
    #[arg(long, default_value_t = 1000)]
    modes: usize,
    #[arg(long)]
    dt: Option<f64>,
    /// Run length in units of 1/gamma
    #[arg(long, default_value_t = 15.0)]
    duration: f64,
    /// Discarded equilibration in units of 1/gamma
    #[arg(long, default_value_t = 5.0)]
    equilibration: f64,
    #[arg(long, default_value_t = 0.05)]
    energy_tol: f64,
    #[arg(long, default_value_t = 0.1)]
    ratio_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, env = "NSPACE_OUT", default_value = ".")]
    out: PathBuf,
}

fn report(outcome: &Outcome) -> ExitCode {
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    for c in &outcome.checks {
        let rel = if c.upper { "<=" } else { ">=" };
        let status = if c.passed() { "pass" } else { "FAIL" };
        eprintln!("{status} {} = {:.3e} ({rel} {:.1e})", c.name, c.value, c.threshold);
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let outcome = match cli.command {
        Command::Solve { problem, k, tol, hermiticity_tol } => {
            let spec = problem.load()?;
            let cfg = SolveConfig { k, tol, seed: problem.seed, hermiticity_tol };
            pipeline::solve(&spec, &cfg, &problem.out)?
        }
        Command::Evolve { problem, time } => {
            let spec = problem.load()?;
            pipeline::evolve_run(&spec, &time.config(problem.seed)?, &problem.out)?
        }
        Command::Verify { problem, time, drift_tol, round_trip_tol, convergence_ratio } => {
            let spec = problem.load()?;
            let tols = VerifyTolerances { probability_drift: drift_tol, round_trip: round_trip_tol, convergence_ratio };
            pipeline::verify(&spec, &time.config(problem.seed)?, &tols, &problem.out)?
        }
        Command::Sed(a) => {
            let cfg = SedConfig {
                members: a.members,
                components: a.components,
                omega0: a.omega0,
                gamma: a.gamma,
                hbar: a.hbar,
                band: a.band,
                modes: a.modes,
                seed: a.seed,
                dt: a.dt,
                duration: a.duration,
                equilibration: a.equilibration,
                energy_tol: a.energy_tol,
                ratio_tol: a.ratio_tol,
                ..SedConfig::default()
            };
            pipeline::sed(&cfg, &a.out)?
        }
        Command::Presets { name } => {
            match name {
                Some(n) => print!("{}", preset_source(&n).with_context(|| format!("unknown preset `{n}`"))?),
                None => preset_names().iter().for_each(|n| println!("{n}")),
            }
            return Ok(ExitCode::SUCCESS);
        }
    };
    Ok(report(&outcome))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
