//! One line per acceptance criterion. Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use nspace_qm::dsl::ProblemSpec;
use nspace_qm::ehrenfest::mean_velocity;
use nspace_qm::exchange::{exchange_commutator, exchange_permutation};
use nspace_qm::geometry::*;
use nspace_qm::madelung::{decompose, hamilton_jacobi_residual, phase_time_derivative, reconstruct};
use nspace_qm::operator::{build_hamiltonian, hermiticity_check};
use nspace_qm::pipeline::{self, EvolveConfig, InitialState, Outcome, SedConfig, SolveConfig, VerifyTolerances};
use nspace_qm::presets::{load_preset, preset_names};
use nspace_qm::sed::*;
use nspace_qm::solvers::*;
use nspace_qm::states::{coherent_state, gaussian_1d, plane_wave_1d, WaveFunction};

struct Line {
    id: usize,
    pass: bool,
    text: String,
}

fn geo(spec: &ProblemSpec) -> GeometryData {
    GeometryData::new(spec, spec.chart().clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("nspace-acceptance-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn sed_run(components: usize, members: usize) -> EnsembleStats {
    let osc = Oscillator::new(1.0, 1.0, 1e-3, components).unwrap();
    let params = FieldParams::for_oscillator(&osc, 1.0);
    let dt = 2.0 * PI / (64.0 * 1.1);
    let steps = (15.0 / osc.gamma / dt).ceil() as usize;
    let cfg = EnsembleConfig { members, seed: 0, dt, steps, record_every: (10.0 / dt).round() as usize };
    let runs = run_ensemble(&params, &osc, &cfg).unwrap();
    ensemble_stats(&runs, &osc, 1.0 / 3.0).unwrap()
}

fn c1() -> Line {
    let s = sed_run(3, 1000);
    let err = (s.mean_energy / 1.5 - 1.0).abs();
    Line {
        id: 1,
        pass: err <= 0.05,
        text: format!("SED 3-component <E> = {:.4} +- {:.4} (target 1.5, rel err {err:.3} <= 0.05)", s.mean_energy, s.mean_energy_se),
    }
}

fn c2() -> Line {
    let s = sed_run(1, 1000);
    let err = (s.ratio - 2.0).abs();
    Line {
        id: 2,
        pass: err <= 0.1,
        text: format!("SED 1-component <E^2>/<E>^2 = {:.4} +- {:.4} (target 2.0 +- 0.1)", s.ratio, s.ratio_se),
    }
}

fn c3() -> Line {
    let spec = load_preset("ho1d").unwrap();
    let h = build_hamiltonian(&spec, &geo(&spec), 0.0).unwrap();
    let r = lowest_eigenpairs(&h, 5, 1e-10).unwrap();
    let err = r.eigenvalues.iter().enumerate().map(|(n, e)| (e / (n as f64 + 0.5) - 1.0).abs()).fold(0.0, f64::max);
    Line { id: 3, pass: err <= 1e-3, text: format!("ho1d lowest 5 eigenvalues, max rel err {err:.2e} <= 1e-3") }
}

fn c4() -> Line {
    let spec = load_preset("hydrogen_radial_l0").unwrap();
    let h = build_hamiltonian(&spec, &geo(&spec), 0.0).unwrap();
    let r = lowest_eigenpairs(&h, 3, 1e-10).unwrap();
    let err = r
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let n = (k + 1) as f64;
            (e / (-0.5 / (n * n)) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    Line {
        id: 4,
        pass: err <= 0.01,
        text: format!("hydrogen l=0 E = {:.6?}, max rel err {err:.2e} <= 1e-2", r.eigenvalues),
    }
}

fn c5() -> Line {
    let mut worst: (f64, &str) = (0.0, "");
    for name in preset_names() {
        let spec = load_preset(name).unwrap();
        let h = build_hamiltonian(&spec, &geo(&spec), 0.0).unwrap();
        let d = hermiticity_check(&h, 4, 0);
        if d >= worst.0 {
            worst = (d, name);
        }
    }
    Line {
        id: 5,
        pass: worst.0 <= 1e-10,
        text: format!("hermiticity over all presets, worst {:.2e} ({}) <= 1e-10", worst.0, worst.1),
    }
}

fn c6() -> Line {
    let err = |n: usize| {
        let ax = |name: &str, lower, upper, boundary, points| Axis { name: name.into(), lower, upper, boundary, points };
        let c = CoordinateChart::new(vec![
            ax("r", 1.0, 3.0, Boundary::Dirichlet, n),
            ax("theta", 0.5, 2.6, Boundary::Dirichlet, n),
            ax("phi", 0.0, 2.0 * PI, Boundary::Periodic, n),
        ])
        .unwrap();
        let m = build_metric(
            &FnMetric::new(3, |x: &[f64], g: &mut [f64]| {
                g.fill(0.0);
                g[0] = 1.0;
                g[4] = x[0] * x[0];
                g[8] = (x[0] * x[1].sin()).powi(2);
            }),
            &c,
        )
        .unwrap();
        let f = identity_a13_field(&m, &christoffel(&m, &c), &c);
        // rms over a block whose edges are cell faces at every level
        let inside: Vec<f64> = (0..c.len())
            .filter(|&i| {
                let x = c.point(i);
                (1.5..=2.5).contains(&x[0]) && (1.025..=2.075).contains(&x[1])
            })
            .map(|i| f[i] * f[i])
            .collect();
        (inside.iter().sum::<f64>() / inside.len() as f64).sqrt()
    };
    let e: Vec<f64> = [16, 32, 64].iter().map(|&n| err(n)).collect();
    let (r1, r2) = (e[0] / e[1], e[1] / e[2]);
    Line {
        id: 6,
        pass: r1 >= 3.5 && r2 >= 3.5,
        text: format!("connection identity on spherical chart, rms error {:.2e} {:.2e} {:.2e}, halving ratios {r1:.2} {r2:.2} >= 3.5", e[0], e[1], e[2]),
    }
}

fn ho_verify() -> Outcome {
    let spec = load_preset("ho1d").unwrap();
    let cfg = EvolveConfig {
        dt: 1e-3,
        steps: 1000,
        stride: 50,
        init: InitialState::Coherent { amplitude: 1.0 },
        ..EvolveConfig::default()
    };
    let out = scratch("verify");
    let o = pipeline::verify(&spec, &cfg, &VerifyTolerances::default(), &out).unwrap();
    let _ = fs::remove_dir_all(out);
    o
}

fn check(o: &Outcome, name: &str) -> (f64, bool) {
    let c = o.checks.iter().find(|c| c.name == name).unwrap();
    (c.value, c.passed())
}

fn c7(o: &Outcome) -> Line {
    let (ratio, a) = check(o, "continuity_convergence");
    let (drift, b) = check(o, "probability_drift");
    Line {
        id: 7,
        pass: a && b && drift <= 1e-10 && ratio >= 3.5,
        text: format!("continuity residual halving ratio {ratio:.2} >= 3.5, probability drift {drift:.1e} <= 1e-10 over 1000 steps"),
    }
}

fn round_trip(psi: &WaveFunction, spec: &ProblemSpec) -> f64 {
    let g = geo(spec);
    let back = reconstruct(&decompose(psi, spec, &g).unwrap()).unwrap();
    let k = (0..psi.len()).max_by(|&a, &b| psi.values[a].norm().total_cmp(&psi.values[b].norm())).unwrap();
    let phase = psi.values[k] / back.values[k];
    let phase = phase / phase.norm();
    psi.values.iter().zip(&back.values).map(|(a, b)| (a - b * phase).norm()).fold(0.0, f64::max)
}

fn c8() -> Line {
    let ring = load_preset("free1d_periodic").unwrap();
    let ho = load_preset("ho1d").unwrap();
    let a = round_trip(&plane_wave_1d(ring.chart(), 3.0), &ring);
    let b = round_trip(&coherent_state(ho.chart(), 1.0, 1.0, 1.0, 1.0, 0.7), &ho);
    Line {
        id: 8,
        pass: a <= 1e-12 && b <= 1e-12,
        text: format!("Madelung round trip plane wave {a:.1e}, coherent state {b:.1e} <= 1e-12"),
    }
}

fn c9() -> Line {
    let spec = load_preset("ho1d").unwrap();
    let g = geo(&spec);
    // ground state: phase -t/2, residual vanishes identically
    let ground = WaveFunction::from_fn(spec.chart(), |x| Complex64::new(PI.powf(-0.25) * (-0.5 * x[0] * x[0]).exp(), 0.0));
    let dphi = vec![-0.5; ground.len()];
    let exact = hamilton_jacobi_residual(&ground, &spec, &g, &dphi).unwrap().max_residual;
    let (t, d) = (0.9, 1e-4);
    let states = (-1..=1).map(|s| coherent_state(spec.chart(), 1.0, 1.0, 1.0, 1.0, t + s as f64 * d)).collect();
    let traj = Trajectory { states, sample_dt: d };
    let dphi = phase_time_derivative(&traj, 1).unwrap();
    let coherent = hamilton_jacobi_residual(&traj.states[1], &spec, &g, &dphi).unwrap().max_residual;
    Line {
        id: 9,
        pass: exact <= 1e-8 && coherent <= 1e-6,
        text: format!("Hamilton-Jacobi residual Gaussian {exact:.1e} <= 1e-8, coherent state {coherent:.1e} <= 1e-6"),
    }
}

fn c10(o: &Outcome) -> Line {
    let spec = load_preset("uniform_force1d").unwrap();
    let g = geo(&spec);
    let prov = SpecProvider::new(&spec, &g).unwrap();
    let mut psi = gaussian_1d(spec.chart(), 0.0, 1.0, 0.0);
    psi.normalize(g.weights());
    let dt = 5e-4;
    let traj = evolve_with(&prov, &psi, dt, 4000, &EvolveOptions { stride: 200, ..Default::default() }).unwrap();
    let v: Vec<f64> = traj.states.iter().map(|s| mean_velocity(s, &spec, &g).unwrap()[0]).collect();
    let err = (1..v.len() - 1)
        .map(|k| ((v[k + 1] - v[k - 1]) / (2.0 * traj.sample_dt) - 1.0).abs())
        .fold(0.0, f64::max);
    let (ratio, conv) = check(o, "ehrenfest_convergence");
    Line {
        id: 10,
        pass: err <= 1e-6 && conv,
        text: format!("uniform force |dV/dt - F0/m| {err:.1e} <= 1e-6; coherent-state Ehrenfest halving ratio {ratio:.2} >= 3.5"),
    }
}

fn c11() -> Line {
    let spec = load_preset("gauge1d").unwrap();
    let h = build_hamiltonian(&spec, &geo(&spec), 0.0).unwrap();
    let r = lowest_eigenpairs(&h, 17, 1e-5).unwrap();
    let mut want: Vec<f64> = (-8..=8).map(|k| (k as f64 - 0.25).powi(2) / 2.0).collect();
    want.sort_by(f64::total_cmp);
    let err = r.eigenvalues.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Line { id: 11, pass: err <= 1e-6, text: format!("gauge1d spectrum |k| <= 8, max abs err {err:.1e} <= 1e-6") }
}

fn c12() -> Line {
    let spec = load_preset("identical2_1d").unwrap();
    let g = geo(&spec);
    let h = build_hamiltonian(&spec, &g, 0.0).unwrap();
    let perm = exchange_permutation(&spec, &g).unwrap();
    let comm = [1.0, -1.0].iter().map(|&s| exchange_commutator(&h, &perm, s, 4, 0)).fold(0.0, f64::max);
    let e: Vec<f64> = [1.0, -1.0]
        .iter()
        .map(|&s| {
            let opts = EigenOptions { sector: Some(Sector::new(perm.clone(), s)), ..Default::default() };
            lowest_eigenpairs_with(&h, 1, 1e-10, &opts).unwrap().eigenvalues[0]
        })
        .collect();
    let gap = e[1] - e[0];
    Line {
        id: 12,
        pass: (gap - 1.0).abs() <= 1e-3 && comm <= 1e-10,
        text: format!("exchange gap {gap:.5} (target 1 +- 1e-3), [H, P] {comm:.1e} <= 1e-10"),
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn c13() -> Line {
    let ho = load_preset("ho1d").unwrap();
    let pair = load_preset("identical2_1d").unwrap().with_points(&[40, 40]).unwrap();
    let coherent = EvolveConfig {
        dt: 1e-3,
        steps: 200,
        stride: 20,
        init: InitialState::Coherent { amplitude: 1.0 },
        seed: 3,
        ..EvolveConfig::default()
    };
    let ground = EvolveConfig { init: InitialState::Ground, ..coherent.clone() };
    let sed = SedConfig { members: 8, components: 1, duration: 2.0, equilibration: 1.0, seed: 3, ..SedConfig::default() };
    type Job<'a> = Box<dyn Fn(&Path) -> Outcome + 'a>;
    let jobs: Vec<(&str, Job)> = vec![
        ("solve", Box::new(|d| pipeline::solve(&ho, &SolveConfig { seed: 3, ..SolveConfig::default() }, d).unwrap())),
        ("solve_sector", Box::new(|d| pipeline::solve(&pair, &SolveConfig { k: 2, ..SolveConfig::default() }, d).unwrap())),
        ("evolve", Box::new(|d| pipeline::evolve_run(&ho, &ground, d).unwrap())),
        ("verify", Box::new(|d| pipeline::verify(&ho, &coherent, &VerifyTolerances::default(), d).unwrap())),
        ("sed", Box::new(|d| pipeline::sed(&sed, d).unwrap())),
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for (name, job) in &jobs {
        let (a, b) = (scratch(&format!("{name}-a")), scratch(&format!("{name}-b")));
        job(&a);
        job(&b);
        let (fa, fb) = (read_all(&a), read_all(&b));
        files += fa.len();
        if fa.is_empty() || fa != fb {
            differing.push(*name);
        }
        let _ = fs::remove_dir_all(a);
        let _ = fs::remove_dir_all(b);
    }
    Line {
        id: 13,
        pass: differing.is_empty(),
        text: format!("determinism: {} pipelines, {files} files rerun byte-identical, differing {differing:?}", jobs.len()),
    }
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    let mut run = |f: &dyn Fn() -> Line| {
        let t = Instant::now();
        let l = f();
        println!("criterion {:>2} {} {} [{:.1}s]", l.id, if l.pass { "PASS" } else { "FAIL" }, l.text, t.elapsed().as_secs_f64());
        lines.push(l);
    };
    run(&c1);
    run(&c2);
    run(&c3);
    run(&c4);
    run(&c5);
    run(&c6);
    let verify = ho_verify();
    run(&|| c7(&verify));
    run(&c8);
    run(&c9);
    run(&|| c10(&verify));
    run(&c11);
    run(&c12);
    run(&c13);
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
