use std::f64::consts::PI;

use num_complex::Complex64;
use nspace_qm::dsl::{parse_problem, ProblemSpec};
use nspace_qm::geometry::GeometryData;
use nspace_qm::operator::*;
use nspace_qm::presets::{load_preset, preset_names};
use nspace_qm::solvers::lowest_eigenpairs;
use nspace_qm::states::{plane_wave_1d, WaveFunction};
use proptest::prelude::*;

fn geo(spec: &ProblemSpec) -> GeometryData {
    GeometryData::new(spec, spec.chart().clone()).unwrap()
}

fn spectrum(spec: &ProblemSpec, k: usize) -> Vec<f64> {
    let h = build_hamiltonian(spec, &geo(spec), 0.0).unwrap();
    lowest_eigenpairs(&h, k, 1e-9).unwrap().eigenvalues
}

#[test]
fn every_preset_is_hermitian() {
    for name in preset_names() {
        let spec = load_preset(name).unwrap();
        let h = build_hamiltonian(&spec, &geo(&spec), 0.0).unwrap();
        let d = hermiticity_check(&h, 3, 11);
        assert!(d <= 1e-10, "{name}: {d:e}");
    }
}

#[test]
fn unsymmetrized_gauge_is_detected() {
    let spec = parse_problem(
        "coordinates { x: (0, 2*pi) periodic } metric { g[1,1] = 1 }
         gauge { u[1] = 0.5*cos(x) } potential { W = 0 } grid { x: 256 }",
    )
    .unwrap();
    let g = geo(&spec);
    let good = build_hamiltonian_with(&spec, &g, 0.0, GaugeOrdering::Symmetric).unwrap();
    let bad = build_hamiltonian_with(&spec, &g, 0.0, GaugeOrdering::Unsymmetrized).unwrap();
    assert!(hermiticity_check(&good, 4, 1) <= 1e-12);
    assert!(hermiticity_check(&bad, 4, 1) > 1e-6);
}

#[test]
fn classical_hamiltonian_on_spherical_chart() {
    let spec = load_preset("spherical_free").unwrap();
    // p_r = 1, p_theta = 2, p_phi = 3 at r = 2, theta = pi/2
    let h = classical_hamiltonian(&spec, &[2.0, PI / 2.0, 0.3], &[1.0, 2.0, 3.0], 0.0).unwrap();
    let want = 0.5 * (1.0 + 4.0 / 4.0 + 9.0 / 4.0);
    assert!((h - want).abs() < 1e-14);
}

#[test]
fn classical_hamiltonian_with_gauge_and_mass() {
    let spec = parse_problem(
        "coordinates { x: (-1, 1) } metric { g[1,1] = 2 } gauge { u[1] = x }
         potential { W = 3 } grid { x: 8 } constants { mass = 4 }",
    )
    .unwrap();
    // (1/2m) g^11 (P - m u)^2 + W with P = 5, u = 0.5
    let h = classical_hamiltonian(&spec, &[0.5], &[5.0], 0.0).unwrap();
    assert!((h - (9.0 / 16.0 + 3.0)).abs() < 1e-14);
}

#[test]
fn pure_gauge_leaves_spectrum_unchanged() {
    // u = d_x chi with chi = 0.3 sin x is removed by psi -> exp(i m chi / hbar) psi
    let free = load_preset("free1d_periodic").unwrap().with_points(&[512]).unwrap();
    let gauged = parse_problem(
        "coordinates { x: (0, 2*pi) periodic } metric { g[1,1] = 1 }
         gauge { u[1] = 0.3*cos(x) } potential { W = 0 } grid { x: 512 }",
    )
    .unwrap();
    let (a, b) = (spectrum(&free, 5), spectrum(&gauged, 5));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-3, "{a:?} {b:?}");
    }
}

#[test]
fn constant_gauge_shifts_plane_wave_energies() {
    let spec = load_preset("gauge1d").unwrap().with_points(&[4096]).unwrap();
    let e = spectrum(&spec, 3);
    let want = [0.25f64.powi(2) / 2.0, 0.75f64.powi(2) / 2.0, 1.25f64.powi(2) / 2.0];
    for (a, b) in e.iter().zip(want) {
        assert!((a - b).abs() < 1e-5, "{e:?}");
    }
}

#[test]
fn flat_metric_reduces_to_five_point_stencil() {
    let spec = parse_problem(
        "coordinates { x: (0, 1) y: (0, 2) } metric { g[1,1] = 1 g[2,2] = 1 }
         potential { W = x*y } grid { x: 9 y: 13 }",
    )
    .unwrap();
    let g = geo(&spec);
    let h = build_hamiltonian(&spec, &g, 0.0).unwrap();
    let c = spec.chart();
    let psi: Vec<Complex64> = (0..c.len()).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
    let hpsi = h.apply(&psi);
    for i in 0..c.len() {
        let x = c.point(i);
        let mut lap = Complex64::new(0.0, 0.0);
        for p in 0..2 {
            let hp = c.spacing(p);
            // the wall sits on the outer face: ghost value -psi
            let up = c.neighbor(i, p, 1).map_or(-psi[i], |k| psi[k]);
            let dn = c.neighbor(i, p, -1).map_or(-psi[i], |k| psi[k]);
            lap += (up - psi[i] * 2.0 + dn) / (hp * hp);
        }
        let want = -lap * 0.5 + psi[i] * (x[0] * x[1]);
        assert!((hpsi[i] - want).norm() < 1e-10 * (1.0 + want.norm()), "{i}");
    }
}

#[test]
fn ball_ground_state_in_spherical_coordinates() {
    // j0 zero: E = pi^2 / (2 R^2) with R = 8
    let spec = load_preset("spherical_free").unwrap().with_points(&[128, 4, 4]).unwrap();
    let e = spectrum(&spec, 1)[0];
    let want = PI * PI / 128.0;
    assert!((e / want - 1.0).abs() < 1e-3, "{e} {want}");
}

#[test]
fn momentum_of_plane_wave() {
    let spec = load_preset("free1d_periodic").unwrap();
    let g = geo(&spec);
    let k = 3.0;
    let psi = plane_wave_1d(spec.chart(), k);
    let m = apply_momentum(&psi, &g, 1.0);
    let h = spec.chart().spacing(0);
    // centred difference of exp(ikx) gives sin(kh)/h
    let kh = (k * h).sin() / h;
    for (p, v) in m.covariant[0].iter().zip(&psi.values) {
        assert!((p - v * kh).norm() < 1e-12);
    }
    assert_eq!(m.covariant[0], m.contravariant[0]);
}

#[test]
fn contravariant_momentum_raises_index() {
    let spec = load_preset("spherical_free").unwrap();
    let g = geo(&spec);
    let psi = WaveFunction::from_fn(spec.chart(), |x| Complex64::new(x[0] * (8.0 - x[0]), x[1].sin()));
    let m = apply_momentum(&psi, &g, 1.0);
    let c = spec.chart();
    for i in (0..c.len()).step_by(17) {
        let x = c.point(i);
        let r2 = x[0] * x[0];
        assert!((m.contravariant[0][i] - m.covariant[0][i]).norm() < 1e-12);
        assert!((m.contravariant[1][i] - m.covariant[1][i] / r2).norm() < 1e-12);
        assert!((m.contravariant[2][i] - m.covariant[2][i] / (r2 * x[1].sin().powi(2))).norm() < 1e-10);
    }
}

#[test]
fn time_dependent_potential_is_rebuilt() {
    let spec = parse_problem("coordinates { x: (-1, 1) } metric { g[1,1] = 1 } potential { W = t*x } grid { x: 8 }").unwrap();
    let g = geo(&spec);
    let (a, b) = (build_hamiltonian(&spec, &g, 0.0).unwrap(), build_hamiltonian(&spec, &g, 2.0).unwrap());
    assert!(a.time_dependent());
    assert_eq!(b.time(), 2.0);
    let d = b.matrix().max_abs_diff(a.matrix());
    assert!((d - 2.0 * spec.chart().point(7)[0]).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_metrics_give_hermitian_operators(a in 0.5f64..2.0, b in -0.4f64..0.4, c in 0.5f64..2.0, u in -1.0f64..1.0) {
        let text = format!(
            "coordinates {{ x: (0, 1) y: (0, 2*pi) periodic }}
             metric {{ g[1,1] = {a} + 0.2*sin(y) g[1,2] = {b}*x g[2,1] = {b}*x g[2,2] = {c} + x^2 }}
             gauge {{ u[1] = {u}*y u[2] = {u}*cos(x) }}
             potential {{ W = x^2 }} grid {{ x: 10 y: 12 }}"
        );
        let spec = parse_problem(&text).unwrap();
        let h = build_hamiltonian(&spec, &geo(&spec), 0.0).unwrap();
        prop_assert!(hermiticity_check(&h, 2, 5) <= 1e-10);
    }
}
