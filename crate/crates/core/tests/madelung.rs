use std::f64::consts::PI;

use num_complex::Complex64;
use nspace_qm::dsl::ProblemSpec;
use nspace_qm::geometry::GeometryData;
use nspace_qm::madelung::*;
use nspace_qm::operator::build_hamiltonian;
use nspace_qm::presets::load_preset;
use nspace_qm::solvers::*;
use nspace_qm::states::{coherent_state, gaussian_1d, plane_wave_1d, WaveFunction};
use proptest::prelude::*;

fn geo(spec: &ProblemSpec) -> GeometryData {
    GeometryData::new(spec, spec.chart().clone()).unwrap()
}

fn max_diff_up_to_phase(a: &WaveFunction, b: &WaveFunction) -> f64 {
    let k = (0..a.len()).max_by(|&i, &j| a.values[i].norm().total_cmp(&a.values[j].norm())).unwrap();
    let g = a.values[k] / b.values[k];
    let g = g / g.norm();
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y * g).norm()).fold(0.0, f64::max)
}

#[test]
fn plane_wave_fields() {
    let spec = load_preset("free1d_periodic").unwrap();
    let g = geo(&spec);
    let k = 2.0;
    let psi = plane_wave_1d(spec.chart(), k);
    let f = decompose(&psi, &spec, &g).unwrap();
    let h = spec.chart().spacing(0);
    let rho0 = 1.0 / (2.0 * PI);
    assert!(f.mask.iter().all(|m| *m));
    assert_eq!(f.components, 1);
    for i in 0..psi.len() {
        assert!((f.rho[i] - rho0).abs() < 1e-15);
        assert!((f.v[0][i] - k).abs() < 1e-12);
        // flux from the centred difference of psi itself
        assert!((f.j[0][i] - rho0 * (k * h).sin() / h).abs() < 1e-12);
        assert!(f.quantum_potential[i].abs() < 1e-12);
    }
}

#[test]
fn real_ground_state_has_no_flow() {
    let spec = load_preset("ho1d").unwrap();
    let g = geo(&spec);
    let psi = WaveFunction::from_fn(spec.chart(), |x| Complex64::new(PI.powf(-0.25) * (-0.5 * x[0] * x[0]).exp(), 0.0));
    let f = decompose(&psi, &spec, &g).unwrap();
    let interior = f.interior(spec.chart());
    for i in 0..psi.len() {
        if !f.mask[i] {
            continue;
        }
        assert_eq!(f.v[0][i], 0.0);
        assert_eq!(f.j[0][i], 0.0);
        assert!(f.phi[i].abs() < 1e-15);
        if interior[i] {
            // Q = -(x^2 - 1)/2
            let x = spec.chart().point(i)[0];
            assert!((f.quantum_potential[i] + 0.5 * (x * x - 1.0)).abs() < 1e-9, "{x}");
        }
    }
}

#[test]
fn first_excited_state_node_splits_mask() {
    // odd point count puts a sample on the node at x = 0
    let spec = load_preset("ho1d").unwrap().with_points(&[511]).unwrap();
    let g = geo(&spec);
    let psi = WaveFunction::from_fn(spec.chart(), |x| Complex64::new(x[0] * (-0.5 * x[0] * x[0]).exp(), 0.0));
    let f = decompose(&psi, &spec, &g).unwrap();
    assert_eq!(f.components, 2);
    assert!(!f.mask[255]);
    assert!(f.undefined.iter().any(|u| u.first == 255 && u.points == 1));
    let err = reconstruct(&f).unwrap_err();
    assert_eq!(err.components, 2);
    let d = psi.values.iter().zip(&err.psi.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(d < 1e-15);
}

#[test]
fn first_excited_state_on_even_grid_stays_connected() {
    let spec = load_preset("ho1d").unwrap();
    let g = geo(&spec);
    let psi = WaveFunction::from_fn(spec.chart(), |x| Complex64::new(x[0] * (-0.5 * x[0] * x[0]).exp(), 0.0));
    let f = decompose(&psi, &spec, &g).unwrap();
    assert_eq!(f.components, 1);
    // phase jumps by pi across the node
    assert!(((f.phi[256] - f.phi[255]).abs() - PI).abs() < 1e-12);
    assert!(max_diff_up_to_phase(&psi, &reconstruct(&f).unwrap()) < 1e-15);
}

#[test]
fn empty_density_region_is_reported() {
    let spec = load_preset("ho1d").unwrap();
    let g = geo(&spec);
    let psi = WaveFunction::from_fn(spec.chart(), |x| {
        if x[0].abs() < 2.0 { Complex64::new(0.0, 0.0) } else { Complex64::from_polar((-(x[0].abs() - 4.0).powi(2)).exp(), x[0]) }
    });
    let f = decompose(&psi, &spec, &g).unwrap();
    assert_eq!(f.components, 2);
    let hole = f.undefined.iter().map(|u| u.points).max().unwrap();
    assert_eq!(hole, 102);
    for i in 0..psi.len() {
        if !f.mask[i] {
            assert_eq!(f.v[0][i], 0.0);
            assert_eq!(f.quantum_potential[i], 0.0);
        }
    }
    let zero = WaveFunction::new(vec![Complex64::new(0.0, 0.0); psi.len()]);
    let f = decompose(&zero, &spec, &g).unwrap();
    assert!(f.mask.iter().all(|m| !m));
    assert_eq!(hamilton_jacobi_residual(&zero, &spec, &g, &vec![0.0; psi.len()]).unwrap_err(), MadelungError::PhaseUndefined);
}

#[test]
fn size_mismatch() {
    let spec = load_preset("ho1d").unwrap();
    let g = geo(&spec);
    let psi = WaveFunction::new(vec![Complex64::new(1.0, 0.0); 3]);
    assert!(matches!(decompose(&psi, &spec, &g), Err(MadelungError::SizeMismatch { got: 3, want: 512 })));
}

#[test]
fn coherent_state_round_trip() {
    let spec = load_preset("ho1d").unwrap();
    let g = geo(&spec);
    for t in [0.0, 0.4, 2.0, 5.5] {
        let psi = coherent_state(spec.chart(), 1.0, 1.0, 1.0, 1.5, t);
        let back = reconstruct(&decompose(&psi, &spec, &g).unwrap()).unwrap();
        assert!(max_diff_up_to_phase(&psi, &back) <= 1e-12);
    }
}

#[test]
fn stationary_state_satisfies_continuity() {
    let spec = load_preset("ho1d").unwrap();
    let g = geo(&spec);
    let h = build_hamiltonian(&spec, &g, 0.0).unwrap();
    let psi = lowest_eigenpairs(&h, 2, 1e-10).unwrap().eigenvectors.remove(1);
    let traj = evolve_with(&h, &psi, 1e-2, 200, &EvolveOptions { stride: 20, ..Default::default() }).unwrap();
    let r = continuity_residual(&traj, &spec, &g).unwrap();
    assert!(r.max_l2 <= 1e-8, "{:e}", r.max_l2);
    assert!(r.probability_drift <= 1e-12);
}

#[test]
fn moving_packet_continuity_converges() {
    let l2 = |n: usize, dt: f64, steps: usize| {
        let spec = load_preset("ho1d").unwrap().with_points(&[n]).unwrap();
        let g = geo(&spec);
        let prov = SpecProvider::new(&spec, &g).unwrap();
        let psi = coherent_state(spec.chart(), 1.0, 1.0, 1.0, 1.0, 0.0);
        let traj = evolve_with(&prov, &psi, dt, steps, &EvolveOptions { stride: 50, ..Default::default() }).unwrap();
        continuity_residual(&traj, &spec, &g).unwrap().max_l2
    };
    let (a, b) = (l2(256, 2e-3, 500), l2(512, 1e-3, 1000));
    assert!(a / b >= 3.5, "{a:e} {b:e}");
}

#[test]
fn hamilton_jacobi_exact_cases() {
    let spec = load_preset("ho1d").unwrap();
    let g = geo(&spec);
    let ground = WaveFunction::from_fn(spec.chart(), |x| Complex64::new(PI.powf(-0.25) * (-0.5 * x[0] * x[0]).exp(), 0.0));
    let r = hamilton_jacobi_residual(&ground, &spec, &g, &vec![-0.5; ground.len()]).unwrap();
    assert!(r.max_residual <= 1e-8, "{:e}", r.max_residual);
    assert!(r.max_quantum > 1.0);

    let d = 1e-4;
    let states = (-1..=1).map(|s| coherent_state(spec.chart(), 1.0, 1.0, 1.0, 1.0, 1.3 + s as f64 * d)).collect();
    let traj = Trajectory { states, sample_dt: d };
    let dphi = phase_time_derivative(&traj, 1).unwrap();
    let r = hamilton_jacobi_residual(&traj.states[1], &spec, &g, &dphi).unwrap();
    assert!(r.max_residual <= 1e-6, "{:e}", r.max_residual);
    let short = Trajectory { states: traj.states[..2].to_vec(), sample_dt: d };
    assert!(matches!(phase_time_derivative(&short, 1), Err(MadelungError::ShortTrajectory { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn packets_round_trip(x0 in -3.0f64..3.0, sigma in 0.5f64..2.0, k in -4.0f64..4.0) {
        let spec = load_preset("ho1d").unwrap().with_points(&[256]).unwrap();
        let g = geo(&spec);
        let psi = gaussian_1d(spec.chart(), x0, sigma, k);
        let f = decompose(&psi, &spec, &g).unwrap();
        let back = match reconstruct(&f) {
            Ok(p) => p,
            Err(e) => e.psi,
        };
        prop_assert!(max_diff_up_to_phase(&psi, &back) <= 1e-12);
        prop_assert!(f.rho.iter().zip(&psi.values).all(|(r, v)| (r - v.norm_sqr()).abs() <= 1e-15));
    }
}
