use num_complex::Complex64;
use nspace_qm::dsl::{parse_problem, ProblemSpec};
use nspace_qm::exchange::*;
use nspace_qm::geometry::GeometryData;
use nspace_qm::operator::build_hamiltonian;
use nspace_qm::presets::load_preset;
use nspace_qm::solvers::*;
use nspace_qm::states::WaveFunction;
use proptest::prelude::*;

fn geo(spec: &ProblemSpec) -> GeometryData {
    GeometryData::new(spec, spec.chart().clone()).unwrap()
}

fn pair(points: usize) -> ProblemSpec {
    load_preset("identical2_1d").unwrap().with_points(&[points, points]).unwrap()
}

fn product(spec: &ProblemSpec, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> WaveFunction {
    WaveFunction::from_fn(spec.chart(), |x| Complex64::new(f(x[0]) * g(x[1]), 0.0))
}

#[test]
fn swap_is_an_involution() {
    let spec = pair(24);
    let g = geo(&spec);
    let perm = exchange_permutation(&spec, &g).unwrap();
    let c = spec.chart();
    for i in 0..perm.len() {
        assert_eq!(perm[perm[i]], i);
        let (a, b) = (c.point(i), c.point(perm[i]));
        assert_eq!((a[0], a[1]), (b[1], b[0]));
    }
}

#[test]
fn projection_fixes_sector_states() {
    let spec = pair(32);
    let g = geo(&spec);
    let f = |x: f64| (-(x - 1.0).powi(2)).exp();
    let h = |x: f64| (-(x + 0.5).powi(2) / 2.0).exp();
    let sym = WaveFunction::from_fn(spec.chart(), |x| Complex64::new(f(x[0]) * h(x[1]) + h(x[0]) * f(x[1]), 0.0));
    let anti = WaveFunction::from_fn(spec.chart(), |x| Complex64::new(f(x[0]) * h(x[1]) - h(x[0]) * f(x[1]), 0.0));
    for (psi, sign) in [(sym, 1.0), (anti, -1.0)] {
        let mut psi = psi;
        psi.normalize(g.weights());
        let p = project_exchange(&psi, &spec, &g, sign).unwrap();
        assert!((p.norm - 1.0).abs() < 1e-14);
        let d = psi.values.iter().zip(&p.psi.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-14);
        // the opposite sector annihilates it
        let q = project_exchange(&psi, &spec, &g, -sign).unwrap();
        assert!(q.annihilated());
        assert!(q.psi.values.iter().all(|v| v.norm() == 0.0));
    }
}

#[test]
fn identical_orbitals_have_no_antisymmetric_part() {
    let spec = pair(32);
    let g = geo(&spec);
    let phi = |x: f64| (-x * x / 2.0).exp();
    let psi = product(&spec, phi, phi);
    assert!(project_exchange(&psi, &spec, &g, -1.0).unwrap().annihilated());
}

#[test]
fn distinct_orbitals_split_evenly() {
    // orthogonal orbitals: |(ab + ba)/2|^2 = |(ab - ba)/2|^2 = |ab|^2 / 2
    let spec = pair(64);
    let g = geo(&spec);
    let psi = product(&spec, |x| (-x * x / 2.0).exp(), |x| x * (-x * x / 2.0).exp());
    let s = project_exchange(&psi, &spec, &g, 1.0).unwrap().norm;
    let a = project_exchange(&psi, &spec, &g, -1.0).unwrap().norm;
    assert!((s * s + a * a - 1.0).abs() < 1e-12);
    assert!((s - a).abs() < 1e-6, "{s} {a}");
}

#[test]
fn asymmetric_problems_are_rejected() {
    let flagless = parse_problem(
        "coordinates { x1: (-5, 5) x2: (-5, 5) } metric { g[1,1] = 1 g[2,2] = 1 }
         potential { W = x1^2 + x2^2 } grid { x1: 8 x2: 8 }",
    )
    .unwrap();
    let tilted = parse_problem(
        "coordinates { x1: (-5, 5) x2: (-5, 5) } metric { g[1,1] = 1 g[2,2] = 1 }
         potential { W = x1^2 + 2*x2^2 } grid { x1: 8 x2: 8 } symmetry = symmetric",
    )
    .unwrap();
    let ranges = parse_problem(
        "coordinates { x1: (-5, 5) x2: (-4, 4) } metric { g[1,1] = 1 g[2,2] = 1 }
         potential { W = 0 } grid { x1: 8 x2: 8 } symmetry = symmetric",
    )
    .unwrap();
    let metric = parse_problem(
        "coordinates { x1: (1, 2) x2: (1, 2) } metric { g[1,1] = 1 g[2,2] = x1^2 }
         potential { W = 0 } grid { x1: 8 x2: 8 } symmetry = antisymmetric",
    )
    .unwrap();
    let odd = parse_problem(
        "coordinates { x: (-1, 1) } metric { g[1,1] = 1 } potential { W = 0 } grid { x: 8 } symmetry = symmetric",
    )
    .unwrap();
    for spec in [flagless, tilted, ranges, metric, odd] {
        let g = geo(&spec);
        assert!(matches!(exchange_permutation(&spec, &g), Err(ExchangeError::NotExchangeSymmetricChart(_))), "{spec}");
    }
}

#[test]
fn bad_projection_inputs() {
    let spec = pair(8);
    let g = geo(&spec);
    let psi = WaveFunction::new(vec![Complex64::new(1.0, 0.0); 64]);
    assert_eq!(project_exchange(&psi, &spec, &g, 0.5).unwrap_err(), ExchangeError::InvalidSign(0.5));
    let short = WaveFunction::new(vec![Complex64::new(1.0, 0.0); 5]);
    assert!(matches!(project_exchange(&short, &spec, &g, 1.0), Err(ExchangeError::SizeMismatch { got: 5, want: 64 })));
}

#[test]
fn sector_gap_in_common_trap() {
    // lowest bosonic state (0,0) at 1, lowest fermionic (0,1) at 2
    let spec = pair(64);
    let g = geo(&spec);
    let h = build_hamiltonian(&spec, &g, 0.0).unwrap();
    let sector = exchange_sector(&spec, &g).unwrap();
    assert_eq!(sector.sign(), -1.0);
    assert!(exchange_commutator(&h, sector.perm(), -1.0, 3, 7) <= 1e-10);
    let anti = lowest_eigenpairs_with(&h, 1, 1e-10, &EigenOptions { sector: Some(sector.clone()), ..Default::default() }).unwrap();
    let sym = lowest_eigenpairs_with(
        &h,
        1,
        1e-10,
        &EigenOptions { sector: Some(Sector::new(sector.perm().to_vec(), 1.0)), ..Default::default() },
    )
    .unwrap();
    assert!((sym.eigenvalues[0] - 1.0).abs() < 5e-3, "{:?}", sym.eigenvalues);
    assert!((anti.eigenvalues[0] - 2.0).abs() < 1e-2, "{:?}", anti.eigenvalues);
    // sector eigenvectors stay in their sector
    let v = &anti.eigenvectors[0];
    let p = project_exchange(v, &spec, &g, -1.0).unwrap();
    assert!((p.norm - 1.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent(re in prop::collection::vec(-1.0f64..1.0, 100), im in prop::collection::vec(-1.0f64..1.0, 100), sym in any::<bool>()) {
        let spec = pair(10);
        let g = geo(&spec);
        let mut psi = WaveFunction::new(re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect());
        psi.normalize(g.weights());
        let sign = if sym { 1.0 } else { -1.0 };
        let once = project_exchange(&psi, &spec, &g, sign).unwrap();
        prop_assume!(!once.annihilated());
        let twice = project_exchange(&once.psi, &spec, &g, sign).unwrap();
        prop_assert!((twice.norm - 1.0).abs() < 1e-12);
        let d = once.psi.values.iter().zip(&twice.psi.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(d < 1e-13);
        // the two sectors together carry all the probability
        let other = project_exchange(&psi, &spec, &g, -sign).unwrap();
        prop_assert!((once.norm.powi(2) + other.norm.powi(2) - 1.0).abs() < 1e-12);
    }
}
