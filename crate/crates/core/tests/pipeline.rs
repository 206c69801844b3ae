use std::fs;
use std::path::{Path, PathBuf};

use nspace_qm::pipeline::*;
use nspace_qm::presets::load_preset;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nspace-pipeline-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn solve_writes_spectrum() {
    let spec = load_preset("ho1d").unwrap().with_points(&[128]).unwrap();
    let dir = scratch("solve");
    let out = solve(&spec, &SolveConfig { k: 3, ..Default::default() }, &dir).unwrap();
    assert!(out.passed());
    assert_eq!(out.files.len(), 3);
    let text = fs::read_to_string(dir.join("spectrum.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,eigenvalue,residual");
    assert_eq!(lines.len(), 4);
    let e1: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!((e1 - 1.5).abs() < 1e-2);
    let states = fs::read_to_string(dir.join("states.csv")).unwrap();
    assert!(states.starts_with("x,re_0,im_0,re_1,im_1,re_2,im_2\n"));
    assert_eq!(states.lines().count(), 129);
    assert!(fs::read_to_string(dir.join("hermiticity.txt")).unwrap().ends_with("overall pass\n"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn runs_are_byte_identical() {
    let spec = load_preset("ho1d").unwrap().with_points(&[96]).unwrap();
    let cfg = EvolveConfig { dt: 1e-2, steps: 40, stride: 10, init: InitialState::Coherent { amplitude: 1.0 }, ..Default::default() };
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    evolve_run(&spec, &cfg, &a).unwrap();
    evolve_run(&spec, &cfg, &b).unwrap();
    let sed_cfg = SedConfig { members: 3, modes: 50, duration: 0.2, equilibration: 0.1, ..Default::default() };
    sed(&sed_cfg, &a.join("sed")).unwrap();
    sed(&sed_cfg, &b.join("sed")).unwrap();
    assert_eq!(read_all(&a).len(), 2);
    assert_eq!(read_all(&a), read_all(&b));
    assert_eq!(read_all(&a.join("sed")), read_all(&b.join("sed")));
    fs::remove_dir_all(&a).unwrap();
    fs::remove_dir_all(&b).unwrap();
}

#[test]
fn verify_reports_convergence() {
    let spec = load_preset("ho1d").unwrap().with_points(&[128]).unwrap();
    let cfg = EvolveConfig { dt: 4e-3, steps: 250, stride: 25, init: InitialState::Coherent { amplitude: 1.0 }, ..Default::default() };
    let dir = scratch("verify");
    let out = verify(&spec, &cfg, &VerifyTolerances::default(), &dir).unwrap();
    let names: Vec<&str> = out.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "probability_drift",
            "madelung_round_trip",
            "boundary_mass",
            "continuity_convergence",
            "ehrenfest_convergence",
            "hamilton_jacobi_convergence"
        ]
    );
    for c in &out.checks[..3] {
        assert!(c.passed(), "{c:?}");
    }
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 8);
    assert!(dir.join("madelung.csv").exists() && dir.join("hj_residual.csv").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn check_semantics() {
    assert!(Check::at_most("a", 1.0, 1.0).passed());
    assert!(!Check::at_most("a", 1.5, 1.0).passed());
    assert!(Check::at_least("b", 4.0, 3.5).passed());
    assert!(!Check::at_least("b", 3.0, 3.5).passed());
    assert!(!Check::at_most("nan", f64::NAN, 1.0).passed());
    let out = Outcome { files: vec![], checks: vec![Check::at_most("a", 0.0, 1.0), Check::at_least("b", 0.0, 1.0)] };
    assert!(!out.passed());
}

#[test]
fn configuration_errors() {
    let ho = load_preset("ho1d").unwrap();
    let dir = scratch("config");
    let bad = [
        (EvolveConfig { stride: 0, ..Default::default() }, &ho),
        (EvolveConfig { steps: 0, ..Default::default() }, &ho),
        (EvolveConfig { init: InitialState::Packet { x0: 0.0, sigma: -1.0, k: 0.0 }, ..Default::default() }, &ho),
    ];
    for (cfg, spec) in bad {
        assert!(matches!(evolve_run(spec, &cfg, &dir), Err(PipelineError::Config(_))), "{cfg:?}");
    }
    let hydrogen = load_preset("hydrogen_radial_l0").unwrap();
    let coherent = EvolveConfig { init: InitialState::Coherent { amplitude: 1.0 }, ..Default::default() };
    assert!(matches!(evolve_run(&hydrogen, &coherent, &dir), Err(PipelineError::Config(_))));
    let few = EvolveConfig { steps: 30, stride: 10, ..Default::default() };
    assert!(matches!(verify(&ho, &few, &VerifyTolerances::default(), &dir), Err(PipelineError::Config(_))));
    assert!(matches!(sed(&SedConfig { members: 1, ..Default::default() }, &dir), Err(PipelineError::Config(_))));
    assert!(matches!(
        sed(&SedConfig { duration: 1.0, equilibration: 2.0, ..Default::default() }, &dir),
        Err(PipelineError::Config(_))
    ));
    assert!(matches!(sed(&SedConfig { components: 2, ..Default::default() }, &dir), Err(PipelineError::Sed(_))));
    assert!(!dir.exists());
}

#[test]
fn sources() {
    assert!(matches!(Source::Preset("nope".into()).load(), Err(PipelineError::Preset(_))));
    assert!(matches!(Source::File("/nonexistent/x.nsp".into()).load(), Err(PipelineError::Io { .. })));
    let dir = scratch("source");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("p.nsp");
    fs::write(&path, "coordinates { x: (0, 1) }\nmetric { g[1,1] = y }").unwrap();
    match Source::File(path.clone()).load() {
        Err(PipelineError::Parse { path: p, .. }) => assert!(p.ends_with("p.nsp")),
        other => panic!("{other:?}"),
    }
    fs::write(&path, load_preset("ho1d").unwrap().to_string()).unwrap();
    assert_eq!(Source::File(path).load().unwrap(), load_preset("ho1d").unwrap());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unwritable_output_leaves_nothing_behind() {
    let dir = scratch("blocked");
    fs::create_dir_all(&dir).unwrap();
    // a directory where a file should go makes the second write fail
    fs::create_dir_all(dir.join("states.csv")).unwrap();
    let spec = load_preset("ho1d").unwrap().with_points(&[64]).unwrap();
    let err = solve(&spec, &SolveConfig { k: 1, ..Default::default() }, &dir).unwrap_err();
    assert!(matches!(err, PipelineError::Io { .. }));
    assert!(!dir.join("spectrum.csv").exists());
    assert!(!dir.join("hermiticity.txt").exists());
    fs::remove_dir_all(&dir).unwrap();
}
