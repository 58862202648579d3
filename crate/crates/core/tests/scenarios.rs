use std::path::PathBuf;

use dgame_core::scenario::{run_scenario, Experiment, Scenario};

fn shipped(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    Scenario::load(&path).unwrap()
}

#[test]
fn shipped_scenarios_parse_and_round_trip() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let s = Scenario::load(&path).unwrap();
            assert_eq!(Scenario::from_toml(&s.to_toml().unwrap()).unwrap(), s, "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 8);
}

#[test]
fn constants_scenario_reports_table() {
    let s = shipped("example2_constants");
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(&s, tmp.path()).unwrap();
    assert!(out.passed());
    assert!(out.lines.iter().any(|l| l == "beta = 5"));
    assert!(out.lines.iter().any(|l| l == "C = 24.3649879214"));
    let csv = std::fs::read_to_string(tmp.path().join("constants.csv")).unwrap();
    assert!(csv.starts_with("fineness,alpha_tilde,epsilon,theorem_epsilon,terminal_gap_bound\n0,0,0,1.30574273459,"));
    assert!(csv.contains("\n0.01,0.538470112172,1.11694022434,13.3806435044,"));
}

#[test]
fn equilibrium_scenario_small_run() {
    let mut s = shipped("example2_equilibrium");
    s.run.n_rollouts = 200;
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(&s, tmp.path()).unwrap();
    assert!(out.passed(), "{:?}", out.verdicts);
    let rollouts = std::fs::read_to_string(tmp.path().join("rollouts.csv")).unwrap();
    assert_eq!(rollouts.lines().count(), 201);
    assert!(tmp.path().join("gap.csv").exists() && tmp.path().join("summary.json").exists());
    assert_eq!(out.summary["pass"], true);
}

#[test]
fn failed_verdict_is_reported() {
    let mut s = shipped("example2_equilibrium");
    s.run.n_rollouts = 50;
    s.run.sharp_gap = Some(0.0);
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(&s, tmp.path()).unwrap();
    assert!(!out.passed());
    assert_eq!(out.summary["verdicts"]["sharp_gap"], false);
}

#[test]
fn seed_changes_rollouts_but_not_reruns() {
    let mut s = shipped("example2_bounds");
    s.run.n_rollouts = 40;
    s.experiment = Experiment::VerifyBounds;
    let tmp = tempfile::tempdir().unwrap();
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("rollouts.csv")).unwrap();
    run_scenario(&s, &tmp.path().join("a")).unwrap();
    run_scenario(&s, &tmp.path().join("b")).unwrap();
    s.seed += 1;
    run_scenario(&s, &tmp.path().join("c")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let plot = std::fs::read_to_string(tmp.path().join("a/tracking.csv")).unwrap();
    assert!(plot.starts_with("step,mean_gap,bound\n"));
}

#[test]
fn pde_scenario_writes_loadable_lattice() {
    let mut s = shipped("example2_pde");
    s.pair.h = Some(0.2);
    s.pair.dt = Some(0.01);
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(&s, tmp.path()).unwrap();
    assert!(out.passed(), "{:?}", out.verdicts);
    let mut again = s.clone();
    again.pair.source = "lattice-file".into();
    again.pair.path = Some(tmp.path().join("pair.lattice").to_string_lossy().into_owned());
    again.pair.id = None;
    again.experiment = Experiment::Simulate;
    again.run.n_rollouts = 20;
    again.policies.eq_u = dgame_core::scenario::LawSpec::Named("feedback".into());
    again.policies.eq_v = dgame_core::scenario::LawSpec::Named("feedback".into());
    again.run.psi_inner = 8;
    again.validate().unwrap();
    let game = again.build_game().unwrap();
    let pair = again.build_pair(&game, 0.1).unwrap();
    assert!((pair.value(1, 0.0, &[0.0, 0.0]).unwrap() + 0.75).abs() < 1e-9);
}

#[test]
fn deviation_and_condition_scenarios_small() {
    let tmp = tempfile::tempdir().unwrap();
    let mut d = shipped("example2_deviations");
    d.run.n_rollouts = 100;
    let out = run_scenario(&d, &tmp.path().join("dev")).unwrap();
    assert!(out.passed(), "{:?}", out.verdicts);
    let mut c = shipped("example2_condition_c");
    c.run.n_samples = 2000;
    let out = run_scenario(&c, &tmp.path().join("cc")).unwrap();
    assert!(out.passed(), "{:?}", out.verdicts);
}

#[test]
fn unknown_ids_name_their_fields() {
    let s = shipped("example2_equilibrium");
    let mut bad = s.clone();
    bad.pair.id = Some("example7".into());
    assert!(bad.validate().unwrap_err().to_string().contains("pair.id"));
    let mut bad = s.clone();
    bad.run.deviations.push(dgame_core::scenario::DeviationConfig { player: 1, kind: "teleport".into(), control: None });
    assert!(bad.validate().unwrap_err().to_string().contains("run.deviations[0].kind"));
}
