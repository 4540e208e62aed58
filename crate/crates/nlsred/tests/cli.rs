use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nlsred::artifacts::{recorded_hash, HASH_PREFIX};
use nlsred::core::exec::{Executor, Serial};
use nlsred::exec::Pool;
use nlsred::report::Relation;
use nlsred::{render, run, Check, Mode, Num, RunError, RunOptions, ScenarioConfig};
use proptest::prelude::*;

const BUNDLED: [&str; 6] = ["unperturbed", "constant-v", "double-well", "ring", "k-modulated", "saddle"];

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn bundled(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&scenario_path(name)).unwrap()
}

fn opts(dir: &Path) -> RunOptions {
    RunOptions {
        out: Some(dir.to_path_buf()),
        jobs: 1,
        seed_mesh: None,
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlsred"))
}

#[test]
fn bundled_scenarios_validate() {
    for name in BUNDLED {
        let cfg = bundled(name);
        let val = cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(val.hypotheses.inf_one_plus_v > 0.0 && val.hypotheses.inf_k > 0.0);
    }
}

#[test]
fn malformed_expression_reports_its_position() {
    let mut cfg = bundled("constant-v");
    cfg.scenario.v_expr = "0.44*(x1+".into();
    match cfg.validate() {
        Err(RunError::Config(msg)) => assert!(msg.contains("V_expr") && msg.contains("byte 9"), "{msg}"),
        other => panic!("{:?}", other.err()),
    }
    cfg.scenario.v_expr = "foo(x1)".into();
    assert!(matches!(cfg.validate(), Err(RunError::Config(m)) if m.contains("foo")));
}

#[test]
fn invalid_configs_are_config_errors() {
    let base = bundled("double-well");
    let mut cases: Vec<ScenarioConfig> = Vec::new();
    let mut c = base.clone();
    c.scenario.p = 7.0;
    c.scenario.n = 3;
    c.scenario.v_expr = "0".into();
    cases.push(c);
    let mut c = base.clone();
    c.scenario.v_expr = "-1.5".into();
    cases.push(c);
    let mut c = base.clone();
    c.scenario.k_expr = "x1".into();
    cases.push(c);
    let mut c = base.clone();
    c.run.epsilon_schedule = vec![0.05, 0.1];
    cases.push(c);
    let mut c = base.clone();
    c.run.epsilon_schedule.clear();
    cases.push(c);
    let mut c = base.clone();
    c.run.delta = Some(-0.3);
    cases.push(c);
    let mut c = base.clone();
    c.run.sandwich_set = Some(vec![vec![5.0]]);
    cases.push(c);
    let mut c = base.clone();
    c.run.topology_tag = Some("klein bottle".into());
    cases.push(c);
    let mut c = base;
    c.domain.order = Some(3);
    cases.push(c);
    for c in cases {
        let err = c.validate().err().expect("must be rejected");
        assert_eq!(err.exit_code(), 2, "{err}");
    }
    assert!(ScenarioConfig::from_toml("[scenario]\nn = 1\nfoo = 2\n").is_err());
    let text = fs::read_to_string(scenario_path("unperturbed")).unwrap();
    assert!(ScenarioConfig::from_toml(&text.replace("[run]", "[run]\nbogus = 1")).is_err());
}

#[test]
fn hash_ignores_the_output_directory() {
    let a = bundled("ring");
    let mut b = a.clone();
    b.run.output_dir = Some("elsewhere".into());
    assert_eq!(a.hash(), b.hash());
    b.scenario.v_expr.push_str("+0");
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn profile_mode_reports_the_ground_state_constants() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = bundled("unperturbed");
    cfg.run.mode = Mode::Profile;
    let report = run(&cfg, &opts(dir.path())).unwrap();
    assert!(report.pass, "{}", report.summary());
    assert!((report.get("C0").unwrap() - 16.0 / 3.0).abs() < 1e-6);
    assert!(report.get("shooting_sup_error").unwrap() < 1e-8);
    let csv = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert_eq!(first, format!("{HASH_PREFIX}{}", cfg.hash()));
    assert_eq!(csv.lines().nth(1).unwrap(), "r,U,dU");
}

#[test]
fn solve_mode_on_the_unperturbed_problem() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&bundled("unperturbed"), &opts(dir.path())).unwrap();
    assert!(report.pass, "{}", report.summary());
    assert!(report.get("newton_iterations[0]").unwrap() <= 2.0);
    assert!(report.get("degenerate_landscape").unwrap() == 1.0);
}

#[test]
fn reduce_mode_on_a_constant_potential() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&bundled("constant-v"), &opts(dir.path())).unwrap();
    assert!(report.pass, "{}", report.summary());
    assert!(report.get("w_norm_max").unwrap() < 1e-8);
    for name in ["reduce.csv", "gap.csv", "aux_slice.csv", "report.json"] {
        assert_eq!(recorded_hash(&dir.path().join(name)).unwrap().as_deref(), Some(report.config_hash.as_str()));
    }
}

#[test]
fn artifacts_of_different_configs_are_not_mixed() {
    let dir = tempfile::tempdir().unwrap();
    run(&bundled("constant-v"), &opts(dir.path())).unwrap();
    // the same config may overwrite its own artifacts
    run(&bundled("constant-v"), &opts(dir.path())).unwrap();
    let err = run(&bundled("unperturbed"), &opts(dir.path())).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("refusing to mix"), "{err}");
    // a foreign file in a finished run is refused by `report` as well
    fs::write(dir.path().join("stray.csv"), "# config_hash: 00\nx\n1\n").unwrap();
    assert!(matches!(render(dir.path()), Err(RunError::Config(_))));
}

#[test]
fn report_lists_what_is_missing() {
    let empty = tempfile::tempdir().unwrap();
    let err = render(empty.path()).unwrap_err().to_string();
    assert!(err.contains("report.json"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    run(&bundled("constant-v"), &opts(dir.path())).unwrap();
    fs::remove_file(dir.path().join("gap.csv")).unwrap();
    let err = render(dir.path()).unwrap_err().to_string();
    assert!(err.contains("gap.csv"), "{err}");
}

#[test]
fn report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    run(&bundled("constant-v"), &opts(dir.path())).unwrap();
    render(dir.path()).unwrap();
    let first = fs::read(dir.path().join("phi_overlay.svg")).unwrap();
    let summary = fs::read(dir.path().join("summary.txt")).unwrap();
    render(dir.path()).unwrap();
    assert_eq!(first, fs::read(dir.path().join("phi_overlay.svg")).unwrap());
    assert_eq!(summary, fs::read(dir.path().join("summary.txt")).unwrap());
    let svg = String::from_utf8(first).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<!-- config_hash: ") && svg.contains("<!-- data: "));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bin()
        .args(["run", "--config"])
        .arg(scenario_path("constant-v"))
        .arg("--out")
        .arg(dir.path().join("ok"))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(scenario_path("constant-v")).unwrap();
    fs::write(&bad, text.replace("\"0.44\"", "\"0.44*)\"")).unwrap();
    let out = bin().args(["run", "--config"]).arg(&bad).arg("--out").arg(dir.path().join("bad")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("byte 5"), "{err}");
    assert!(!dir.path().join("bad").exists());

    let report = bin().arg("report").arg(dir.path().join("ok")).output().unwrap();
    assert_eq!(report.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&report.stdout).contains("result: PASS"));
    let missing = bin().arg("report").arg(dir.path().join("nothing")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn binary_reports_numerical_failure_with_exit_one() {
    // the double well has three solutions, so demanding four fails a check
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_path("double-well")).unwrap();
    let cfg = dir.path().join("tight.toml");
    fs::write(&cfg, text.replace("expected_solutions = 3", "expected_solutions = 4")).unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("FAIL eps=0.05 exact count: 3 == 4"), "{err}");
    assert!(dir.path().join("run/report.json").exists());
}

#[test]
fn nonfinite_numbers_survive_json() {
    for x in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY, 0.0, -1.5e-300] {
        let text = serde_json::to_string(&Num(x)).unwrap();
        let back: Num = serde_json::from_str(&text).unwrap();
        assert!(back.0 == x || (x.is_nan() && back.0.is_nan()), "{text}");
    }
}

proptest! {
    #[test]
    fn finite_numbers_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
        let back: Num = serde_json::from_str(&serde_json::to_string(&Num(x)).unwrap()).unwrap();
        prop_assert_eq!(back.0, x);
        let csv: f64 = nlsred::artifacts::num(x).parse().unwrap();
        prop_assert_eq!(csv, x);
    }

    #[test]
    fn check_margin_agrees_with_verdict(m in -10.0f64..10.0, t in -10.0f64..10.0, r in 0usize..4) {
        let rel = [Relation::Below, Relation::AtMost, Relation::Above, Relation::AtLeast][r];
        let c = Check::new("x", m, rel, t);
        if m != t {
            prop_assert_eq!(c.pass, c.margin.0 > 0.0);
        }
        if !c.pass {
            prop_assert_eq!(c.measured.0, m);
            prop_assert_eq!(c.threshold.0, t);
        }
    }

    #[test]
    fn pool_keeps_input_order(items in proptest::collection::vec(-1e6f64..1e6, 0..200), jobs in 1usize..4) {
        let pool = Pool::new(jobs).unwrap();
        let f = |x: f64| (x * 1.5).sin();
        prop_assert_eq!(pool.map(items.clone(), f), Serial.map(items, f));
    }
}
