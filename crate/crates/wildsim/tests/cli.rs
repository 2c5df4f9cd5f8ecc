use std::fs;

use wildsim::cli::main_with;

fn run(args: &[&str]) -> i32 {
    main_with(std::iter::once("wildsim").chain(args.iter().copied()).map(std::ffi::OsString::from))
}

#[test]
fn bad_arity_is_a_usage_error() {
    assert_eq!(run(&["trees", "count", "--m", "1", "--n", "3"]), 2);
}

#[test]
fn missing_config_exits_with_usage_code() {
    assert_eq!(run(&["simulate", "--config", "does-not-exist.json", "--t", "1", "--replicas", "10", "--seed", "1"]), 2);
}

#[test]
fn pn_writes_half_at_log_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pn.csv");
    let code = run(&["--no-header", "branching", "pn", "--m", "2", "--t", "0.6931471805599453", "--n-max", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&out).unwrap();
    let first = text.lines().find(|l| l.starts_with("0,")).unwrap();
    let p: f64 = first[2..].parse().unwrap();
    assert!((p - 0.5).abs() < 1e-12, "{p}");
}

#[test]
fn solve_and_simulate_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"kernel": {"kind": "wealth", "m": 2, "weights": {"family": "uniform", "lo": 0.0, "hi": 1.0}},
            "initial": {"law": "exponential", "rate": 1.0}, "population": 200}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let solve = dir.path().join("solve.csv");
    assert_eq!(run(&["solve", "--config", c, "--t", "1", "--samples", "500", "--seed", "3", "--out", solve.to_str().unwrap()]), 0);
    let sim = dir.path().join("sim.csv");
    assert_eq!(run(&["simulate", "--config", c, "--t", "1", "--replicas", "50", "--seed", "3", "--out", sim.to_str().unwrap()]), 0);
    assert!(fs::read_to_string(solve).unwrap().lines().count() > 1);
    assert!(fs::read_to_string(sim).unwrap().lines().count() > 1);
}
