use std::path::Path;
use std::process::Command as Process;

use cvqkd_keyrate::app::{run, Command, RunOptions};
use cvqkd_keyrate::output::{csv_header, read_csv, read_csv_from, write_csv_to};
use cvqkd_keyrate::scenario::{
    evaluate_point, optimization_score, optimize_amplitude_postselection, KeyRateReport, PointStatus, ScenarioConfig,
};

fn small(n_c: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.protocol.n_c = n_c;
    c
}

fn without_timing(mut r: KeyRateReport) -> String {
    r.wall_time_s = 0.0;
    format!("{r:?}")
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = small(3);
    let a = evaluate_point(&cfg);
    let b = evaluate_point(&cfg);
    assert!(a.status.is_success(), "{}", a.message);
    assert_eq!(without_timing(a), without_timing(b));
}

#[test]
fn csv_round_trip_and_header_only() {
    let cfg = small(3);
    let mut reps = vec![evaluate_point(&cfg)];
    let mut neg = KeyRateReport::from_inputs(&cfg);
    neg.status = PointStatus::Error;
    neg.message = "a, \"quoted\" message".into();
    reps.push(neg);
    let mut buf = Vec::new();
    write_csv_to(&mut buf, &reps).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().next().unwrap(), csv_header().join(","));
    let back = read_csv_from(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 2);
    for (x, y) in reps.iter().zip(&back) {
        assert_eq!(format!("{x:?}"), format!("{y:?}"));
    }
    let mut empty = Vec::new();
    write_csv_to(&mut empty, &[]).unwrap();
    assert_eq!(String::from_utf8(empty).unwrap(), format!("{}\n", csv_header().join(",")));
}

#[test]
fn manifest_lists_defaults_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("s.toml");
    std::fs::write(&cfg_path, "[channel]\ndistance_km = 5.0\n").unwrap();
    let out = dir.path().join("out");
    let opts = RunOptions { config: Some(cfg_path), out: out.clone(), threads: Some(1), n_c: Some(3), ..Default::default() };
    let res = run(Command::Point, &opts).unwrap();
    assert_eq!(res.exit_code, 0);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let keys: Vec<&str> = m["defaults_applied"].as_array().unwrap().iter().map(|d| d["key"].as_str().unwrap()).collect();
    assert!(keys.contains(&"channel.xi"));
    assert!(keys.contains(&"plan.n_total"));
    assert!(!keys.contains(&"channel.distance_km"));
    assert_eq!(m["overrides"][0], "protocol.n_c=3");
    assert_eq!(m["resolved_config"]["protocol"]["n_c"], 3);
    assert_eq!(m["resolved_config"]["channel"]["distance_km"], 5.0);
    assert_eq!(m["command"], "point");
    assert_eq!(m["points"], 1);
    let counted: u64 = m["status_counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(counted, 1);
    for a in m["artifacts"].as_array().unwrap() {
        assert!(out.join(a.as_str().unwrap()).exists(), "{a}");
    }
    let back = read_csv(&out.join("results.csv")).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].distance_km, 5.0);
}

fn cli(args: &[&str], dir: &Path) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_cvqkd")).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn binary_point_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ok.toml"), "[plan]\nn_total = 1e10\n").unwrap();
    let ok = cli(&["point", "--config", "ok.toml", "--nc", "3", "--out", "o", "--threads", "1"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("o/results.csv").exists());
    assert!(dir.path().join("o/manifest.json").exists());

    std::fs::write(dir.path().join("bad.toml"), "[plan]\nn_totl = 1e10\n").unwrap();
    let bad = cli(&["point", "--config", "bad.toml", "--out", "b"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("n_totl"));

    let conv = cli(&["point", "--gamma-convention", "cubed", "--out", "c"], dir.path());
    assert_ne!(conv.status.code(), Some(0));
}

#[test]
fn small_blocks_are_clean_negative() {
    let mut cfg = small(3);
    cfg.plan.n_total = 1e7;
    let r = evaluate_point(&cfg);
    assert_eq!(r.status, PointStatus::CleanNegative, "{}", r.message);
    assert!(r.key_rate <= 0.0 && r.key_rate_clamped == 0.0 && r.expected_rate == 0.0);
    assert!(r.status.is_success());
}

#[test]
fn single_cell_optimizer_is_identity() {
    let cfg = small(3);
    let (best, all) = optimize_amplitude_postselection(&cfg, &[0.85], &[0.45], |_, _| {}).unwrap();
    assert_eq!(all.len(), 1);
    assert_eq!(without_timing(best), without_timing(evaluate_point(&cfg)));
}

#[test]
fn optimizer_returns_the_argmax() {
    let cfg = small(3);
    let (best, all) = optimize_amplitude_postselection(&cfg, &[0.7, 0.85], &[0.3, 0.45], |_, _| {}).unwrap();
    assert_eq!(all.len(), 4);
    let top = all.iter().map(optimization_score).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(optimization_score(&best), top);
    assert!(all.iter().any(|r| r.alpha == best.alpha && r.delta_r == best.delta_r));
}

#[test]
fn unique_acceptance_has_zero_expected_rate() {
    let r = evaluate_point(&small(3));
    assert_eq!(r.t_factor, 0.0);
    assert_eq!(r.nu_c, 1.0);
    assert_eq!(r.expected_rate, 0.0);
}

#[test]
fn expected_rate_never_exceeds_key_rate() {
    let mut cfg = small(3);
    cfg.plan.n_total = 1e11;
    cfg.plan.t_factor = 1.11;
    cfg.plan.eps_c_et_target = Some(1e-3);
    let r = evaluate_point(&cfg);
    assert!(r.nu_c < 1.0, "nu_c {}", r.nu_c);
    assert!(r.expected_rate <= r.key_rate_clamped);
    assert!(r.expected_rate >= 0.0);
}
