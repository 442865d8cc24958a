//! End-to-end tests of the `bcube` binary: exit codes, file outputs,
//! determinism, and the analyze/params numbers.

use std::path::Path;
use std::process::{Command, Output};

/// The bundled small chain config, exercised as shipped.
fn desk_chain() -> String {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk_small.toml");
    std::fs::read_to_string(path).expect("bundled config is present")
}

const DESK_INVOCATION: &str = r#"
mode = "invocation"
seed = 3

[topology]
n = 12
f = 0.0

[protocol]
m = 4
s = 5
object_bits = 2048

[adversary]
strategy = "honest-compliant"
"#;

fn bcube(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcube"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn simulate_chain_writes_metrics_and_repeats_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "desk.toml", &desk_chain());

    let out = bcube(&["simulate", "--config", &cfg, "--out-dir", "out1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["slots"].as_u64().unwrap(), 48);
    assert!(summary["confirmed_slots"].as_u64().unwrap() > 0);
    assert_eq!(summary["safety_violations"], 0);
    assert_eq!(summary["config"].as_str().unwrap().len(), 64);
    assert!(summary["chain_digest"].is_string());

    for file in ["desk-seed7.records.ldjson", "desk-seed7.summary.json", "desk-seed7.chains.ldjson"]
    {
        assert!(dir.path().join("out1").join(file).is_file(), "{file} missing");
    }

    // repeat run: identical stdout and identical files
    let again = bcube(&["simulate", "--config", &cfg, "--out-dir", "out2"], dir.path());
    assert_eq!(out.stdout, again.stdout);
    for file in ["desk-seed7.records.ldjson", "desk-seed7.summary.json", "desk-seed7.chains.ldjson"]
    {
        let a = std::fs::read(dir.path().join("out1").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("out2").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }

    // a different seed changes the outputs and the recorded config hash
    let other = bcube(
        &["simulate", "--config", &cfg, "--seed", "8", "--out-dir", "out3"],
        dir.path(),
    );
    assert!(other.status.success());
    assert_ne!(out.stdout, other.stdout);
    assert!(dir.path().join("out3/desk-seed8.summary.json").is_file());
}

#[test]
fn simulate_invocation_mode_and_strategy_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "inv.toml", DESK_INVOCATION);
    let out = bcube(&["simulate", "--config", &cfg, "--out-dir", "out"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["agreed"], true);
    assert_eq!(summary["outcome"], "object(2048 bits)");
    assert_eq!(summary["forgery_violations"], 0);

    let out = bcube(
        &["simulate", "--config", &cfg, "--strategy", "not-a-strategy", "--out-dir", "out"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not-a-strategy"));
}

#[test]
fn malformed_configs_exit_2_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();

    let typo = write(dir.path(), "typo.toml", &desk_chain().replace("rho = 16", "rh = 16"));
    let out = bcube(&["simulate", "--config", &typo, "--out-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rh"), "{err}");

    let bad = write(dir.path(), "bad.toml", &desk_chain().replace("f = 0.5", "f = 2.0"));
    let out = bcube(&["simulate", "--config", &bad, "--out-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = bcube(&["simulate", "--config", "nope.toml", "--out-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn impossible_send_budget_is_reported_as_a_violation_exit() {
    let dir = tempfile::tempdir().unwrap();
    // a bound below any real message size forces recorded budget violations
    let cfg = write(
        dir.path(),
        "tight.toml",
        &DESK_INVOCATION.replace("[adversary]", "[run]\nbudget_bound_bits = 8\n\n[adversary]"),
    );
    let out = bcube(&["simulate", "--config", &cfg, "--out-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    // outputs are still written so the violation can be inspected
    assert!(dir.path().join("out/tight-seed3.summary.json").is_file());
}

#[test]
fn analyze_reproduces_the_reference_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let out = bcube(&["analyze", "--out-dir", "rep"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);

    assert_eq!(report["min_committee"], 79);
    assert_eq!(report["safety"]["meets_target"], true);
    assert!(report["safety"]["bound"].as_f64().unwrap() >= 1.0 - 0.5f64.powi(30));
    assert_eq!(report["send_bound"]["exact_bits"].as_u64().unwrap(), 1_031_040);
    let t = report["throughput"]["throughput"].as_f64().unwrap();
    assert!((t - 187_764.016).abs() < 0.01, "throughput = {t}");

    let baselines = report["baselines"].as_array().unwrap();
    let ds = baselines.iter().find(|b| b["protocol"] == "dolev-strong").unwrap();
    assert!(ds["ttb"].as_f64().unwrap() < 3.6e-6);
    assert!(report["overlaybb_ttb"].as_f64().unwrap() > ds["ttb"].as_f64().unwrap() * 1000.0);

    let on_disk: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("rep/analyze.summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(on_disk["min_committee"], report["min_committee"]);
}

#[test]
fn params_recommends_the_reference_committee_and_flags_infeasible_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bcube(
        &["params", "--f", "0.7", "--tau", "91", "--lambda", "1000", "--epsilon-exp", "30"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    let m = report["m"].as_u64().unwrap();
    assert!((79..=80).contains(&m), "m = {m}");
    assert_eq!(report["s"].as_u64().unwrap(), 2 * 6 * m);
    assert!(report["slot_period_rounds"].as_u64().unwrap() >= 1);
    assert!(report["safety_bound"].as_f64().unwrap() >= 1.0 - 0.5f64.powi(30));
    // pinned fragment count is respected
    let pinned = bcube(
        &["params", "--f", "0.7", "--tau", "91", "--lambda", "1000", "--s", "800"],
        dir.path(),
    );
    assert_eq!(stdout_json(&pinned)["s"].as_u64().unwrap(), 800);

    // tau far too small for f = 0.7: no committee size can reach the target
    let out = bcube(&["params", "--f", "0.7", "--tau", "3", "--lambda", "1000"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tau"), "{err}");

    // degenerate target accepts a single coin
    let out = bcube(
        &["params", "--f", "0.0001", "--tau", "10", "--lambda", "1000", "--epsilon-exp", "0"],
        dir.path(),
    );
    assert_eq!(stdout_json(&out)["m"], 1);
}

#[test]
fn sweep_checks_every_seed_and_streams_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "inv.toml", DESK_INVOCATION);
    let out = bcube(
        &["sweep", "--config", &cfg, "--seeds", "5", "--strategy", "equivocator", "--out-dir", "sw"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<serde_json::Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[..5].iter().all(|l| l["kind"] == "sweep-run"));
    let tail = &lines[5];
    assert_eq!(tail["kind"], "sweep-summary");
    assert_eq!(tail["seeds"], 5);
    assert_eq!(tail["violations"], 0);
    // seeds are consecutive from the config's master seed
    assert_eq!(lines[0]["seed"], 3);
    assert_eq!(lines[4]["seed"], 7);

    let file = std::fs::read_to_string(dir.path().join("sw/inv.sweep.ldjson")).unwrap();
    assert_eq!(file, String::from_utf8_lossy(&out.stdout));
}
