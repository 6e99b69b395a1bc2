use std::path::Path;
use std::process::{Command, Output};

use deanon::io::{read_indices, read_matrix};
use serde_json::Value;

fn deanon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deanon"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = deanon(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn help_lists_subcommands_and_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in [
        "gen",
        "detect-replicas",
        "detect-deletions",
        "estimate",
        "match",
        "match-noiseless",
        "capacity",
        "experiment",
    ] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert!(text.contains("Exit codes"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        deanon(tmp.path(), &["gen", "--m", "many"]).status.code(),
        Some(2)
    );
    assert_eq!(deanon(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    let missing = deanon(tmp.path(), &["detect-replicas", "--y", "nope.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));
    let invalid = deanon(tmp.path(), &["gen", "--delta", "0.9"]);
    assert_eq!(invalid.status.code(), Some(2));
    let custom = deanon(tmp.path(), &["experiment", "custom"]);
    assert_eq!(custom.status.code(), Some(2));
}

#[test]
fn detection_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen", "--m", "100", "--n", "40", "--seeds", "20"]);
    let out = deanon(
        d,
        &[
            "detect-deletions",
            "--g1",
            "g1.csv",
            "--g2",
            "g2.csv",
            "--alphabet",
            "5",
            "--mode",
            "asymptotic",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_writes_consistent_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "--seed", "4", "gen", "--m", "50", "--n", "20", "--seeds", "10",
        ],
    );
    let x = read_matrix(&d.join("x.csv")).unwrap();
    let y = read_matrix(&d.join("y.csv")).unwrap();
    let g1 = read_matrix(&d.join("g1.csv")).unwrap();
    let g2 = read_matrix(&d.join("g2.csv")).unwrap();
    let pattern = read_indices(&d.join("pattern.csv")).unwrap();
    let mut sigma = read_indices(&d.join("sigma.csv")).unwrap();
    assert_eq!((x.rows(), x.cols()), (50, 20));
    assert_eq!(pattern.len(), 20);
    assert_eq!(y.cols(), pattern.iter().sum::<usize>());
    assert_eq!((g1.rows(), g2.rows(), g2.cols()), (10, 10, y.cols()));
    sigma.sort_unstable();
    assert_eq!(sigma, (1..=50).collect::<Vec<_>>());
    assert_eq!(json(&d.join("model.json"))["m"], 50);
}

#[test]
fn pipeline_stages_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "--seed",
            "3",
            "--out-dir",
            "g",
            "gen",
            "--m",
            "300",
            "--n",
            "60",
            "--seeds",
            "150",
            "--epsilon",
            "0.1",
        ],
    );
    ok(d, &["--out-dir", "r", "detect-replicas", "--y", "g/y.csv"]);
    let replicas = json(&d.join("r/replicas.json"));
    let flags: Vec<bool> = serde_json::from_value(replicas["flags"].clone()).unwrap();
    let pattern = read_indices(&d.join("g/pattern.csv")).unwrap();
    assert_eq!(flags.len() + 1, pattern.iter().sum::<usize>());

    ok(
        d,
        &[
            "--out-dir",
            "dd",
            "detect-deletions",
            "--g1",
            "g/g1.csv",
            "--g2",
            "g/g2.csv",
            "--alphabet",
            "5",
            "--replicas",
            "r/replicas.json",
        ],
    );
    let retained: Vec<usize> =
        serde_json::from_value(json(&d.join("dd/deletions.json"))["retained"].clone()).unwrap();
    let truth: Vec<usize> = (0..pattern.len()).filter(|&j| pattern[j] > 0).collect();
    assert_eq!(retained, truth);

    ok(
        d,
        &[
            "--out-dir",
            "e",
            "estimate",
            "--g1",
            "g/g1.csv",
            "--g2",
            "g/g2.csv",
            "--pattern",
            "g/pattern.csv",
            "--alphabet",
            "5",
        ],
    );
    assert!(d.join("e/estimate.json").exists());

    ok(
        d,
        &[
            "--out-dir",
            "m",
            "match",
            "--x",
            "g/x.csv",
            "--y",
            "g/y.csv",
            "--g1",
            "g/g1.csv",
            "--g2",
            "g/g2.csv",
            "--alphabet",
            "5",
            "--sigma",
            "g/sigma.csv",
        ],
    );
    let report = json(&d.join("m/match.json"));
    assert_eq!(report["error_fraction"], 0.0);
    assert_eq!(
        read_indices(&d.join("m/sigma_hat.csv")).unwrap(),
        read_indices(&d.join("g/sigma.csv")).unwrap()
    );
}

#[test]
fn noiseless_matching_recovers_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen", "--m", "200", "--n", "80", "--epsilon", "0"]);
    ok(
        d,
        &[
            "match-noiseless",
            "--x",
            "x.csv",
            "--y",
            "y.csv",
            "--alphabet",
            "5",
            "--sigma",
            "sigma.csv",
        ],
    );
    let report = json(&d.join("match_noiseless.json"));
    assert_eq!(report["error_fraction"], 0.0);
    assert_eq!(report["matched"], 200);
}

#[test]
fn capacity_prints_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(
        tmp.path(),
        &[
            "capacity",
            "--epsilon",
            "0",
            "--delta",
            "0.5",
            "--gamma",
            "0.1",
        ],
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = v["capacity"]["capacity"].as_f64().unwrap();
    assert!((c - 0.5 * 5f64.log2()).abs() < 1e-9);
}

#[test]
fn custom_plan_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = ok(d, &["experiment", "fig7", "--trials", "30", "--plan"]);
    let mut plan: Value = serde_json::from_slice(&out.stdout).unwrap();
    plan["figure"] = "mine".into();
    plan["grid"] = Value::Array(plan["grid"].as_array().unwrap()[..3].to_vec());
    std::fs::write(d.join("plan.json"), plan.to_string()).unwrap();
    ok(
        d,
        &[
            "--seed",
            "9",
            "--config",
            "plan.json",
            "experiment",
            "custom",
            "--svg",
        ],
    );
    let csv = std::fs::read_to_string(d.join("mine.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("alphabet,m,n,trials,errors,rate"));
    assert_eq!(json(&d.join("mine.json"))["seed"], 9);
    assert!(std::fs::read_to_string(d.join("mine.svg"))
        .unwrap()
        .starts_with("<svg"));
}
