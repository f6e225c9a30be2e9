use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_datamarket"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

fn reemit(text: &str) -> String {
    let value: serde_json::Value = serde_json::from_str(text).unwrap();
    serde_json::to_string_pretty(&value).unwrap() + "\n"
}

#[test]
fn gen_then_solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let market = dir.path().join("m.json");
    let m = market.to_str().unwrap();
    ok(&["gen", "--family", "mean", "--seed", "7", "--output", m]);
    let first = ok(&["solve", "--market", m]);
    let second = ok(&["solve", "--market", m]);
    assert_eq!(first, second);
    assert_eq!(
        std::fs::read_to_string(&market).unwrap(),
        std::fs::read_to_string(fixtures().join("mean_seed7.json")).unwrap()
    );
}

#[test]
fn vcg_on_top2_fixture() {
    let out = ok(&[
        "pay",
        "--market",
        &fixture("top2_pairs.json"),
        "--rule",
        "vcg",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let paid: Vec<f64> = v["seller_payments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    for (got, want) in paid.iter().zip([0.3, 0.2, 0.0]) {
        assert!((got - want).abs() < 1e-9, "{paid:?}");
    }
}

#[test]
fn direct_sweep_columns_and_signs() {
    let out = ok(&[
        "sweep",
        "--market",
        &fixture("mean_seed7.json"),
        "--rule",
        "direct",
        "--seller",
        "0",
    ]);
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "reported_cost,payment,utility,social_cost,sharing,other_sharing"
    );
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("mean_seed7.json")).unwrap())
            .unwrap();
    let truth = cfg["true_costs"][0].as_f64().unwrap();
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 101);
    let at = rows.iter().find(|r| r[0] == truth).expect("truth on grid");
    assert!(at[2].abs() < 1e-12);
    assert!(rows.iter().filter(|r| r[0] > truth).all(|r| r[2] > 0.0));
}

#[test]
fn json_outputs_round_trip_byte_for_byte() {
    let top2 = fixture("top2_pairs.json");
    let mean = fixture("mean_seed7.json");
    let outputs = [
        ok(&[
            "gen",
            "--family",
            "retrieval",
            "--seed",
            "3",
            "--budget",
            "2",
        ]),
        ok(&["gen", "--family", "data-mixture", "--seed", "3"]),
        ok(&["solve", "--market", &mean]),
        ok(&[
            "pay",
            "--market",
            &mean,
            "--rule",
            "myerson",
            "--redistribute",
        ]),
        ok(&["pay", "--market", &top2, "--rule", "shapley"]),
        ok(&[
            "sweep", "--market", &top2, "--rule", "loo", "--seller", "1", "--format", "json",
        ]),
        ok(&["audit", "--market", &top2, "--points", "20"]),
    ];
    for out in outputs {
        assert_eq!(reemit(&out), out);
    }
}

#[test]
fn csv_outputs_have_headers() {
    let mean = fixture("mean_seed7.json");
    for args in [
        vec!["solve", "--market", mean.as_str(), "--format", "csv"],
        vec![
            "pay",
            "--market",
            mean.as_str(),
            "--rule",
            "loo",
            "--format",
            "csv",
        ],
        vec![
            "audit",
            "--market",
            mean.as_str(),
            "--rule",
            "vcg",
            "--points",
            "10",
            "--format",
            "csv",
        ],
    ] {
        let out = ok(&args);
        let header = out.lines().next().unwrap();
        assert!(
            header.starts_with("role,index") || header.starts_with("rule,seller"),
            "{header}"
        );
    }
}

#[test]
fn audit_flags_collapse_in_high_cost_regime() {
    let out = ok(&[
        "audit",
        "--market",
        &fixture("ten_docs_high_cost.json"),
        "--rule",
        "loo",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["poa_convention"].as_str().unwrap().contains("SC"));
    let verdict = &v["verdicts"][0];
    assert_eq!(verdict["truthful"][0], false);
    assert!(verdict["served_at_best_response"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s == false));
}

#[test]
fn invalid_market_reports_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"family": "data_mixture", "loss_floor": 1, "loss_scale": -1, "effect_vector": [], "true_costs": [1]}"#,
    )
    .unwrap();
    let out = run(&["solve", "--market", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "validation");
    assert!(err["violations"].as_array().unwrap().len() >= 2);
}

#[test]
fn missing_file_is_an_io_error() {
    let out = run(&["solve", "--market", "/nonexistent/market.json"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "io");
}

#[test]
fn discrete_myerson_without_redistribution_on_single_buyer() {
    let out = ok(&[
        "pay",
        "--market",
        &fixture("top1_low_cost.json"),
        "--rule",
        "myerson",
        "--redistribute",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["budget_gap"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn help_lists_flags() {
    let out = ok(&["sweep", "--help"]);
    for flag in [
        "--market",
        "--rule",
        "--seller",
        "--low",
        "--high",
        "--points",
        "--spacing",
        "--output",
        "--format",
        "--seed",
    ] {
        assert!(out.contains(flag), "missing {flag}");
    }
}
