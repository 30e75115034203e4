use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn restless(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restless"))
        .args(args)
        .env_remove("RB_JOBS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("restless-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn error_code(out: &Output) -> (i32, Value) {
    let report: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    (out.status.code().unwrap(), report)
}

#[test]
fn gen_relax_classify_round_trip() {
    let model = scratch("two.json");
    stdout(&restless(&["gen", "two", "-o", model.to_str().unwrap()]));
    let measure = scratch("two-measure.json");
    let relax = restless(&[
        "relax",
        "--model",
        model.to_str().unwrap(),
        "-o",
        measure.to_str().unwrap(),
    ]);
    stdout(&relax);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&measure).unwrap()).unwrap();
    assert!((doc["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(doc["solver"], "simplex");
    let classified = json(&restless(&[
        "classify",
        "--model",
        model.to_str().unwrap(),
        "--measure",
        measure.to_str().unwrap(),
    ]));
    assert_eq!(classified["nondegenerate"], false);
    assert_eq!(classified["neutral_counts"], serde_json::json!([1, 0]));
    assert_eq!(classified["periods"][1]["active"], serde_json::json!(["G"]));
}

#[test]
fn oracle_on_two() {
    let doc = json(&restless(&[
        "oracle", "--model", "two", "--N", "2", "--policy", "fluid",
    ]));
    assert_eq!(doc["V_star"].as_f64(), Some(2.0));
    assert_eq!(doc["upper_bound"].as_f64(), Some(2.0));
    assert_eq!(doc["policy_value"].as_f64(), Some(2.0));
}

#[test]
fn search_measure_certifies_two() {
    let doc = json(&restless(&["search-measure", "--model", "two"]));
    assert_eq!(doc["nondegenerate"], false);
    assert_eq!(doc["certificate"], serde_json::json!([1]));
}

#[test]
fn priority_methods_agree_on_single() {
    let duals = json(&restless(&["priority", "--model", "single"]));
    let sub = json(&restless(&[
        "priority",
        "--model",
        "single",
        "--method",
        "subgradient",
        "--iterations",
        "500",
    ]));
    let g = sub["dual_objective"].as_f64().unwrap();
    assert!((g - 1.0).abs() < 1e-3, "{g}");
    assert!((duals["dual_objective"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn sweep_csv_is_reproducible_across_thread_counts() {
    let base = [
        "sweep",
        "--model",
        "bernoulli:T=4",
        "--policy",
        "fluid,ucb",
        "--N",
        "30,60",
        "--seed",
        "9",
        "--reps",
        "500",
    ];
    let one = stdout(&restless(&[&base[..], &["--jobs", "1"]].concat()));
    let three = stdout(&restless(&[&base[..], &["--jobs", "3"]].concat()));
    assert_eq!(one, three);
    let mut lines = one.lines();
    assert_eq!(
        lines.next(),
        Some("N,policy,upper_bound,mean,ci95,gap,violation_rate_max")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let (ub, mean, gap): (f64, f64, f64) = (
            row[2].parse().unwrap(),
            row[3].parse().unwrap(),
            row[5].parse().unwrap(),
        );
        assert!(
            (ub - mean - gap).abs() <= 1e-9 * ub.abs().max(1.0),
            "{row:?}"
        );
        assert!(
            row[3]
                .trim_start_matches('-')
                .replace('.', "")
                .trim_start_matches('0')
                .len()
                <= 12
        );
    }
}

#[test]
fn eval_writes_json_sidecar() {
    let sidecar = scratch("eval.json");
    let csv = stdout(&restless(&[
        "eval",
        "--model",
        "single",
        "--policy",
        "fluid",
        "--N",
        "10",
        "--seed",
        "1",
        "--reps",
        "100",
        "--json",
        sidecar.to_str().unwrap(),
    ]));
    assert_eq!(csv.lines().nth(1), Some("10,fluid,10,10,0,0,0"));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert!(doc["rows"][0]["report"]["wall_time"].as_f64().is_some());
}

#[test]
fn violations_on_single_are_zero() {
    let csv = stdout(&restless(&[
        "violations",
        "--model",
        "single",
        "--policy",
        "fluid",
        "--N",
        "5,10",
        "--seed",
        "2",
        "--reps",
        "50",
    ]));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0")), "{csv}");
}

#[test]
fn fluid_index_reports_shortfall() {
    let doc = json(&restless(&[
        "fluid-index",
        "--model",
        "bernoulli:T=8",
        "--policy",
        "ucb:0.5",
    ]));
    assert!(doc["shortfall"].as_f64().unwrap() > 1e-3);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let cfg = scratch("run.toml");
    std::fs::write(
        &cfg,
        "model = \"single\"\npolicy = \"fluid\"\nN = [4]\nseed = 3\nreps = 10\n",
    )
    .unwrap();
    let from_cfg = stdout(&restless(&["--config", cfg.to_str().unwrap(), "eval"]));
    assert_eq!(from_cfg.lines().nth(1), Some("4,fluid,4,4,0,0,0"));
    let flagged = stdout(&restless(&[
        "--config",
        cfg.to_str().unwrap(),
        "eval",
        "--N",
        "6",
    ]));
    assert_eq!(flagged.lines().nth(1), Some("6,fluid,6,6,0,0,0"));
}

#[test]
fn errors_have_distinct_exit_codes() {
    assert_eq!(restless(&["frobnicate"]).status.code(), Some(2));

    let (code, report) = error_code(&restless(&[
        "eval", "--model", "two", "--policy", "fluid", "--N", "3",
    ]));
    assert_eq!((code, report["error"].as_str()), (3, Some("ConfigError")));

    let (code, _) = error_code(&restless(&["relax", "--model", "/nonexistent/model.json"]));
    assert_eq!(code, 4);

    let bad = scratch("bad.json");
    std::fs::write(&bad, "{\"horizon\": 2").unwrap();
    assert_eq!(
        error_code(&restless(&["relax", "--model", bad.to_str().unwrap()])).0,
        5
    );

    let model = scratch("rowsum.json");
    stdout(&restless(&["gen", "two", "-o", model.to_str().unwrap()]));
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    doc["kernel"][0][0][1] = serde_json::json!([0.9, 0.0]);
    std::fs::write(&model, doc.to_string()).unwrap();
    let (code, report) = error_code(&restless(&["relax", "--model", model.to_str().unwrap()]));
    assert_eq!((code, report["error"].as_str()), (6, Some("RowSumError")));

    let (code, _) = error_code(&restless(&[
        "eval",
        "--model",
        "crowd:T=3",
        "--policy",
        "ts",
        "--N",
        "4",
        "--seed",
        "1",
    ]));
    assert_eq!(code, 8);

    let (code, _) = error_code(&restless(&[
        "oracle",
        "--model",
        "bernoulli:T=6",
        "--N",
        "40",
        "--limit",
        "1000",
    ]));
    assert_eq!(code, 10);
}
