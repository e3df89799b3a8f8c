use std::fs;
use std::process::Command;

use cgsim::sim::CSV_COLUMNS;

const SCENARIO: &str = r#"{
    "schema_version": 1,
    "profile": "nr_r16",
    "ues": [{
        "ue_id": 0,
        "configured_grants": [{"cg_id": 0, "period_slots": 4, "sliv": {"start_symbol": 0, "length": 14},
                               "repetitions": 2, "rv_pattern": "0303",
                               "harq_processes": 2, "cg_timer": 4}],
        "traffic": {"kind": "uniform_in_period", "n_slots": 4, "payload_bits": 64}
    }],
    "duration_slots": 400,
    "replications": 2,
    "trace": true
}"#;

fn cgsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cgsim"))
}

#[test]
fn simulate_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    fs::write(&scenario, SCENARIO).unwrap();
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = cgsim().args(["simulate", "--seed", "9", "--scenario"]).arg(&scenario).arg("--out").arg(&out).status().unwrap();
        assert!(status.success());
        for f in ["metrics.csv", "cdf.csv", "summary.json", "trace.json"] {
            assert!(out.join(f).is_file(), "{f} missing");
        }
        csvs.push(fs::read_to_string(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0].lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(csvs[0].lines().count(), 1 + 2 + 1);
}

#[test]
fn invalid_scenario_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.json");
    fs::write(&scenario, SCENARIO.replace("\"repetitions\": 2", "\"repetitions\": 0")).unwrap();
    let out = cgsim().args(["simulate", "--scenario"]).arg(&scenario).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn oracle_prints_one_row() {
    let out = cgsim().args(["oracle", "occasions_legacy", "--arg", "k=4", "--arg", "a=2", "--arg", "b=2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["formula,inputs,value", "occasions_legacy,a=2;b=2;k=4,2"]);
    let unknown = cgsim().args(["oracle", "nope"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn conformance_passes() {
    let out = cgsim().arg("conformance").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 14 + 3);
}
