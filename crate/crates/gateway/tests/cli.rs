// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::process::Command;

use loopbench_core::events::read_log;
use loopbench_core::scenario::{s1, EVENTS_FILE, KPI_FILE, STORE_FILE};
use loopbench_core::store::IntentStore;
use serde_json::Value;

fn loopbench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_loopbench"))
}

#[test]
fn run_writes_log_kpis_and_store() {
    let out = tempfile::tempdir().unwrap();
    let status = loopbench()
        .args(["run", "--scenario", "s1", "--ticks", "150", "--out"])
        .arg(out.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let (records, torn) = read_log(&out.path().join(EVENTS_FILE)).unwrap();
    assert!(!torn && !records.is_empty());
    let store: IntentStore = serde_json::from_str(&fs::read_to_string(out.path().join(STORE_FILE)).unwrap()).unwrap();
    assert_eq!(store, IntentStore::replay(&records));
    let csv = fs::read_to_string(out.path().join(KPI_FILE)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("resource_id,kpi,tick,value"));
    let last = lines.last().unwrap();
    assert_eq!(last.split(',').nth(2), Some("149"));
}

#[test]
fn run_accepts_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = s1();
    doc.scenario_id = "from-file".into();
    let path = dir.path().join("scenario.json");
    fs::write(&path, doc.to_canonical()).unwrap();
    let out = dir.path().join("out");
    let status = loopbench()
        .args(["run", "--ticks", "5", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(out.join(EVENTS_FILE).exists());
}

#[test]
fn invalid_scenario_exits_2_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut v: Value = serde_json::from_str(&s1().to_canonical()).unwrap();
    v["faults"][0]["kind"] = "Meteor".into();
    fs::write(&path, v.to_string()).unwrap();
    let out = loopbench().args(["run", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/faults/0/kind"), "{err}");

    let out = loopbench().args(["run", "--scenario", "no-such-scenario"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_reports_each_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("intents.txt");
    fs::write(
        &path,
        "# comment\nguarantee latency below 20 ms for service checkout\n\nplease be fast\nblock traffic from segment a to segment b\n",
    )
    .unwrap();
    let out = loopbench().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let rows: Vec<Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let summary: Vec<(u64, bool)> = rows.iter().map(|r| (r["line"].as_u64().unwrap(), r["ok"] == true)).collect();
    assert_eq!(summary, [(2, true), (4, false), (5, true)]);
    assert_eq!(rows[0]["policy"]["kind"], "LatencyBound");
    assert!(!rows[1]["attempts"].as_array().unwrap().is_empty());

    fs::write(&path, "guarantee latency below 20 ms for service checkout\n").unwrap();
    assert!(loopbench().arg("validate").arg(&path).output().unwrap().status.success());
    let missing = loopbench().arg("validate").arg(dir.path().join("nope.txt")).output().unwrap().status;
    assert_eq!(missing.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = loopbench().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
