use std::path::Path;
use std::process::{Command, Output};

use chanmix_cli::record::{Outputs, ResourcesOutput};
use chanmix_cli::{ExperimentConfig, ResultRecord};

fn chanmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chanmix")).args(args).output().expect("binary runs")
}

fn read_record(path: &Path) -> ResultRecord {
    ResultRecord::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_clock(mut r: ResultRecord) -> ResultRecord {
    r.started_unix_ms = 0;
    r.wall_clock_seconds = 0.0;
    r
}

#[test]
fn lindblad_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    let out = chanmix(&[
        "lindblad",
        "--steps",
        "40",
        "--dt",
        "0.1",
        "--output",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record = read_record(&json);
    let Outputs::Lindblad(l) = &record.outputs else { panic!("wrong kind") };
    assert_eq!(l.steps, 40);
    assert!(l.final_trace_distance > 0.0 && l.final_trace_distance <= l.max_trace_distance);
    assert!(l.max_trace_distance <= 1.0);

    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,z,x,excited_population,trace_distance"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 41);
    assert_eq!(rows[0], vec![0.0, -1.0, 0.0, 1.0, 0.0]);
}

#[test]
fn record_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let out = chanmix(&["pec", "--layers", "2", "--samples", "300", "--seed", "5", "--output", json.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&json).unwrap();
    let record = ResultRecord::from_json(&text).unwrap();
    assert_eq!(record.seed, 5);
    assert_eq!(record.to_json().unwrap(), text);
    assert_eq!(ResultRecord::from_json(&record.to_json().unwrap()).unwrap(), record);
}

#[test]
fn same_seed_same_record() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = ["a.json", "b.json"].iter().map(|n| dir.path().join(n)).collect();
    for p in &paths {
        let out = chanmix(&["pec", "--layers", "3", "--samples", "500", "--seed", "11", "--output", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let mut a = without_clock(read_record(&paths[0]));
    let mut b = without_clock(read_record(&paths[1]));
    // the echoed output path is the only intended difference
    a.config.output = None;
    b.config.output = None;
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn pec_sweep_reports_residual_negativity() {
    let out = chanmix(&["pec", "--layers", "3", "--samples", "200"]);
    assert!(out.status.success());
    let record = ResultRecord::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let Outputs::Pec(p) = record.outputs else { panic!("wrong kind") };
    let gamma = p.layer_gammas[0];
    assert_eq!(p.runs.len(), 4);
    for run in &p.runs {
        let expected = gamma.powi(3 - run.k as i32);
        assert!((run.residual_negativity - expected).abs() <= 1e-12 * expected, "k={}", run.k);
    }
    let last = p.runs.last().unwrap();
    assert_eq!(last.circuit_evaluations, 2);
    assert!((last.estimate - p.ideal_value).abs() < 1e-8);
}

#[test]
fn resources_qubit_columns() {
    let out = chanmix(&["resources", "--steps", "100"]);
    assert!(out.status.success());
    let record = ResultRecord::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let Outputs::Resources(ResourcesOutput::Rabi { ccc, forking_shared, forking_unshared, .. }) = record.outputs else {
        panic!("wrong kind")
    };
    assert_eq!(ccc.per_step.qubits, 4);
    assert!(forking_shared.per_step.qubits >= 7);
    assert_eq!(forking_unshared.per_step.qubits, 8);
    assert_eq!(ccc.total_two_qubit_gates, 100 * ccc.per_step.two_qubit_gates);
}

#[test]
fn config_file_round_trip_through_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let json = dir.path().join("r.json");
    std::fs::write(&cfg_path, r#"{"experiment":{"ccc":{"emit_circuit":true}},"seed":3}"#).unwrap();
    let out = chanmix(&["ccc", "--config", cfg_path.to_str().unwrap(), "--output", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record = read_record(&json);
    let Outputs::Ccc(c) = &record.outputs else { panic!("wrong kind") };
    assert!(c.trace_distance_to_mixture < 1e-10);
    assert_eq!(c.non_unitary_items, 0);
    assert!(c.circuit.is_some());

    let echoed = record.config.to_json().unwrap();
    let reparsed = ExperimentConfig::from_json(&echoed).unwrap();
    assert_eq!(reparsed, record.config);
}

#[test]
fn failures_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let out = chanmix(&["pec", "--p", "1.5", "--output", json.to_str().unwrap()]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("`p`"));
    assert!(!json.exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"experiment":{"lindblad":{"stepz":3}}}"#).unwrap();
    let out = chanmix(&["lindblad", "--config", bad.to_str().unwrap(), "--output", json.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!json.exists());

    let missing_dir = dir.path().join("nope").join("r.csv");
    let out = chanmix(&["lindblad", "--steps", "3", "--output", json.to_str().unwrap(), "--csv", missing_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!json.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
