use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const PATH5: &str = r#"{"points":[{"id":0},{"id":1},{"id":2},{"id":3},{"id":4}],
"edges":[{"u":0,"v":1,"c":1.0},{"u":1,"v":2,"c":1.0},{"u":2,"v":3,"c":1.0},{"u":3,"v":4,"c":1.0}],
"measure":[{"id":0,"m":1.0},{"id":1,"m":1.0},{"id":2,"m":1.0},{"id":3,"m":1.0},{"id":4,"m":1.0}],
"metric":"graph"}"#;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("ehi-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn ehi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehi")).current_dir(dir).args(args).output().unwrap()
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn cap_on_the_path_prints_one() {
    let d = scratch("cap");
    std::fs::write(d.join("path.json"), PATH5).unwrap();
    let out = ehi(&d, &["cap", "--space", "path.json", "--domain", "1,2,3", "--target", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.0");
    let r = report(&d, "ehi-report.json");
    assert_eq!(r["results"]["capacity"].as_f64(), Some(1.0));
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert!(r["config"]["cmd"]["cap"].is_object());
    assert!(r["timings"].as_array().is_some_and(|t| !t.is_empty()));
}

#[test]
fn missing_input_is_exit_two_with_code() {
    let d = scratch("missing");
    let out = ehi(&d, &["green", "--space", "nowhere.json", "--domain", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "input-not-found");
    assert_eq!(report(&d, "ehi-report.json")["error"]["code"], "input-not-found");
}

#[test]
fn malformed_space_is_an_input_error() {
    let d = scratch("malformed");
    std::fs::write(d.join("bad.json"), r#"{"points": [{"id": 0}], "edges": [], "measure": [], "metric": "graph""#)
        .unwrap();
    let out = ehi(&d, &["gen", "--space", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "input-parse");
}

#[test]
fn unknown_point_and_table() {
    let d = scratch("unknown");
    std::fs::write(d.join("path.json"), PATH5).unwrap();
    let out = ehi(&d, &["cap", "--space", "path.json", "--domain", "1,9", "--target", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ehi(&d, &["cap", "--space", "path.json", "--domain", "1", "--target", "1", "--emit", "csv:psi"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn green_table_is_written() {
    let d = scratch("green");
    std::fs::write(d.join("path.json"), PATH5).unwrap();
    let out =
        ehi(&d, &["green", "--space", "path.json", "--domain", "1,2,3", "--emit", "csv:green", "--report", "g.json"]);
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(d.join("g.green.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("x,y,g"));
    assert_eq!(lines.count(), 9);
    let g = report(&d, "g.json")["results"]["green"].clone();
    let expect = [[0.75, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.75]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((g[i][j].as_f64().unwrap() - expect[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn generated_space_round_trips() {
    let d = scratch("gen");
    assert!(ehi(&d, &["gen", "--space", "gasket", "--level", "3", "-o", "a.json"]).status.success());
    assert!(ehi(&d, &["gen", "--space", "a.json", "-o", "b.json"]).status.success());
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
}

#[test]
fn pipeline_on_gasket_passes() {
    let d = scratch("pipeline");
    let out = ehi(&d, &["pipeline", "--space", "gasket", "--level", "4", "--A", "8", "--delta", "0.5", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&d, "ehi-report.json");
    assert_eq!(r["pass"], true);
    let names: Vec<&str> = r["assertions"].as_array().unwrap().iter().map(|a| a["name"].as_str().unwrap()).collect();
    for stage in ["ehi_finite", "cubes", "ledger", "capacity_good", "regular", "remetric", "cross", "greens", "caps"] {
        assert!(names.contains(&stage), "{stage} missing");
    }
    let stages: Vec<&str> = r["timings"].as_array().unwrap().iter().map(|t| t["stage"].as_str().unwrap()).collect();
    assert!(stages.starts_with(&["space", "ehi_scan", "cubes"]));
}

#[test]
fn reports_are_byte_identical_and_thread_independent() {
    let run = |name: &str, threads: &str| {
        let d = scratch(name);
        let args = ["pipeline", "--space", "gasket", "--level", "4", "--no-timings", "--threads", threads];
        assert!(ehi(&d, &args).status.success());
        std::fs::read_to_string(d.join("ehi-report.json")).unwrap()
    };
    let (a, b, c) = (run("det-a", "4"), run("det-b", "4"), run("det-c", "1"));
    assert_eq!(a, b);
    let (ra, rc): (Value, Value) = (serde_json::from_str(&a).unwrap(), serde_json::from_str(&c).unwrap());
    assert!(ra.get("timings").is_none());
    assert_eq!(ra["results"], rc["results"]);
}

#[test]
fn tampered_ledger_fails_the_audit() {
    let d = scratch("ledger");
    let out = ehi(&d, &["vk", "--space", "path", "--level", "300", "--ledger-out", "l.json"]);
    assert_eq!(out.status.code(), Some(0));
    let mut l: Value = serde_json::from_slice(&std::fs::read(d.join("l.json")).unwrap()).unwrap();
    assert!(ehi(&d, &["vk", "--space", "-", "--replay", "l.json"]).status.success());
    let m = &mut l["steps"][0]["final_masses"][0][1];
    *m = Value::from(m.as_f64().unwrap() * 1.5);
    std::fs::write(d.join("t.json"), l.to_string()).unwrap();
    let out = ehi(&d, &["vk", "--space", "-", "--replay", "t.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&d, "ehi-report.json")["pass"], false);
}

#[test]
fn stability_needs_a_seed() {
    let d = scratch("seed");
    let out = ehi(&d, &["stability", "--space", "gasket", "--level", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let out =
        ehi(&d, &["stability", "--space", "gasket", "--level", "2", "--lambda", "1", "--seed", "3", "--trials", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&d, "ehi-report.json")["results"]["stability"]["max_ratio"].as_f64(), Some(1.0));
}

#[test]
fn failed_stage_is_reported_not_thrown() {
    let d = scratch("failed-stage");
    let out = ehi(&d, &["pipeline", "--space", "vicsek", "--level", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&d, "ehi-report.json");
    assert_eq!(r["pass"], false);
    assert!(r["results"]["remetric"]["error"].is_string());
    assert!(r["results"]["greens"].is_object());
}

#[test]
fn joined_space_carries_its_gluing_note() {
    let d = scratch("note");
    let out = ehi(&d, &["gen", "--space", "joined_gsq", "--level", "2", "--aux", "5", "--output", "j.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(report(&d, "ehi-report.json")["results"]["note"].as_str().is_some_and(|n| n.contains("glued")));
    ehi(&d, &["gen", "--space", "path", "--level", "4"]);
    assert!(report(&d, "ehi-report.json")["results"].get("note").is_none());
}
