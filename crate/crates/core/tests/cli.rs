use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn evstud(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evstud"))
        .args(args)
        .env_remove("EVSTUD_THREADS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = evstud(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn diagnostic(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.lines().last().unwrap()).unwrap()
}

fn write_fixture(dir: &Path) -> String {
    let fx = dir.join("fx");
    ok(&["simulate", "--write-fixture", "--output-dir", fx.to_str().unwrap()]);
    fx.to_str().unwrap().to_string()
}

#[test]
fn missing_input_is_a_structured_error() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = write_fixture(tmp.path());
    std::fs::remove_file(Path::new(&fx).join("events.csv")).unwrap();
    let out = evstud(&["estimate", "--data-dir", &fx]);
    assert_eq!(out.status.code(), Some(2));
    let d = diagnostic(&out);
    assert!(d["code"].is_string());
    assert!(d["message"].as_str().unwrap().contains("events.csv"));
    assert!(d.get("context").is_some());
}

#[test]
fn bad_simulation_parameters_are_rejected() {
    let out = evstud(&["simulate", "--rho", "1.5", "--reps", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(diagnostic(&out)["code"], "config");

    let out = evstud(&["estimate", "--benchmark", "capm"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(diagnostic(&out)["code"], "usage");
}

#[test]
fn dump_rep_writes_a_loadable_panel() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("rep");
    let d = dir.to_str().unwrap();
    ok(&["simulate", "--n-firms", "6", "--n-days", "300", "--n-events", "12", "--dump-rep", "0", "--output-dir", d]);
    for f in ["returns.csv", "factors.csv", "events.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let o = tmp.path().join("o");
    ok(&["estimate", "--data-dir", d, "--cap-floor-usd", "0", "--output-dir", o.to_str().unwrap()]);
}

#[test]
fn simulate_writes_size_power_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    ok(&["simulate", "--n-firms", "8", "--n-days", "300", "--n-events", "16", "--reps", "8", "--sur", "--output-dir", d]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("size_power.json")).unwrap()).unwrap();
    assert_eq!(report["ols"]["n_reps"], 8);
    assert!(report["sur"].is_object());
    let tsv = std::fs::read_to_string(tmp.path().join("size_power.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 9);
}

#[test]
fn fixture_commands_produce_the_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = write_fixture(tmp.path());
    let o = tmp.path().join("o");
    let od = o.to_str().unwrap();

    ok(&["ingest-check", "--data-dir", &fx]);

    ok(&["estimate", "--data-dir", &fx, "--estimator", "sur", "--output-dir", od]);
    let t1 = std::fs::read_to_string(o.join("table1.tsv")).unwrap();
    let row: Vec<&str> = t1.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(&row[..2], ["SUR", "FF3"]);
    assert_eq!(row[6], "126");
    assert_eq!(row[7], "2219");

    ok(&["estimate", "--data-dir", &fx, "--benchmark", "zero", "--output-dir", od]);
    let t1 = std::fs::read_to_string(o.join("table1.tsv")).unwrap();
    assert!(t1.lines().nth(1).unwrap().starts_with("OLS\tZero\t"));
    assert!(t1.contains("\t167\t"));

    ok(&["determinants", "--table", "characteristics", "--data-dir", &fx, "--output-dir", od]);
    let t4 = std::fs::read_to_string(o.join("table4.tsv")).unwrap();
    assert!(t4.contains("Observations\t150\t"));
    assert!(t4.contains("Dropped (missing data)\t17\t"));

    ok(&["determinants", "--table", "type-sector", "--model", "2", "--data-dir", &fx, "--output-dir", od]);
    let t3 = std::fs::read_to_string(o.join("table3.tsv")).unwrap();
    assert!(t3.contains("Data breach * Healthcare"));

    ok(&["determinants", "--table", "years", "--data-dir", &fx, "--output-dir", od]);
    let t2 = std::fs::read_to_string(o.join("table2.tsv")).unwrap();
    assert!(t2.lines().any(|l| l.starts_with("2013\t")));

    ok(&["curves", "--data-dir", &fx, "--output-dir", od]);
    let curve = std::fs::read_to_string(o.join("aar_curve.tsv")).unwrap();
    assert_eq!(curve.lines().count(), 12);
}
