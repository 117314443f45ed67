use std::path::Path;
use std::process::{Command, Output};

fn bhp_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bhp-lab"))
        .args(args)
        .env_remove("BHP_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn list_shows_registry() {
    let o = bhp_lab(&["list"]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    for name in ["bhp-uniform", "masson", "counterexample-d3", "lemma-grid", "qhbc-suite"] {
        assert!(s.contains(name), "missing {name}");
    }
    assert!(s.contains("hole-counterexample-scaling"));
}

#[test]
fn lemma_grid_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let o = bhp_lab(&["run", "lemma-grid", "--seed", "1", "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(dir.join("lemma-grid.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files.swap_remove(0)).unwrap();
    // Header plus two rows for each of d = 2..=10.
    assert_eq!(text.lines().count(), 19);
}

#[test]
fn beta_above_alpha_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"scenario": "cone-exit", "beta": 0.3}"#);
    let o = bhp_lab(&["validate", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha_d"));

    let ok = write(
        tmp.path(),
        "ok.json",
        r#"{"scenario": "cone-exit", "beta": 0.3, "allow_beta_above_alpha": true}"#,
    );
    assert_eq!(code(&bhp_lab(&["validate", "--config", &ok])), 0);
}

#[test]
fn every_config_error_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"scenario": "masson", "paths": 0, "colour": "blue"}"#,
    );
    let o = bhp_lab(&["validate", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("colour") && err.contains("paths"), "{err}");
}

#[test]
fn syntax_error_names_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", "{\n  \"scenario\": \"masson\",\n  \"seed\": ,\n}");
    let o = bhp_lab(&["validate", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn empty_batch_gives_header_only_report() {
    let tmp = tempfile::tempdir().unwrap();
    let batch = write(tmp.path(), "b.json", r#"{"scenarios": []}"#);
    let out = tmp.path().join("out");
    let o = bhp_lab(&["run", &batch, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out.join("batch.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("scenario,claim,"));
}

#[test]
fn batch_writes_json_per_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let batch = write(
        tmp.path(),
        "b.json",
        r#"{"scenarios": [
            {"scenario": "lemma-grid", "dimensions": [2, 3], "lemma24_grid": 1000, "lemma25_grid": 50},
            {"scenario": "lemma-grid", "dimensions": [4], "lemma24_grid": 1000, "lemma25_grid": 50}
        ]}"#,
    );
    let out = tmp.path().join("out");
    let o = bhp_lab(&["run", &batch, "--format", "json", "--parallel", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let all: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("batch.json")).unwrap()).unwrap();
    assert_eq!(all.as_array().unwrap().len(), 6);
    assert!(out.join("000-lemma-grid.json").is_file());
    assert!(out.join("001-lemma-grid.json").is_file());
}

#[test]
fn check_lemmas_emits_csv() {
    let o = bhp_lab(&["check-lemmas", "--dmax", "4", "--grid24", "2000", "--grid25", "60"]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("lemma,d,grid_size,worst_gap,pass"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&bhp_lab(&["frobnicate"])), 2);
    assert_eq!(code(&bhp_lab(&["run", "lemma-grid", "--format", "xml"])), 2);
    assert_eq!(code(&bhp_lab(&["run", "no-such-scenario"])), 2);
    assert_eq!(code(&bhp_lab(&["check-lemmas", "--dmax", "1"])), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_bhp-lab"))
        .args(["list"])
        .env("BHP_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn config_naming_another_scenario_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"scenario": "masson"}"#);
    let o = bhp_lab(&["run", "lemma-grid", "--config", &cfg]);
    assert_eq!(code(&o), 2);
}
