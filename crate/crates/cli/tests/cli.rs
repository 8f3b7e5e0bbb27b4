use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dai"))
        .args(args)
        .output()
        .expect("dai runs")
}

fn workspace_file(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/three_node.json")
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{text}"))
        .to_string()
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn kundur_certify_brackets_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let w = tmp(&dir, "w.json");
    let preset = workspace_file("presets/kundur.json");
    let args = |k: &'static str| {
        vec![
            "certify".to_string(),
            "--config".into(),
            preset.clone(),
            "--kappa".into(),
            k.into(),
            "--out".into(),
            w.to_string_lossy().into_owned(),
        ]
    };
    let run = |k| {
        let a = args(k);
        dai(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };

    let ok = run("1.5");
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let text = stdout(&ok);
    assert_eq!(field(&text, "feasible"), "true");
    assert_eq!(field(&text, "channels"), "4");
    assert!(text.contains("hull_midpoint_min_eig") && text.contains("(pass)"));
    let witness: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&w).unwrap()).unwrap();
    assert_eq!(witness["feasible"], true);
    assert_eq!(witness["channels"].as_array().unwrap().len(), 4);
    assert_eq!(witness["channels"][0]["s"].as_array().unwrap().len(), 3);

    let bad = run("2.0");
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(field(&stdout(&bad), "feasible"), "false");
}

#[test]
fn kundur_search_gain_lands_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let log = tmp(&dir, "search.json");
    let o = dai(&[
        "search-gain",
        "--config",
        &workspace_file("presets/kundur.json"),
        "--out",
        log.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let k: f64 = field(&stdout(&o), "kappa_feas").parse().unwrap();
    assert!((1.39..=1.70).contains(&k), "kappa_feas {k}");
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&log).unwrap()).unwrap();
    let infeas = log["kappa_infeas"].as_f64().unwrap();
    assert!(infeas > k && infeas - k <= 1e-3 + 1e-12);
    assert!(log["probes"].as_array().unwrap().len() >= 5);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = tmp(&dir, "a.csv");
    let b = tmp(&dir, "b.csv");
    for p in [&a, &b] {
        let o = dai(&[
            "simulate",
            "--config",
            &fixture(),
            "--seed",
            "7",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        assert_eq!(field(&stdout(&o), "verdict"), "converged");
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t,theta_1,theta_2,theta_3,omega_1"));
    assert_eq!(header.split(',').count(), 1 + 9 + 1 + 6);
}

#[test]
fn simulate_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let o = dai(&[
        "simulate",
        "--config",
        &fixture(),
        "--kappa",
        "200",
        "--out",
        tmp(&dir, "x.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert_ne!(field(&stdout(&o), "verdict"), "converged");
}

#[test]
fn validate_nominal_reports_decrease() {
    let o = dai(&["validate-nominal", "--config", &fixture()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(field(&text, "hessian_min_eig").parse::<f64>().unwrap() > 0.0);
    assert_eq!(field(&text, "decreasing"), "4/4");
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = tmp(&dir, name);
        std::fs::write(&p, text).unwrap();
        p.to_string_lossy().into_owned()
    };
    let base = std::fs::read_to_string(fixture()).unwrap();
    let cases = [
        (write("parse.json", "{ nope"), 3),
        (write("schema.json", r#"{"network": 3}"#), 4),
        (
            write(
                "physics.json",
                &base.replacen("\"m\": 0.3", "\"m\": -0.3", 1),
            ),
            5,
        ),
        (tmp(&dir, "missing.json").to_string_lossy().into_owned(), 2),
    ];
    for (path, code) in &cases {
        let o = dai(&["certify", "--config", path]);
        assert_eq!(o.status.code(), Some(*code), "{path}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}

#[test]
fn preset_without_electrical_data_cannot_simulate() {
    let o = dai(&[
        "simulate",
        "--config",
        &workspace_file("presets/kundur.json"),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("electrical data"));
}
