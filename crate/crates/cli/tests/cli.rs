use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = r#"schema_version = 1
seed = 7
k = 100
n = 50

[[models]]
kind = "beta_bernoulli"
name = "M1"
alpha = 1.0
beta = 10.0

[[models]]
kind = "beta_bernoulli"
name = "M2"
alpha = 1.0
beta = 20.0

[meta]
n_warmup = 300
n_draws = 400

[mixture]
moment_draws = 5000
"#;

fn metapmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metapmp")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_writes_one_row_per_simulation_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = metapmp(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let csv = fs::read_to_string(a.join("pmps.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    assert_eq!(csv, fs::read_to_string(b.join("pmps.csv")).unwrap());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("pmps.json")).unwrap()).unwrap();
    assert_eq!(meta["K"], 100);
    assert_eq!(meta["seed"], 7);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let zero_k = write_config(dir.path(), &MINIMAL.replace("k = 100", "k = 0"));
    assert_eq!(metapmp(&["simulate", "--config", &zero_k, "--out", out]).status.code(), Some(2));
    let unknown = write_config(dir.path(), &format!("{MINIMAL}\nextra = true\n"));
    assert_eq!(metapmp(&["simulate", "--config", &unknown, "--out", out]).status.code(), Some(2));
    let o = metapmp(&["mix", "--out", out, "--observed", "0.5,0.6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("observed"));
    assert_eq!(metapmp(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn empty_group_exits_with_three_and_names_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &MINIMAL.replace("k = 100", "k = 1"));
    let o = metapmp(&["pipeline", "--config", &config, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("model M"), "{}", stderr(&o));
}

#[test]
fn stratified_flag_balances_labels() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = metapmp(&["simulate", "--config", &config, "--out", out.to_str().unwrap(), "--stratified"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("pmps.csv")).unwrap();
    let ones = csv.lines().skip(1).filter(|l| l.split(',').nth(1) == Some("1")).count();
    assert_eq!(ones, 50);
}

#[test]
fn pipeline_with_data_file_matches_observed_string() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let data = dir.path().join("obs.csv");
    let mut text = String::from("y\n");
    for i in 0..50 {
        text.push_str(if i < 35 { "1\n" } else { "0\n" });
    }
    fs::write(&data, text).unwrap();

    let a = dir.path().join("a");
    let o = metapmp(&["pipeline", "--config", &config, "--out", a.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("mixture.json")).unwrap()).unwrap();
    let observed: Vec<f64> = report["observed"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(observed[0] > 0.995);

    // feeding the same PMPs as a string reproduces every artifact
    let b = dir.path().join("b");
    let text = format!("{},{}", observed[0], observed[1]);
    let o = metapmp(&["pipeline", "--config", &config, "--out", b.to_str().unwrap(), "--observed", &text]);
    assert!(o.status.success(), "{}", stderr(&o));
    for file in ["pmps.csv", "meta_1.json", "meta_2.json", "mixture.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["files"].as_object().unwrap().len(), 5);
}

#[test]
fn ingest_requires_labels() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("ext.csv");
    fs::write(&file, "pi_1,pi_2,pi_3\n0.2,0.3,0.5\n").unwrap();
    let o = metapmp(&["ingest", file.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
