use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fuzzstoch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fuzzstoch"))
        .current_dir(dir)
        .env_remove("FUZZSTOCH_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "seed = 1\nbogus = 3\n").unwrap();
    let out = fuzzstoch(dir.path(), &["--config", "bad.toml", "config"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "ConfigError");
}

#[test]
fn invalid_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[microstructure]\nvolume_fraction = 1.5\n").unwrap();
    let out = fuzzstoch(dir.path(), &["--config", "bad.toml", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "ConfigError");
}

#[test]
fn zero_threads_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = fuzzstoch(dir.path(), &["--threads", "0", "config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn downstream_stage_without_inputs_reports_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = fuzzstoch(dir.path(), &["--out", "o", "stats"]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["error"], "MissingArtifact");
    assert!(err["message"].as_str().unwrap().contains("samples_"));
}

#[test]
fn config_round_trips_with_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = fuzzstoch(dir.path(), &["--seed", "9", "config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = fuzzstoch_cli::RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.seed, 9);
}
