use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "seed = 5\n\n[synth]\nn_parcels = 800\n\n[evaluate]\nruns = 2\nfolds = 3\n\n[series]\nbootstrap = 50\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aquarisk"))
        .current_dir(dir)
        .args(args)
        .env_remove("AQUARISK_OUT")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> serde_json::Value {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn small_project() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("aquarisk.toml"),
        format!("out = \"out\"\n{SMALL}"),
    )
    .unwrap();
    dir
}

#[test]
fn rank_before_train_names_the_missing_model() {
    let dir = small_project();
    let out = run(dir.path(), &["--config", "aquarisk.toml", "rank"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing model"), "{err}");
    assert!(err.contains("train"), "{err}");
}

#[test]
fn pipeline_summaries_and_stale_inputs() {
    let dir = small_project();
    let cfg = ["--config", "aquarisk.toml"];
    let s = ok(dir.path(), &[&cfg[..], &["synth"]].concat());
    assert_eq!(s["command"], "synth");
    assert_eq!(s["seed"], 5);
    assert_eq!(s["parcels"], 800);
    ok(dir.path(), &[&cfg[..], &["ingest"]].concat());
    ok(dir.path(), &[&cfg[..], &["train"]].concat());
    let e = ok(dir.path(), &[&cfg[..], &["evaluate"]].concat());
    let auc = e["auc_mean"].as_f64().unwrap();
    assert!(auc > 0.5 && auc < 1.0, "{auc}");
    assert!(e["recall_mean"].is_f64() && e["accuracy_mean"].is_f64());
    assert!(dir.path().join("out/evaluation.json").exists());

    // tampering with an upstream artifact is caught before it is used
    let labeled = dir.path().join("out/labeled.csv");
    let mut text = std::fs::read_to_string(&labeled).unwrap();
    text.push('\n');
    std::fs::write(&labeled, text).unwrap();
    let out = run(dir.path(), &[&cfg[..], &["evaluate"]].concat());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stale"));
}

#[test]
fn seed_flag_overrides_config_and_out_env_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aquarisk"))
        .current_dir(dir.path())
        .args(["--config", "c.toml", "--seed", "77", "synth"])
        .env("AQUARISK_OUT", dir.path().join("envout"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(s["seed"], 77);
    assert!(dir.path().join("envout/parcels.csv").exists());
}

#[test]
fn configuration_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    // no seed anywhere
    let out = run(dir.path(), &["--out", "o", "synth"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    // unknown key
    std::fs::write(dir.path().join("bad.toml"), "seed = 1\nfolds = 3\n").unwrap();
    let out = run(dir.path(), &["--config", "bad.toml", "--out", "o", "synth"]);
    assert!(!out.status.success());
    // missing source dataset
    let out = run(dir.path(), &["--seed", "1", "--out", "o", "ingest"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("parcels"));
}
