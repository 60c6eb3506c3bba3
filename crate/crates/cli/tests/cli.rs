use std::path::Path;
use std::process::{Command, Output};

fn npae(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npae")).args(args).arg("--out").arg(out).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_upstream_artifact_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = npae(dir.path(), &["score"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("kind=missing-artifact") && err.contains("npae features"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\n[train]\nepochz = 3\n").unwrap();
    let o = npae(dir.path(), &["gen-data", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epochz"));
}

#[test]
fn unknown_method_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = npae(dir.path(), &["score", "--methods", "linf,median"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("median"));
}

#[test]
fn gen_data_writes_manifest_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        "[data]\nheight = 32\nwidth = 32\ntrain = 4\nholdout = 5\nanomalies = 2\ncontrols = 2\nattribute_negatives = 2\nattribute_positives = 2\n[experiment]\nset_sizes = [4]\ntrials = 10\n",
    )
    .unwrap();
    let o = npae(dir.path(), &["gen-data", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(dir.path().join("data/manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().filter(|l| !l.starts_with('#')).count(), 17);
    let prov = std::fs::read_to_string(dir.path().join("provenance/gen-data.toml")).unwrap();
    assert!(prov.contains("config_sha256") && prov.contains("seed = 7"));
}
