use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linksight"))
        .current_dir(dir)
        .env_remove("LINKSIGHT_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_writes_manifest_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let line = ok(dir.path(), &["generate", "--count", "100", "--length", "64", "--seed", "7", "--out", "gen"]);
    assert!(line.starts_with("generate: 100 traces"));
    let manifest = std::fs::read_to_string(dir.path().join("gen/manifest.txt")).unwrap();
    assert_eq!(manifest.lines().filter(|l| !l.starts_with('#')).count(), 100);
    assert_eq!(std::fs::read_dir(dir.path().join("gen/traces")).unwrap().count(), 100);
}

#[test]
fn constant_trace_renders_black() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--count", "1", "--length", "16", "--stddev", "0", "--out", "gen"]);
    ok(dir.path(), &["transform", "--input", "gen", "--kind", "rp", "--out", "img"]);
    let pgm = std::fs::read(dir.path().join("img/images/syn-00000.pgm")).unwrap();
    let header = b"P5\n16 16\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert!(pgm[header.len()..].iter().all(|&b| b == 0));
    assert_eq!(pgm.len(), header.len() + 256);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["generate", "--bogus"]).status.code(), Some(2));
    let missing = run(dir.path(), &["inject", "--input", "nowhere"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error [io]"));
    let bad = run(dir.path(), &["generate", "--count", "0"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error [traces]"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.kv"), "# shared settings\ncount = 5\nlength = 32\nseed = 3\nout = fromcfg\n").unwrap();
    ok(dir.path(), &["--config", "run.kv", "generate", "--count", "4"]);
    let manifest = std::fs::read_to_string(dir.path().join("fromcfg/manifest.txt")).unwrap();
    assert!(manifest.contains("# trace_length=32"));
    assert_eq!(manifest.lines().filter(|l| !l.starts_with('#')).count(), 4);

    ok(dir.path(), &["generate", "--count", "4", "--length", "32", "--seed", "3", "--out", "direct"]);
    let direct = std::fs::read_to_string(dir.path().join("direct/manifest.txt")).unwrap();
    assert_eq!(manifest, direct);
}

#[test]
fn out_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_linksight"))
        .current_dir(dir.path())
        .env("LINKSIGHT_OUT", "envout")
        .args(["generate", "--count", "2", "--length", "8"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("envout/manifest.txt").exists());
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--count", "6", "--length", "16", "--out", "gen"]);
    let before = std::fs::read_to_string(dir.path().join("gen/manifest.txt")).unwrap();
    ok(dir.path(), &["inject", "--input", "gen", "--fraction", "0.5", "--out", "inj"]);
    assert_eq!(before, std::fs::read_to_string(dir.path().join("gen/manifest.txt")).unwrap());
}
