//! The binary end to end.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn hdtrd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdtrd")).args(args).output().expect("binary runs")
}

fn golden_args(data: &str) -> Vec<&str> {
    vec!["test", "--data", data, "--p1", "10", "--c0", "0.5", "--seed", "7", "--jt", "30", "--jz", "60"]
}

#[test]
fn null_fixture_matches_golden_report() {
    let data = fixture("null_fixture.csv");
    let out = hdtrd(&golden_args(data.to_str().unwrap()));
    assert_eq!(out.status.code(), Some(0));
    let golden = std::fs::read_to_string(fixture("null_fixture.report")).unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout, format!("{golden}status=ok exit=0\n"));
    assert!(stdout.contains("reject=false"));
}

#[test]
fn saved_report_is_identical_across_runs() {
    let dir = tempfile::TempDir::new().unwrap();
    let data = fixture("null_fixture.csv");
    let mut saved = Vec::new();
    for name in ["a.txt", "b.txt"] {
        let path = dir.path().join(name);
        let mut args = golden_args(data.to_str().unwrap());
        let p = path.to_str().unwrap().to_string();
        args.extend(["--out", &p]);
        assert_eq!(hdtrd(&args).status.code(), Some(0));
        saved.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(saved[0], saved[1]);
}

#[test]
fn exit_codes() {
    let out = hdtrd(&["test", "--data", "nope.csv", "--p1", "1", "--delta0", "0", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("status=input-error exit=2"));

    let out = hdtrd(&["test", "--data", "nope.csv", "--p1", "1", "--delta0", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = hdtrd(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("module"));
}
