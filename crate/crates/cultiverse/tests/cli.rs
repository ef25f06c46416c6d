//! Exit codes and output of the `cultiverse` binary.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{fixture_copy, fixture_root};
use cultiverse::files::{NORMS_FILE, PAINTINGS_FILE};
use serde_json::Value;

fn run(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cultiverse"))
        .arg(args[0])
        .arg(root)
        .args(&args[1..])
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn import_args(root: &Path) -> Vec<String> {
    vec![
        root.join("detections.json").display().to_string(),
        "--map".into(),
        root.join("label_map.json").display().to_string(),
    ]
}

#[test]
fn validate_fixture_succeeds() {
    let out = run(&["validate", "--json"], &fixture_root());
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert!(report["report"]["violations"].as_array().unwrap().is_empty());

    let out = run(&["validate"], &fixture_root());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violations"));
}

#[test]
fn violations_exit_with_one() {
    let dir = fixture_copy();
    let path = dir.path().join(NORMS_FILE);
    let text = fs::read_to_string(&path).unwrap().replace("n018\tcrab\tsatire", "n018\tcrab\tAllegory");
    fs::write(&path, text).unwrap();
    let out = run(&["validate", "--json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let violations = json(&out)["report"]["violations"].as_array().unwrap().clone();
    assert_eq!(violations.len(), 1);
    assert_eq!(violations[0]["entity"], "n018");
}

#[test]
fn missing_files_exit_with_two() {
    let dir = fixture_copy();
    fs::remove_file(dir.path().join(PAINTINGS_FILE)).unwrap();
    for cmd in ["validate", "stats", "ingest"] {
        let out = run(&[cmd, "--json"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert_eq!(json(&out)["error"]["kind"], "file_missing", "{cmd}");
    }
    let out = run(&["validate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FileMissing"));
}

#[test]
fn ingest_writes_a_loadable_copy() {
    let out_dir = tempfile::tempdir().unwrap();
    let target = out_dir.path().join("copy");
    let out = run(&["ingest", "--json", "--out", target.to_str().unwrap()], &fixture_root());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = json(&out);
    assert_eq!(body["reference_consistent"], true);
    let again = run(&["stats", "--json"], &target);
    let original = run(&["stats", "--json"], &fixture_root());
    assert_eq!(json(&again), json(&original));
}

#[test]
fn import_dry_run_writes_nothing() {
    let dir = fixture_copy();
    let before = fs::read(dir.path().join(PAINTINGS_FILE)).unwrap();
    let mut args = vec!["import-detections".to_string()];
    args.extend(import_args(dir.path()));
    args.extend(["--dry-run".into(), "--json".into()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&args, dir.path());
    let body = json(&out);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(body["summary"]["added"], 8);
    assert_eq!(body["written"], false);
    assert_eq!(fs::read(dir.path().join(PAINTINGS_FILE)).unwrap(), before);
}

#[test]
fn import_is_idempotent_on_disk() {
    let dir = fixture_copy();
    let mut args = vec!["import-detections".to_string()];
    args.extend(import_args(dir.path()));
    args.push("--json".into());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();

    let first = run(&args, dir.path());
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(json(&first)["written"], true);
    assert_eq!(json(&first)["summary"]["added"], 8);
    let written = fs::read(dir.path().join(PAINTINGS_FILE)).unwrap();

    let second = run(&args, dir.path());
    assert_eq!(json(&second)["summary"]["added"], 0);
    assert_eq!(fs::read(dir.path().join(PAINTINGS_FILE)).unwrap(), written);
    assert_eq!(run(&["validate"], dir.path()).status.code(), Some(0));
}

#[test]
fn stats_text_lists_every_element() {
    let out = run(&["stats"], &fixture_root());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let elements = fs::read_to_string(fixture_root().join("elements.tsv")).unwrap();
    for line in elements.lines().skip(1) {
        let id = line.split('\t').next().unwrap();
        assert!(text.contains(id), "{id}");
    }
}
