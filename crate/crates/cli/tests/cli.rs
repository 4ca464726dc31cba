use std::ffi::{OsStr, OsString};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn mgcfa<S: AsRef<OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgcfa")).args(args).output().unwrap()
}

fn demo_args(out: &Path, rest: &[&str]) -> Vec<OsString> {
    let mut v: Vec<OsString> = vec!["--config".into(), repo("data/demo.toml").into(), "--out".into(), out.into()];
    v.extend(rest.iter().map(OsString::from));
    v
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn validate_accepts_the_demo_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = mgcfa(&demo_args(dir.path(), &["validate"]));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn ladder_and_dif_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["anchors", "ladder", "dif", "gap"] {
            let o = mgcfa(&demo_args(out, &[cmd]));
            assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let files = read_dir(&a);
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["anchors.csv", "anchors.json", "ladder.csv", "ladder.json", "dif.csv", "dif.json", "gap.json", "scores.csv"] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
    }
    assert_eq!(files, read_dir(&b));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("ladder.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["kind"], "ladder");
    assert_eq!(json["result"]["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn format_flag_limits_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = mgcfa(&demo_args(dir.path(), &["--format", "structured", "fit"]));
    assert_eq!(o.status.code(), Some(0));
    let names: Vec<String> = read_dir(dir.path()).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["fit.json"]);
}

#[test]
fn policy_reports_the_product_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = mgcfa(&demo_args(dir.path(), &["--format", "structured", "policy"]));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("policy.json")).unwrap()).unwrap();
    let r = &v["result"];
    let (b, g, p) = (r["beta"].as_f64().unwrap(), r["delta_eta"].as_f64().unwrap(), r["delta_policy"].as_f64().unwrap());
    assert!((p - b * g).abs() <= 1e-12);
    assert_eq!(r["mode"], "joint");
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    // Validation: the latent mean is not identified under metric invariance.
    assert_eq!(mgcfa(&demo_args(dir.path(), &["gap", "--level", "metric"])).status.code(), Some(2));
    // Unreadable input.
    let missing = dir.path().join("nope.csv");
    let o = mgcfa(&["--data", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "validate"]);
    assert_eq!(o.status.code(), Some(4));
    // Iteration cap reached before convergence.
    assert_eq!(mgcfa(&demo_args(dir.path(), &["--max-iter", "2", "fit"])).status.code(), Some(3));
    // Simulation without a seed.
    let cfg = dir.path().join("noseed.toml");
    std::fs::write(&cfg, "schema_version = 1\n").unwrap();
    let o = mgcfa(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    // Unknown config keys are rejected.
    std::fs::write(&cfg, "schema_version = 1\nsed = 3\n").unwrap();
    let o = mgcfa(&["--config", cfg.to_str().unwrap(), "validate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn demo_command_writes_the_shipped_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub/demo.csv");
    let o = mgcfa(&["demo", "--path", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(path).unwrap(), std::fs::read(repo("data/demo.csv")).unwrap());
}
