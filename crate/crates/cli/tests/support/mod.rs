//! Helpers for driving the `wtpgmr` binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_wtpgmr"))
}

/// Runs the binary inside `dir` with extra environment variables.
pub fn run_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.current_dir(dir).args(args).env_remove("TPR_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to spawn wtpgmr")
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    run_env(dir, args, &[])
}

/// Runs and panics with stderr unless the exit code is 0.
pub fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CLI CSV (meta comment and header skipped).
pub fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

pub const FRAMES: &str = r#"[
  {"A": [[1, 0, 0], [0, 0, -1], [0, 1, 0]], "b": [0, 1.0, 0.5]},
  {"A": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "b": [0, -0.8, -0.8]}
]"#;

/// Every subcommand once, writing into `dir`. Returns the output file names.
pub fn full_pipeline(dir: &Path) -> Vec<&'static str> {
    std::fs::write(dir.join("frames.json"), FRAMES).unwrap();
    ok(dir, &["gen-data", "reaching", "--M", "4", "--T", "200", "--seed", "7", "--out", "d.json"]);
    ok(dir, &["gen-data", "pickplace", "--M", "3", "--T", "100", "--seed", "1", "--out", "pp.json"]);
    ok(dir, &["train", "--data", "d.json", "--K", "3", "--out", "m.json"]);
    ok(dir, &["optimize-alpha", "--model", "m.json", "--data", "d.json", "--out", "m2.json", "--trace", "trace.csv"]);
    ok(dir, &["reproduce", "--model", "m2.json", "--frames", "frames.json", "--method", "wtpgmr", "--out", "w.csv"]);
    ok(dir, &["reproduce", "--model", "m2.json", "--frames", "frames.json", "--method", "tpgmr", "--out", "t.csv"]);
    ok(dir, &["cross-validate", "--data", "d.json", "--K", "3", "--scan", "9", "--report", "cv.json"]);
    ok(dir, &["grid-eval", "--model", "m2.json", "--grid-extent", "10", "--cells", "7", "--report", "grid.json"]);
    ok(dir, &["weights", "--model", "m2.json", "--out", "weights.csv"]);
    ok(dir, &["weights", "--model", "m.json", "--alpha", "-2", "--raw", "--out", "raw.csv"]);
    vec![
        "d.json", "pp.json", "m.json", "m2.json", "trace.csv", "w.csv", "t.csv", "cv.json", "cv.tpgmr.csv",
        "cv.wtpgmr.csv", "grid.json", "grid.tpgmr.csv", "grid.wtpgmr.csv", "weights.csv", "raw.csv",
    ]
}
