#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_spoofnoise");

/// Small classifier so CLI tests train in well under a second.
pub const FAST_TRAIN: &[&str] = &[
    "--config",
    "train.hidden_dim=8",
    "--config",
    "train.epochs=2",
    "--config",
    "train.batch_size=32",
    "--config",
    "train.learning_rate=0.1",
];

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn spoofnoise")
}

/// Runs and asserts the exit code, printing stderr on mismatch.
pub fn run_ok(args: &[&str]) -> Output {
    run_code(args, 0)
}

pub fn run_code(args: &[&str], code: i32) -> Output {
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "spoofnoise {args:?}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// `gen-testdata` into `dir/corpus`; returns (manifest, noise dir).
pub fn gen(dir: &Path, seed: u64, n: usize, variants: usize) -> (PathBuf, PathBuf) {
    let out = dir.join("corpus");
    run_ok(&[
        "gen-testdata",
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
        "--n-per-class",
        &n.to_string(),
        "--variants",
        &variants.to_string(),
        "--noise-seconds",
        "3",
    ]);
    (out.join("manifest.tsv"), out.join("noise"))
}

/// Data lines of a TSV file (header and comments dropped).
pub fn data_lines(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

/// Column `name` of every data line.
pub fn column(path: &Path, name: &str) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split('\t').nth(i).unwrap().to_string()).collect()
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, d: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
