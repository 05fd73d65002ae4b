#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A corpus and model small enough to train in well under a second.
pub const SMALL_CONFIG: &str = r#"
[corpus]
n_train = 60
n_test = 20

[corpus.vocab]
n_words = 60
n_common = 20
n_homophone_pairs = 4
n_near_pairs = 4

[train]
epochs = 2

[train.encoder]
latent_dim = 16
embed_dim = 8

[retrieval]
k = 10

[eval]
ks = [5, 10]

[bench]
cases = [[2000, 32]]
queries = 3
"#;

pub fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL_CONFIG).unwrap();
    path
}

pub fn biasret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biasret")).args(args).output().expect("binary runs")
}

/// Run and require success; returns stdout.
pub fn run_ok(args: &[&str]) -> String {
    let out = biasret(args);
    assert!(out.status.success(), "biasret {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}
