// Helpers for driving the `zsgan` binary from integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A small benchmark that trains in well under a second.
pub const TINY: &str = r#"
[data]
num_categories = 6
samples_per_category = 12
d_v = 8
d_e = 4

[train]
noise_set_size = 3
z_dim = 4
epochs = 2
batch_size = 16
mismatch_set_size = 2
g_hidden = 8
r_hidden = 8
d_hidden1 = 8
d_hidden2 = 4

[protocol]
methods = ["nn", "svm", "ridge"]
bank_per_category = 6
"#;

pub fn zsgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zsgan"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs and asserts success, returning stdout.
pub fn ok(args: &[&str]) -> String {
    let out = zsgan(args);
    assert!(
        out.status.success(),
        "zsgan {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Every file below `dir` by relative path, with its bytes.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Files present in both trees whose bytes differ, plus files only in one.
pub fn tree_diff(a: &Path, b: &Path, skip: &[&str]) -> Vec<String> {
    let (ta, tb) = (tree(a), tree(b));
    let keep = |p: &PathBuf| !skip.iter().any(|s| p.ends_with(s));
    let mut out = Vec::new();
    for (p, bytes) in ta.iter().filter(|(p, _)| keep(p)) {
        match tb.get(p) {
            Some(other) if other == bytes => {}
            Some(_) => out.push(format!("{} differs", p.display())),
            None => out.push(format!("{} missing from second run", p.display())),
        }
    }
    for p in tb.keys().filter(|p| keep(p) && !ta.contains_key(*p)) {
        out.push(format!("{} missing from first run", p.display()));
    }
    out
}
