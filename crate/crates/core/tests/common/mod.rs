#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

pub mod fsm_check;

use std::fs;
use std::path::{Path, PathBuf};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Compare against a checked-in golden file. `WEFIX_BLESS=1` rewrites it.
pub fn check_golden(rel: &str, actual: &str) {
    let path = fixture(rel);
    if std::env::var_os("WEFIX_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{rel}: {e}"));
    assert!(
        expected == actual,
        "{rel} differs from output:\n--- golden\n{expected}\n--- actual\n{actual}"
    );
}

/// Every transformer corpus file with its dialect.
pub fn corpus_files() -> Vec<(PathBuf, wefix_core::Dialect)> {
    let mut out = Vec::new();
    for (dir, d) in [
        ("corpus/selenium", wefix_core::Dialect::SeleniumWebdriver),
        ("corpus/cypress", wefix_core::Dialect::Cypress),
    ] {
        let mut files: Vec<PathBuf> = fs::read_dir(fixture(dir)).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        out.extend(files.into_iter().map(|p| (p, d)));
    }
    out
}

/// The listen-window policy as a literal step-by-step loop over a clock,
/// kept apart from the library code it checks.
pub fn naive_window(events: &[f64]) -> (f64, Vec<usize>) {
    let mut omega = 1.0f64;
    let mut captured = Vec::new();
    let mut next = 0;
    loop {
        if next == events.len() {
            return (omega, captured);
        }
        let now = events[next];
        if !(now < omega) {
            return (omega, captured);
        }
        captured.push(next);
        let doubled = 2.0 * now;
        if doubled > omega {
            omega = doubled;
        }
        if omega > 20.0 {
            omega = 20.0;
        }
        next += 1;
    }
}
