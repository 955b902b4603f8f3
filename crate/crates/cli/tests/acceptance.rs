//! Acceptance: end-to-end determinism. Running the full pipeline twice with
//! identical seeds must yield byte-identical corpora, templates, parameters,
//! and report files.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn run_in(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_polyprotect"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// One full experiment pipeline: corpus generation, protection, accuracy,
/// single-template and record-multiplicity attacks, range derivation, and
/// both unlinkability modes.
fn run_pipeline(dir: &Path) {
    run_in(
        dir,
        &[
            "gen-corpus",
            "--subjects",
            "8",
            "--samples",
            "12",
            "--dim",
            "32",
            "--seed",
            "7",
            "--out",
            "corpus.csv",
        ],
    );
    run_in(
        dir,
        &[
            "protect",
            "--in",
            "corpus.csv",
            "--overlap",
            "2",
            "--gen-params",
            "--params-out",
            "params.json",
            "--out",
            "templates.jsonl",
            "--seed",
            "7",
        ],
    );
    run_in(
        dir,
        &[
            "compare",
            "--a",
            "templates.jsonl",
            "--b",
            "templates.jsonl",
            "--out",
            "scores.csv",
        ],
    );
    run_in(
        dir,
        &[
            "eval-accuracy",
            "--corpus",
            "corpus.csv",
            "--ref-samples",
            "3",
            "--scenario",
            "normal",
            "--overlaps",
            "0,2",
            "--trials",
            "2",
            "--out-dir",
            "reports",
            "--seed",
            "7",
        ],
    );
    run_in(
        dir,
        &[
            "eval-accuracy",
            "--corpus",
            "corpus.csv",
            "--ref-samples",
            "3",
            "--scenario",
            "baseline",
            "--out-dir",
            "reports",
            "--seed",
            "7",
        ],
    );
    run_in(
        dir,
        &[
            "attack-invert",
            "--corpus",
            "corpus.csv",
            "--ref-samples",
            "3",
            "--overlaps",
            "0,4",
            "--targets",
            "4",
            "--guesses",
            "8",
            "--out-dir",
            "reports",
            "--seed",
            "7",
        ],
    );
    run_in(
        dir,
        &[
            "attack-arm",
            "--corpus",
            "corpus.csv",
            "--ref-samples",
            "3",
            "--overlaps",
            "2",
            "--p-values",
            "1,2",
            "--targets",
            "3",
            "--guesses",
            "5",
            "--out-dir",
            "reports",
            "--seed",
            "7",
        ],
    );
    run_in(
        dir,
        &[
            "derive-range",
            "--corpus",
            "corpus.csv",
            "--ref-samples",
            "3",
            "--overlaps",
            "2",
            "--trials",
            "2",
            "--out-dir",
            "reports",
            "--seed",
            "7",
        ],
    );
    run_in(
        dir,
        &[
            "eval-unlink",
            "--corpus",
            "corpus.csv",
            "--ref-samples",
            "3",
            "--overlaps",
            "2",
            "--mode",
            "naive",
            "--trials",
            "2",
            "--out-dir",
            "reports",
            "--seed",
            "7",
        ],
    );
    run_in(
        dir,
        &[
            "eval-unlink",
            "--corpus",
            "corpus.csv",
            "--ref-samples",
            "3",
            "--overlaps",
            "2",
            "--mode",
            "strict",
            "--range-file",
            "reports/ranges.json",
            "--trials",
            "2",
            "--out-dir",
            "reports",
            "--seed",
            "7",
        ],
    );
}

fn file_map(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_9_end_to_end_determinism() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_pipeline(a.path());
    run_pipeline(b.path());

    let files_a = file_map(a.path());
    let files_b = file_map(b.path());
    assert_eq!(
        files_a.keys().collect::<Vec<_>>(),
        files_b.keys().collect::<Vec<_>>(),
        "the two runs produced different file sets"
    );
    assert!(
        files_a.len() >= 12,
        "expected a full report set, got {:?}",
        files_a.keys()
    );
    for (name, bytes) in &files_a {
        assert_eq!(bytes, &files_b[name], "file {name} differs between runs");
    }
    println!(
        "[acceptance] PASS criterion 9: end-to-end determinism, {} files byte-identical across two seeded runs",
        files_a.len()
    );
}
