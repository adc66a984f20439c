use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wine() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/wine.csv")
}

fn rcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcs")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn inspect_wine() {
    let o = rcs(&["inspect", "--data", path(&wine()), "--label-col", "class", "--eta", "1.3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    // 71 / 1.3
    assert!(text.contains("zeta 54.62"), "{text}");
    assert!(text.contains("1 majority, 1 intermediate, 1 minority"), "{text}");
    assert!(text.contains("35 rows to generate"), "{text}");
}

#[test]
fn eta_below_one_is_an_error() {
    let o = rcs(&["inspect", "--data", path(&wine()), "--label-col", "class", "--eta", "0.5"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));
}

#[test]
fn balanced_input_needs_no_generation() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    std::fs::write(&csv, "x,y,label\n0,0,a\n1,0,a\n5,5,b\n6,5,b\n").unwrap();
    let o = rcs(&["inspect", "--data", path(&csv)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("no generation needed"));
}

#[test]
fn oversample_is_deterministic_and_balanced() {
    let run = |out: &Path| {
        let o = rcs(&[
            "oversample", "--data", path(&wine()), "--label-col", "class", "--eta", "1.3", "--seed", "3", "--out-dir",
            path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out.join("oversampled.csv")).unwrap()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run(a.path());
    assert_eq!(first, run(b.path()));
    assert_eq!(first.lines().count(), 1 + 3 * 71);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("oversample_report.json")).unwrap()).unwrap();
    assert_eq!(report["rows_out"], 213);
}

#[test]
fn oversample_none_copies_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcs(&[
        "oversample", "--data", path(&wine()), "--label-col", "class", "--method", "none", "--out-dir",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    let written = std::fs::read_to_string(dir.path().join("oversampled.csv")).unwrap();
    assert_eq!(written.lines().count(), 179);
}

#[test]
fn config_file_sections_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, format!("data = {}\nlabel_col = class\neta = 5\n[inspect]\neta = 1.3\n", path(&wine()))).unwrap();
    let o = rcs(&["inspect", "--config", path(&cfg)]);
    assert!(stdout(&o).contains("eta 1.3 "), "{}", stdout(&o));
    let o = rcs(&["inspect", "--config", path(&cfg), "--eta", "2"]);
    assert!(stdout(&o).contains("eta 2 "), "{}", stdout(&o));
}

#[test]
fn evaluate_writes_per_fold_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcs(&[
        "evaluate", "--data", path(&wine()), "--label-col", "class", "--eta", "1.3", "--clf-epochs", "20",
        "--out-dir", path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("fold ")).count(), 5);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let folds = v["per_fold"].as_array().unwrap();
    assert_eq!(folds.len(), 5);
    let tested: u64 = folds.iter().map(|f| f["n_test"].as_u64().unwrap()).sum();
    assert_eq!(tested, 178);
}

#[test]
fn benchmark_table_has_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcs(&[
        "benchmark", "--data", path(&wine()), "--label-col", "class", "--eta", "1.3", "--clf-epochs", "10",
        "--folds", "3", "--out-dir", path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("benchmark.txt")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (row, m) in rows.iter().zip(["none", "ros", "smote", "rcs"]) {
        assert!(row.starts_with(m));
    }
}

#[test]
fn benchmark_needs_two_methods() {
    let o = rcs(&["benchmark", "--data", path(&wine()), "--label-col", "class", "--methods", "rcs"]);
    assert!(!o.status.success());
}

#[test]
fn gradcheck_passes_and_catches_a_corrupted_gradient() {
    let ok = rcs(&["gradcheck"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let bad = rcs(&["gradcheck", "--corrupt-gradient"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).contains("FAIL"));
}

#[test]
fn missing_file_is_reported() {
    let o = rcs(&["inspect", "--data", "/nonexistent.csv"]);
    assert_eq!(o.status.code(), Some(1));
}
