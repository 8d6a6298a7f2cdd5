use std::path::Path;
use std::process::{Command, Output};

fn hdnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn hdnn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hdnn(dir, args);
    assert!(
        out.status.success(),
        "hdnn {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn count_params_prints_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["count-params", "--arch", "highway", "--input", "440", "--hidden", "128", "--layers", "10", "--out", "3927"];
    assert_eq!(ok(dir.path(), &args).trim(), "744407");
    let mut gates = args.to_vec();
    gates.push("--gates-only");
    assert_eq!(ok(dir.path(), &gates).trim(), "32768");
}

#[test]
fn bad_invocations_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!hdnn(dir.path(), &["frobnicate"]).status.success());
    assert!(!hdnn(dir.path(), &["count-params", "--arch", "highway", "--bogus"]).status.success());
    assert!(!hdnn(dir.path(), &["eval", "--data", "missing", "--model", "missing.model"]).status.success());
}

#[test]
fn untrained_model_scores_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--seed", "3", "--out", "data"]);
    for seed in ["0", "1", "2"] {
        ok(dir.path(), &["train-ce", "--data", "data", "--epochs", "0", "--seed", seed, "--out", "r.model"]);
        let line = ok(dir.path(), &["eval", "--data", "data", "--model", "r.model"]);
        let err: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        let chance = 1.0 - 1.0 / 12.0;
        assert!((err - chance).abs() < 0.05, "{line}");
    }
}

#[test]
fn corrupted_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--seed", "3", "--out", "data"]);
    ok(dir.path(), &["train-ce", "--data", "data", "--epochs", "0", "--out", "r.model"]);
    let path = dir.path().join("r.model");
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&path, bytes).unwrap();
    let out = hdnn(dir.path(), &["eval", "--data", "data", "--model", "r.model"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn pipeline_writes_reports_and_reruns_identically() {
    let run = |dir: &Path| {
        ok(dir, &["gen-data", "--seed", "5", "--out", "data"]);
        ok(dir, &["train-ce", "--data", "data", "--epochs", "3", "--seed", "5", "--no-timing", "--report", "t.jsonl", "--out", "t.model"]);
        ok(dir, &["distill", "--data", "data", "--teacher", "t.model", "--hidden", "8", "--epochs", "3", "--seed", "5", "--no-timing", "--report", "s.jsonl", "--out", "s.model"]);
        ok(dir, &["make-lattices", "--data", "data", "--seed", "5"]);
        ok(dir, &["train-smbr", "--data", "data", "--model", "s.model", "--epochs", "2", "--seed", "5", "--no-timing", "--report", "q.jsonl", "--out", "q.model"]);
        ok(dir, &["adapt", "--data", "data", "--model", "q.model", "--seed", "5", "--no-timing", "--out-dir", "adapted"])
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let summary = run(a.path());
    assert_eq!(summary.lines().filter(|l| l.starts_with("speaker")).count(), 2);
    run(b.path());

    let teacher = std::fs::read_to_string(a.path().join("t.jsonl")).unwrap();
    assert_eq!(teacher.lines().count(), 4);
    assert!(teacher.lines().all(|l| l.contains("\"cv_frame_error\"") && l.contains("\"seconds\":0")));
    let smbr = std::fs::read_to_string(a.path().join("q.jsonl")).unwrap();
    assert!(smbr.lines().all(|l| l.contains("\"expected_accuracy\"")));

    for f in ["t.jsonl", "t.model", "s.jsonl", "s.model", "q.jsonl", "q.model", "adapted/summary.txt"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between reruns");
    }
}
