use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stlane(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stlane"))
        .current_dir(dir)
        .env_remove("STLANE_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stlane(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const QUICK: [&str; 8] = [
    "--set",
    "max_steps=4",
    "--set",
    "batch_size=2",
    "--set",
    "eval_every=2",
    "--set",
    "checkpoint_every=2",
];

/// gen-data then train; returns the run directory.
fn pipeline(root: &Path, tag: &str) -> std::path::PathBuf {
    ok(root, &["gen-data", "--out", "data", "--train", "4", "--test-normal", "2", "--test-occluded", "2", "--seed", "5"]);
    let run = root.join(tag);
    let mut args = vec!["train", "--data", "data/train", "--out", tag, "--seed", "5"];
    args.extend(QUICK);
    ok(root, &args);
    run
}

#[test]
fn end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let run = pipeline(root, "run");
    for f in ["config.txt", "trace.csv", "model.stln", "train_report.txt", "step_000002.stln", "step_000004.stln"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0].split(',').count(), 2);
    assert_eq!(lines[1].split(',').count(), 6);

    let table = ok(
        root,
        &["eval", "--data", "data/test_normal", "--data", "data/test_occluded", "--checkpoint", "run/model.stln", "--out", "ev"],
    );
    assert!(table.starts_with("Set"), "{table}");
    assert!(table.contains("F1-Measure") && table.contains("test_occluded"));
    let csv = fs::read_to_string(root.join("ev/eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(root.join("ev/eval_test_normal.txt").is_file());

    ok(root, &["infer", "--data", "data/test_occluded", "--sample", "1", "--checkpoint", "run/model.stln", "--out", "inf"]);
    let pngs: Vec<_> = fs::read_dir(root.join("inf"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(pngs.len(), 2, "{pngs:?}");
    assert!(pngs.iter().any(|p| p.ends_with("_mask.png")) && pngs.iter().any(|p| p.ends_with("_overlay.png")));
}

#[test]
fn identical_runs_give_identical_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (pipeline(a.path(), "run"), pipeline(b.path(), "run"));
    for f in ["trace.csv", "model.stln", "step_000002.stln", "train_report.txt", "config.txt"] {
        assert_eq!(fs::read(ra.join(f)).unwrap(), fs::read(rb.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn thread_count_does_not_change_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    pipeline(root, "run");
    let eval = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_stlane"))
            .current_dir(root)
            .env("STLANE_THREADS", threads)
            .args(["eval", "--data", "data/test_occluded", "--checkpoint", "run/model.stln", "--out", out])
            .output()
            .unwrap();
        assert!(o.status.success());
        fs::read(root.join(out).join("eval.csv")).unwrap()
    };
    assert_eq!(eval("1", "one"), eval("3", "three"));
}

#[test]
fn complexity_lists_every_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ok(tmp.path(), &["complexity", "--all-paper-variants"]);
    assert_eq!(text.lines().count(), 17, "{text}");
    assert!(text.contains("SCNN_UNetLight_ConvGRU2"));
    assert_eq!(text, ok(tmp.path(), &["complexity", "--all-variants"]));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(stlane(dir, &["complexity", "--set", "no_such_key=1"]).status.code(), Some(2));
    assert_eq!(stlane(dir, &["complexity", "--set", "missing_equals"]).status.code(), Some(2));
    assert_eq!(stlane(dir, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(stlane(dir, &["--help"]).status.code(), Some(0));

    fs::write(dir.join("bad.stln"), b"not a checkpoint").unwrap();
    fs::create_dir(dir.join("empty")).unwrap();
    let out = stlane(dir, &["eval", "--data", "empty", "--checkpoint", "bad.stln"]);
    assert_eq!(out.status.code(), Some(3));
    let out = stlane(dir, &["eval", "--data", "empty", "--checkpoint", "absent.stln"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stlane(dir, &["eval", "--data", "empty"]).status.code(), Some(2));
}
