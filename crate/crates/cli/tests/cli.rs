use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sentipanel");

/// Small enough to run in seconds. The emotion head is undertrained at this
/// size and may never predict some classes, so only attention is regressed.
const QUICK: [&str; 16] = [
    "--set",
    "demo.posts_per_day=5",
    "--set",
    "train.epochs=8",
    "--set",
    "demo.identify_train=100",
    "--set",
    "demo.emotion_train=10",
    "--set",
    "embedding.dim=8",
    "--set",
    "model.channels=8",
    "--set",
    "train.learning_rate=0.01",
    "--set",
    "regression.dependents=[\"attention\"]",
];

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run.log" {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn demo_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["demo", "--seed", "3", "--out", out];
        args.extend(QUICK);
        let o = run(&args, tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (a, b) = (files(&tmp.path().join("a")), files(&tmp.path().join("b")));
    assert!(a.iter().any(|(n, _)| n == "regression.txt"));
    assert!(a.iter().any(|(n, _)| n == "classified.tsv"));
    assert_eq!(a, b);
    assert!(fs::read_to_string(tmp.path().join("a/run.log")).unwrap().lines().count() >= 6);
}

#[test]
fn seed_changes_the_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    for (out, seed) in [("a", "1"), ("b", "2")] {
        let mut args = vec!["demo", "--seed", seed, "--out", out];
        args.extend(QUICK);
        let o = run(&args, tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |p: &str| fs::read(tmp.path().join(p)).unwrap();
    assert_ne!(read("a/embeddings.txt"), read("b/embeddings.txt"));
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let body = format!("out_dir = \"out\"\n[[tasks]]\nid = \"t\"\nclasses = [\"a\", \"b\"]\n{extra}");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn missing_panel_column_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("panel.csv"), "city,date,total_texts\nA,2020-01-01,3\n").unwrap();
    let cfg = write_config(tmp.path(), "[paths]\npanel = \"panel.csv\"\n");
    let o = run(&["regress", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`pandemic_texts`"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["train", "--seed", "x"], tmp.path()).status.code(), Some(2));
    let o = run(&["train", "--set", "train.epoch=3"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
    let o = run(&["train", "--config", "nope.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[paths]\ncorpora = [\"absent.tsv\"]\n");
    let o = run(&["embed", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.tsv"));
}

#[test]
fn validate_reports_every_problem_with_lines() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.tsv"), "text\ttask\tlabel\tsplit\nab\tt\t1\ttrain\ncd\tt\t7\tdev\n").unwrap();
    let row = "A,2020-01-01,1,0,0,1,1,1,1\n";
    fs::write(
        tmp.path().join("cov.csv"),
        format!("city,date,cases,foreign,risk,distance,pmedical,pgovernment,density\n{row}B,2020-01-01,1,0,0,1,1,1,1\n{row}"),
    )
    .unwrap();
    let cfg = write_config(tmp.path(), "[paths]\ncorpora = [\"c.tsv\"]\ncovariates = \"cov.csv\"\n");
    let o = run(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("c.tsv: line 3: label 7 is out of range for task `t`"), "{err}");
    assert!(err.contains("cov.csv: lines 2 and 4: duplicate row for city `A`"), "{err}");
}

#[test]
fn out_of_range_label_stops_training_with_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.tsv"), "text\ttask\tlabel\tsplit\nab\tt\t1\ttrain\ncd\tt\t2\ttrain\n").unwrap();
    let cfg = write_config(tmp.path(), "[paths]\ncorpora = [\"c.tsv\"]\n");
    let o = run(&["embed", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3: label 2 is out of range for task `t`"), "{}", stderr(&o));
}

#[test]
fn validate_accepts_demo_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["demo", "--out", "d"];
    args.extend(QUICK);
    let o = run(&args, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let d = tmp.path().join("d");
    let cfg = "[[tasks]]\nid = \"identify\"\nclasses = [\"other\", \"pandemic\"]\n\
               [[tasks]]\nid = \"emotion\"\nclasses = [\"fear\", \"disgust\", \"joy\", \"surprise\", \"confidence\", \"sadness\", \"anger\", \"uncertainty\"]\n\
               [paths]\ncorpora = [\"demo/corpus.tsv\"]\nposts = \"demo/posts.tsv\"\ncovariates = \"demo/covariates.csv\"\npanel = \"panel.csv\"\n\
               [regression]\ndependents = [\"attention\"]\n";
    fs::write(d.join("run.toml"), cfg).unwrap();
    let o = run(&["validate", "--config", "d/run.toml"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));

    // re-running single stages from the config reproduces the demo's regression
    let o = run(&["regress", "--config", "d/run.toml", "--out", "r"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(d.join("regression.txt")).unwrap(), fs::read(tmp.path().join("r/regression.txt")).unwrap());
}
