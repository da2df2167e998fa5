use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bandit-batch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, sampler: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{sampler}.toml"));
    let text = format!(
        r#"
[dataset]
n = 120
dim = 4
classes = 3

[noise]
ratios = [0.2]

[sampler]
kind = "{sampler}"

[trainer]
hidden = 8

[run]
batch_size = 8
epochs = 3
seeds = [0]
out = "ignored"
"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

#[test]
fn run_then_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    for sampler in ["uniform", "fpl"] {
        let cfg = write_config(tmp.path(), sampler);
        let out = bin(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--seeds",
            "1,2",
            "--out",
            runs.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
    }
    assert!(runs.join("fpl-noise0.20-seed2.jsonl").exists());
    assert!(runs.join("uniform-noise0.20-seed1.noise.jsonl").exists());

    let plots = tmp.path().join("plots");
    let out = bin(&[
        "analyze",
        "--runs",
        runs.to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
        "--figures",
        "errors",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(names(&plots), ["errors.svg", "errors_curve.csv", "errors_summary.csv"]);
    let summary = std::fs::read_to_string(plots.join("errors_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(1).unwrap().starts_with("fpl,0.20,2,0,"));

    let again = tmp.path().join("again");
    let out = bin(&[
        "analyze",
        "--runs",
        runs.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "--figures",
        "errors,occurrence,overlay,entropy,sensitivity",
        "--window",
        "10",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(names(&again).len(), 11);
    for f in ["errors_summary.csv", "errors_curve.csv"] {
        assert_eq!(
            std::fs::read(plots.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap()
        );
    }
}

#[test]
fn analyze_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(&[
        "analyze",
        "--runs",
        tmp.path().to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no run records"));
}

#[test]
fn unknown_figure_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(&[
        "analyze",
        "--runs",
        tmp.path().to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "--figures",
        "histogram",
    ]);
    assert!(!out.status.success());
}

#[test]
fn bad_config_reports_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "[run]\nbatch_size = 0\n").unwrap();
    let out = bin(&["run", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
