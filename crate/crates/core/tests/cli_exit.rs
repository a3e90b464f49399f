//! Exit-code contract of the `alacpd` binary: 0 success, 1 internal error,
//! 2 usage or input error.

use std::path::PathBuf;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alacpd"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("alacpd-exit-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn missing_dataset_exits_2_and_names_the_path() {
    let out = binary()
        .args(["detect", "--data", "/no/such/file.json", "--out", "/tmp/alacpd-exit-x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/no/such/file.json"), "{stderr}");
}

#[test]
fn usage_error_exits_2() {
    let out = binary().args(["detect", "--bogus-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_ablation_exits_2() {
    let dir = temp_dir("ablation");
    std::fs::write(dir.join("d.csv"), "a\n1.0\n2.0\n").unwrap();
    let out = binary()
        .args([
            "detect",
            "--data",
            dir.join("d.csv").to_str().unwrap(),
            "--ablation",
            "everything",
            "--out",
            dir.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_then_detect_then_eval_exit_0() {
    let dir = temp_dir("pipeline");
    std::fs::write(
        dir.join("spec.txt"),
        "name = tiny\ndims = 1\nseed = 4\nsegment = 60, 0, 0.25, 0.3\nsegment = 60, 2, 0.25, 0.3\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("config.txt"),
        "U = 4\nS = 2,3,4\nw = 4\nh = 2\ne_init = 2\ne_train = 1\ne_reinit = 5\n\
         n_init_frac = 0.2\nstandardize = none\n",
    )
    .unwrap();
    let data = dir.join("tiny.json");
    let status = binary()
        .args(["synth", "--spec", dir.join("spec.txt").to_str().unwrap(), "--out", data.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let runs = dir.join("runs");
    let status = binary()
        .args([
            "detect",
            "--data",
            data.to_str().unwrap(),
            "--config",
            dir.join("config.txt").to_str().unwrap(),
            "--seeds",
            "2",
            "--out",
            runs.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let status = binary()
        .args([
            "eval",
            "--pred",
            runs.to_str().unwrap(),
            "--annotations",
            dir.join("tiny.annotations.json").to_str().unwrap(),
            "--out",
            dir.join("scores.json").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.join("scores.json").exists());
}
