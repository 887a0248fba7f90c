mod common;

use std::io::Write;
use std::process::{Command, Output, Stdio};

use common::{Params, Synthetic};

fn labelrank(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_labelrank"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn small() -> Synthetic {
    Synthetic::generate(Params {
        topics: 2,
        labels_per_topic: 20,
        ..Params::default()
    })
}

#[test]
fn exit_codes() {
    assert_eq!(labelrank(&[], None).status.code(), Some(1));
    assert_eq!(labelrank(&["--version"], None).status.code(), Some(0));
    assert_eq!(
        labelrank(&["stats", "ttest", "--r", "2", "--n", "25"], None)
            .status
            .code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let config = small().write_to(dir.path());
    std::fs::remove_file(dir.path().join("vectors.vec")).unwrap();
    let out = labelrank(&["build", "-c", config.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vectors.vec"));
}

#[test]
fn classify_from_stdin_finds_source_label() {
    let dir = tempfile::tempdir().unwrap();
    let s = small();
    let config = s.write_to(dir.path());
    let config = config.to_str().unwrap();
    assert!(labelrank(&["build", "-c", config], None).status.success());
    let query = s.targets[7].words.join(" ");
    let out = labelrank(&["classify", "-c", config], Some(&query));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 16, "header plus the default 15 rows");
    let first = text.lines().nth(1).unwrap();
    assert!(
        first.starts_with(&format!("1,{},", s.labels[7].id)),
        "{first}"
    );
}

#[test]
fn output_dir_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = small().write_to(dir.path());
    let elsewhere = dir.path().join("elsewhere");
    let out = labelrank(
        &[
            "build",
            "-c",
            config.to_str().unwrap(),
            "--output-dir",
            elsewhere.to_str().unwrap(),
        ],
        None,
    );
    assert!(out.status.success());
    assert!(elsewhere.join("labels.vec").exists());
    assert!(!dir.path().join("out").exists());
}
