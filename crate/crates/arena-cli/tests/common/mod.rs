#![allow(dead_code)]

//! Shared fixtures: a synthetic video corpus on disk, engine configs wired to
//! scripted backends, and a runner for the compiled `arena` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A workspace for one test: corpus, config, and storage root all live under
/// a single temp dir that disappears with the value.
pub struct TestBed {
    pub dir: tempfile::TempDir,
    pub config_path: PathBuf,
    pub storage_root: PathBuf,
    pub manifest: PathBuf,
}

pub fn make_frames(root: &Path, name: &str, count: usize) -> PathBuf {
    let dir = root.join(name);
    fs::create_dir_all(&dir).unwrap();
    for i in 0..count {
        fs::write(dir.join(format!("frame_{i:05}.jpg")), b"jpeg").unwrap();
    }
    dir
}

/// Four videos, one per duration bucket, with frames and one subtitle track.
pub fn write_corpus(root: &Path) -> PathBuf {
    let corpus = root.join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    make_frames(&corpus, "clip-short", 6);
    make_frames(&corpus, "clip-minute", 8);
    make_frames(&corpus, "clip-mid", 10);
    make_frames(&corpus, "clip-long", 12);
    fs::write(
        corpus.join("clip-short.srt"),
        "1\n00:00:01,000 --> 00:00:03,000\nwelcome to the show\n",
    )
    .unwrap();
    let manifest = corpus.join("manifest.jsonl");
    let rows = [
        serde_json::json!({"video_id": "clip-short", "frame_dir": "clip-short", "duration_s": 12.0, "category": "Movie", "subtitles": "clip-short.srt"}),
        serde_json::json!({"video_id": "clip-minute", "frame_dir": "clip-minute", "duration_s": 45.0, "category": "Art"}),
        serde_json::json!({"video_id": "clip-mid", "frame_dir": "clip-mid", "duration_s": 300.0, "category": "STEM"}),
        serde_json::json!({"video_id": "clip-long", "frame_dir": "clip-long", "duration_s": 1200.0, "category": "History"}),
    ];
    let body: String = rows.iter().map(|r| format!("{r}\n")).collect();
    fs::write(&manifest, body).unwrap();
    manifest
}

/// Standard scripted config: three contestants of strictly decreasing answer
/// length, an examiner that plays every agent role, and a judge that prefers
/// the longer answer. Ridge keeps the undefeated top model fittable.
pub fn config_toml(storage_root: &Path, registry: Option<&Path>, seed: u64) -> String {
    let registry_line = registry
        .map(|p| format!("registry = {:?}\n", p.display().to_string()))
        .unwrap_or_default();
    format!(
        r#"storage_root = {storage:?}
{registry_line}
[scheduler]
seed = {seed}
parallelism = 4

[bt]
ridge_epsilon = 0.01

[[pool]]
model_id = "s1"
kind = "scripted"
script = {{ profile = "contestant", strength = 3 }}

[[pool]]
model_id = "s2"
kind = "scripted"
script = {{ profile = "contestant", strength = 2 }}

[[pool]]
model_id = "s3"
kind = "scripted"
script = {{ profile = "contestant", strength = 1 }}

[examiner]
model_id = "examiner"
kind = "scripted"
script = {{ profile = "examiner" }}

[judge]
model_id = "judge"
kind = "scripted"
script = {{ profile = "judge_prefer_longer" }}
"#,
        storage = storage_root.display().to_string(),
    )
}

/// A ready-to-use bed with corpus on disk and the standard config written.
pub fn standard_bed(seed: u64) -> TestBed {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path());
    let storage_root = dir.path().join("store");
    let config_path = dir.path().join("arena.toml");
    fs::write(&config_path, config_toml(&storage_root, Some(&manifest), seed)).unwrap();
    TestBed {
        dir,
        config_path,
        storage_root,
        manifest,
    }
}

pub fn run_arena(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arena"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("arena binary should run")
}

pub fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

pub fn assert_code(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "wrong exit code\nstdout:\n{}\nstderr:\n{}",
        stdout(output),
        stderr(output)
    );
}

pub fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        stdout(output),
        stderr(output)
    );
}
