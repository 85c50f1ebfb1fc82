mod common;

use std::path::Path;

use common::{emogaze, stderr, SMALL_CONFIG};

fn config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, SMALL_CONFIG).unwrap();
    p
}

#[test]
fn synth_to_stats_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let run = tmp.path().join("run");
    let d = run.to_str().unwrap();
    for step in [
        vec!["synth", "--out", d, "--seed", "3"],
        vec!["events", "--in", d],
        vec!["features", "--in", d],
        vec!["stats", "--in", d],
    ] {
        let o = emogaze(Some(&cfg), &step);
        assert!(o.status.success(), "{step:?}: {}", stderr(&o));
    }
    for f in ["gaze.csv", "events.jsonl", "features.csv", "stats-report.json", "manifest-stats.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run.join("manifest-stats.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "stats");

    let o = emogaze(Some(&cfg), &["report", "--in", d]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Felt Valence"), "{text}");
}

#[test]
fn missing_input_is_a_domain_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let o = emogaze(None, &["train", "--in", d]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("features.csv"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(emogaze(None, &["train"]).status.code(), Some(2));
    assert_eq!(emogaze(None, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(emogaze(None, &["grid", "--in", ".", "--grid", "huge"]).status.code(), Some(2));
}

#[test]
fn bad_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\nlearning_rat = 0.1\n").unwrap();
    let out = tmp.path().join("run");
    let o = emogaze(Some(&cfg), &["synth", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rat"), "{}", stderr(&o));
}

#[test]
fn existing_outputs_need_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let d = tmp.path().join("run");
    let d = d.to_str().unwrap();
    assert!(emogaze(Some(&cfg), &["synth", "--out", d]).status.success());
    let again = emogaze(Some(&cfg), &["synth", "--out", d]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--overwrite"), "{}", stderr(&again));
    assert!(emogaze(Some(&cfg), &["synth", "--out", d, "--overwrite"]).status.success());
}

#[test]
fn report_on_an_empty_stats_file_shows_banner() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let run = tmp.path().join("run");
    let d = run.to_str().unwrap();
    for step in [vec!["synth", "--out", d], vec!["events", "--in", d], vec!["features", "--in", d]] {
        assert!(emogaze(Some(&cfg), &step).status.success());
    }
    // keep only the header row of the feature table
    let features = run.join("features.csv");
    let header = std::fs::read_to_string(&features).unwrap().lines().next().unwrap().to_string();
    std::fs::write(&features, format!("{header}\n")).unwrap();
    let o = emogaze(Some(&cfg), &["stats", "--in", d]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = emogaze(Some(&cfg), &["report", "--in", d]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("no results"));
}

#[test]
fn report_without_results_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = emogaze(None, &["report", "--in", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seeded_runs_are_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    common::full_run(&cfg, &a, 5);
    common::full_run(&cfg, &b, 5);
    for f in ["features.csv", "split.csv", "metrics.json", "baseline-metrics.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
