#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub const SMALL_CONFIG: &str = "\
[cohort]
n_participants = 12
trials_per_participant = 24

[model]
lstm_hidden = 8
max_epochs = 15
";

/// Runs the binary with `args`; `config` is passed through the environment.
pub fn emogaze(config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_emogaze"));
    cmd.args(args).env_remove("EMOGAZE_CONFIG").env("RUST_LOG", "off");
    if let Some(c) = config {
        cmd.env("EMOGAZE_CONFIG", c);
    }
    cmd.output().expect("spawn emogaze")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs every stage from synthesis to evaluation in `dir`.
pub fn full_run(config: &Path, dir: &Path, seed: u64) {
    let d = dir.to_str().unwrap();
    let s = seed.to_string();
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--out", d],
        vec!["events", "--in", d],
        vec!["features", "--in", d],
        vec!["stats", "--in", d],
        vec!["split", "--in", d],
        vec!["train", "--in", d, "--label", "felt_valence"],
        vec!["baseline", "--in", d, "--label", "felt_valence"],
        vec!["eval", "--in", d],
    ];
    for mut step in steps {
        step.extend(["--seed", &s]);
        let o = emogaze(Some(config), &step);
        assert!(o.status.success(), "{step:?}: {}", stderr(&o));
    }
}
