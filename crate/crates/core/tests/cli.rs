use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use craftrl::pipeline::{read_json, RunManifest, EVAL_FILE, MANIFEST_FILE, METRICS_FILE};
use craftrl::trainer::EvalReport;

const TINY: &str = r#"
[env]
max_frames = 400

[architecture]
encoder = "mlp"
spatial_units = 8
nonspatial_units = [8, 8]
hidden = 8
inventory_units = [8, 4]

[demos]
count = 4

[pretrain]
epochs = 2
batch_size = 2
holdout_fraction = 0.0

[train]
actors = 1
segment_length = 8
batch_segments = 4
replay_capacity = 32

[ablation]
budget_frames = 600

[eval]
episodes = 2

[suite]
seeds = [0]
rows = ["supervised", "+cp", "impala", "+er+sac+ac+cl"]
replay_ratios = [1, 15]
"#;

fn craftrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_craftrl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&craftrl(&["--help"])), 0);
    assert_eq!(code(&craftrl(&["--version"])), 0);
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&craftrl(&["frobnicate"])), 1);
    assert_eq!(code(&craftrl(&["eval"])), 1);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[ablation]\nreplay_ratio = -3\n").unwrap();
    let o = craftrl(&["gen-demos", "--config", s(&bad), "--out", s(&dir.path().join("d.bin"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("replay_ratio"));

    let o = craftrl(&["gen-demos", "--set", "demos.noise=1.5", "--out", s(&dir.path().join("d.bin"))]);
    assert_eq!(code(&o), 1);

    let missing = dir.path().join("nope.ckpt");
    assert_eq!(code(&craftrl(&["eval", "--ckpt", s(&missing)])), 1);

    let garbage = dir.path().join("garbage.ckpt");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    assert_eq!(code(&craftrl(&["eval", "--ckpt", s(&garbage)])), 1);
}

#[test]
fn commands_chain_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let data = d.join("data").join("demos.bin");
    let ckpt = d.join("cp").join("actor.ckpt");
    let run = d.join("run");

    let o = craftrl(&["gen-demos", "--config", s(&cfg), "--out", s(&data), "--count", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = craftrl(&["pretrain", "--config", s(&cfg), "--data", s(&data), "--out", s(&ckpt)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ckpt.with_extension("csv").is_file());

    let o = craftrl(&[
        "train", "--config", s(&cfg), "--init", s(&ckpt), "--out", s(&run), "--set", "ablation.er=false",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::read(&run.join(MANIFEST_FILE)).unwrap();
    assert!(!m.config.ablation.er);
    assert!(m.end_frame <= 600);
    assert!(fs::read_to_string(run.join(METRICS_FILE)).unwrap().lines().count() > 1);
    let stored: EvalReport = read_json(&run.join(EVAL_FILE)).unwrap();

    // the manifest next to the checkpoint supplies the config, so eval reproduces the stored report
    let o = craftrl(&["eval", "--ckpt", s(&run.join("actor.ckpt"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let printed: EvalReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed, stored);

    let o = craftrl(&["eval", "--ckpt", s(&run.join("critic.ckpt"))]);
    if run.join("critic.ckpt").exists() {
        assert_eq!(code(&o), 1);
    }
}

#[test]
fn ablate_and_report_write_the_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("suite.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("suite");
    let o = craftrl(&["ablate", "--suite", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("report").join("ablation.csv")).unwrap();
    for row in ["supervised", "+cp", "impala", "+er+sac+ac+cl"] {
        assert!(table.contains(row), "{row} missing from\n{table}");
    }
    for ratio in [1, 15] {
        let row = craftrl::pipeline::ratio_row(ratio);
        assert!(table.contains(&row), "{row} missing from\n{table}");
    }
    let freq = fs::read_to_string(out.join("report").join("reward_frequency.csv")).unwrap();
    assert!(freq.lines().count() >= 5);

    fs::remove_dir_all(out.join("report")).unwrap();
    let o = craftrl(&["report", "--run-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("report").join("ablation.csv")).unwrap(), table);

    assert_eq!(code(&craftrl(&["report", "--run-dir", s(dir.path())])), 1);
}
