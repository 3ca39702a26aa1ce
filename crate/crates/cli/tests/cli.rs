use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[sim]
fleet_size = 6
ticks = 30
warmup = 5
seed = 3

[sim.grid]
width = 8
height = 8

[sim.dqn]
hidden = [16]
batch_size = 8
action_radius = 2

[sim.dqn.encoder]
window = 5

[train]
episodes = 1

[eval]
seeds = [11, 12]
"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jointfleet"));
    cmd.env_remove("JOINTFLEET_OUT");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_config_exits_with_2() {
    let out = run(&["train", "--config", "/definitely/not/here.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("config file not found"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unknown_baseline_is_a_usage_error() {
    let out = run(&["eval", "--baseline", "teleport"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown baseline"));
}

#[test]
fn train_writes_artifacts_and_resumes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out_dir = tmp.path().join("run");
    let cfg_s = cfg.to_str().unwrap();
    let out_s = out_dir.to_str().unwrap();

    let out = run(&["train", "--config", cfg_s, "--out", out_s]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = json(&out_dir.join("train_summary.json"));
    assert_eq!(summary["final_step"], 30);
    assert_eq!(summary["episodes"].as_array().unwrap().len(), 1);
    let curve = fs::read_to_string(out_dir.join("training_curve.csv")).unwrap();
    assert!(curve.starts_with("step,mean_q_max,loss,epsilon,beta"));
    assert_eq!(curve.lines().count(), 31);
    let ckpt = fs::read(out_dir.join("checkpoint.bin")).unwrap();
    assert!(ckpt.starts_with(b"JFQN\n"));

    let checkpoint = out_dir.join("checkpoint.bin");
    let out = run(&[
        "train",
        "--config",
        cfg_s,
        "--out",
        out_s,
        "--checkpoint",
        checkpoint.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let resumed = json(&out_dir.join("train_summary.json"));
    assert_eq!(resumed["final_step"], 60);
    assert_eq!(resumed["episodes"][0]["seed"], 4);
    let curve = fs::read_to_string(out_dir.join("training_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 61);
}

#[test]
fn eval_without_checkpoint_writes_one_report_per_baseline() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out_dir = tmp.path().join("eval");
    let out = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["flex_hops", "flex_nohops", "separate"] {
        let report = json(&out_dir.join(format!("report_{name}.json")));
        assert_eq!(report["baseline"], name);
        assert_eq!(report["runs"].as_array().unwrap().len(), 2);
        let accept = report["runs"][0]["metrics"]["accept_rate"]["overall"]
            .as_f64()
            .unwrap();
        assert!((0.0..=1.0).contains(&accept));
        assert!(out_dir.join(format!("log_{name}_11.jsonl")).is_file());
        let per_day = fs::read_to_string(out_dir.join(format!("per_day_{name}.csv"))).unwrap();
        assert!(per_day.starts_with("seed,day,"));
    }
}

#[test]
fn mismatched_checkpoint_is_rejected_before_simulating() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let train_dir = tmp.path().join("train");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        train_dir.to_str().unwrap(),
        "--ticks",
        "10",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let other = write_config(
        tmp.path(),
        "wide.toml",
        &SMALL.replace("hidden = [16]", "hidden = [24, 8]"),
    );
    let eval_dir = tmp.path().join("eval");
    let checkpoint = train_dir.join("checkpoint.bin");
    let out = run(&[
        "eval",
        "--config",
        other.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
        "--checkpoint",
        checkpoint.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("does not match configured"),
        "{}",
        stderr(&out)
    );
    let written: Vec<_> = fs::read_dir(&eval_dir)
        .map(|d| d.collect())
        .unwrap_or_default();
    assert!(written.is_empty(), "files written before the shape check");
}

#[test]
fn compare_reports_deltas_and_flags_missing_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let dir = tmp.path().join("eval");
    let out = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let hops = dir.join("report_flex_hops.json");
    let copy = tmp.path().join("again.json");
    fs::copy(&hops, &copy).unwrap();
    let cmp_dir = tmp.path().join("cmp");
    let out = run(&[
        "compare",
        hops.to_str().unwrap(),
        copy.to_str().unwrap(),
        dir.join("report_separate.json").to_str().unwrap(),
        "--out",
        cmp_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let pairs = json(&cmp_dir.join("comparison.json"));
    let pairs = pairs.as_array().unwrap();
    assert_eq!(pairs.len(), 3);
    for d in pairs[0]["deltas"].as_array().unwrap() {
        assert_eq!(d["verdict"], "tie");
        if let Some(delta) = d["delta"].as_f64() {
            assert_eq!(delta, 0.0);
        }
    }

    let out = run(&["compare", hops.to_str().unwrap(), "/no/such/report.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("report not found"));
}

#[test]
fn output_dir_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let env_dir = tmp.path().join("from_env");
    let out = bin()
        .args([
            "eval",
            "--config",
            cfg.to_str().unwrap(),
            "--baseline",
            "separate",
            "--ticks",
            "10",
        ])
        .env("JOINTFLEET_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(env_dir.join("report_separate.json").is_file());
    assert!(!env_dir.join("report_flex_hops.json").exists());
}

#[test]
fn generated_workload_replays_as_trip_records() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let csv = tmp.path().join("data").join("trips.csv");
    let out = run(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("pickup_tick,kind,origin_row,origin_col,dest_row,dest_col\n"));
    let rows = text.lines().count() - 1;
    assert!(rows > 0);

    let replay = format!("{SMALL}\n").replace(
        "[sim]\n",
        &format!("[sim]\ntrip_records = {:?}\n", csv.to_str().unwrap()),
    );
    let replay_cfg = write_config(tmp.path(), "replay.toml", &replay);
    let dir = tmp.path().join("replay");
    let out = run(&[
        "eval",
        "--config",
        replay_cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--baseline",
        "flex_nohops",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&dir.join("report_flex_nohops.json"));
    let requests = report["runs"][0]["metrics"]["requests"].as_u64().unwrap();
    let after_warmup = text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').next().unwrap().parse::<u64>().unwrap() >= 5)
        .count();
    assert_eq!(requests as usize, after_warmup);
}
