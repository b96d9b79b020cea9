use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flowctl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowctl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    fs::write(
        &path,
        "# quick run\nepisodes = 2\nvehicles = 80\nhorizon = 60\nhidden_width = 8\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn run_fixed_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("fixed");
    let o = flowctl(&["run", "--mode", "fixed", "--config", &cfg], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("fixed run finished: 2 episodes"));
    for f in ["metrics.csv", "detectors.csv", "summary.txt", "config.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn summarize_three_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut dirs = Vec::new();
    for mode in ["fixed", "rl", "rl-reroute"] {
        let out = dir.path().join(mode);
        assert!(flowctl(
            &["run", "--mode", mode, "--config", &cfg, "--seed", "2"],
            &out
        )
        .status
        .success());
        dirs.push(out.display().to_string());
    }
    let o = Command::new(env!("CARGO_BIN_EXE_flowctl"))
        .arg("summarize")
        .args(&dirs)
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("rl_time_reduction_pct"));
    assert!(text.contains("reference_rl_reroute_time_reduction_pct = 34"));
}

#[test]
fn unknown_config_key_exits_1_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "episodes = 2\nlearning_rat = 0.1\n").unwrap();
    let o = flowctl(
        &[
            "run",
            "--mode",
            "rl",
            "--config",
            &cfg.display().to_string(),
        ],
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rat"));
}

#[test]
fn unknown_mode_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = flowctl(&["run", "--mode", "greedy"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("greedy"));
}

#[test]
fn missing_run_directory_exits_2() {
    let o = Command::new(env!("CARGO_BIN_EXE_flowctl"))
        .args(["summarize", "/nonexistent/run"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
