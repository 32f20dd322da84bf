use std::path::Path;
use std::process::{Command, Output};

fn agentx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agentx")).args(args).output().expect("spawn agentx")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, "seed = 3\nepisode_ticks = 400\n").unwrap();
    p
}

#[test]
fn run_then_replay_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let trace = dir.path().join("t.jsonl");
    let run = agentx(&["run", "--config", path(&cfg), "--trace-out", path(&trace)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let replayed = agentx(&["replay", path(&trace)]);
    assert_eq!(replayed.status.code(), Some(0));
    let live: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    let again: serde_json::Value = serde_json::from_slice(&replayed.stdout).unwrap();
    assert_eq!(live, again);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = agentx(&["run", "--config", path(&cfg), "--seed", "3"]);
    let b = agentx(&["run", "--config", path(&cfg)]);
    let c = agentx(&["run", "--config", path(&cfg), "--seed", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "episode_ticks = 0\n").unwrap();
    assert_eq!(agentx(&["run", "--config", path(&cfg)]).status.code(), Some(2));
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(agentx(&["run", "--config", path(&cfg)]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(agentx(&["run", "--config", path(&missing)]).status.code(), Some(2));
}

#[test]
fn corrupt_trace_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let trace = dir.path().join("t.jsonl");
    assert!(agentx(&["run", "--config", path(&cfg), "--trace-out", path(&trace)]).status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    let cut = dir.path().join("cut.jsonl");
    std::fs::write(&cut, lines.join("\n")).unwrap();
    assert_eq!(agentx(&["replay", path(&cut)]).status.code(), Some(3));
    let garbage = dir.path().join("garbage.jsonl");
    std::fs::write(&garbage, "{not json\n").unwrap();
    assert_eq!(agentx(&["replay", path(&garbage)]).status.code(), Some(3));
}

#[test]
fn train_eval_and_offline_train() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let policy = dir.path().join("q.toml");
    let trace = dir.path().join("greedy.jsonl");
    let train = agentx(&[
        "train", "--config", path(&cfg), "--episodes", "3", "--policy", path(&policy), "--trace-out", path(&trace),
    ]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let out: serde_json::Value = serde_json::from_slice(&train.stdout).unwrap();
    assert_eq!(out["reward_curve"].as_array().unwrap().len(), 3);

    let eval = agentx(&["eval", "--config", path(&cfg), "--policy", path(&policy), "--episodes", "4"]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let seq = agentx(&["eval", "--config", path(&cfg), "--policy", path(&policy), "--episodes", "4", "--sequential"]);
    assert_eq!(eval.stdout, seq.stdout);

    let patterns = dir.path().join("patterns.toml");
    let off = agentx(&["offline-train", "--policy", path(&patterns), path(&trace)]);
    assert!(off.status.success(), "{}", String::from_utf8_lossy(&off.stderr));
    let run = agentx(&["run", "--config", path(&cfg), "--patterns", path(&patterns)]);
    assert!(run.status.success());

    // a pattern file is not a Q-table
    assert_eq!(agentx(&["run", "--config", path(&cfg), "--policy", path(&patterns)]).status.code(), Some(2));
}

#[test]
fn oracle_reward_rejects_malformed_lines() {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_agentx"))
        .arg("oracle-reward")
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"{\"params\": 1}\n").unwrap();
    assert_eq!(child.wait_with_output().unwrap().status.code(), Some(2));
}
