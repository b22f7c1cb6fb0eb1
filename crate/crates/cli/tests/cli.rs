use std::path::Path;
use std::process::{Command, Output};

fn votecheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_votecheck"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const TWO_VOTERS: &str = "voters = [\"Alice\", \"Bob\"]\n";

#[test]
fn honest_election_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", TWO_VOTERS);
    let out = votecheck(&["anonymity", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("anonymity: holds"));
}

#[test]
fn attack_exits_one_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", &format!("{TWO_VOTERS}corrupt = [\"authority\"]\n"));
    let report = dir.path().join("r.json");
    let trace = dir.path().join("t.txt");
    let out = votecheck(&[
        "anonymity",
        "--config",
        &cfg,
        "--report",
        report.to_str().unwrap(),
        "--trace-out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("direction: left_not_in_right"), "{stdout}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let lines: Vec<String> = std::fs::read_to_string(&trace).unwrap().lines().map(String::from).collect();
    let from_report: Vec<String> = json["counterexample_rendered"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l.as_str().unwrap().to_string())
        .collect();
    assert_eq!(lines, from_report);
    assert!(lines.iter().any(|l| l.contains("enc(pkEA,<Archimedes,Babbage>)")));
}

#[test]
fn state_limit_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", TWO_VOTERS);
    let out = votecheck(&["anonymity", "--config", &cfg, "--max-states", "50"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("resource_limit"));
}

#[test]
fn config_errors_exit_three_with_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", "threat = \"restricted\"\ncorrupt = [\"everything\"]\n");
    let out = votecheck(&["anonymity", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("corrupt"), "{err}");
}

#[test]
fn secrecy_without_banned_facts_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", TWO_VOTERS);
    let out = votecheck(&["secrecy", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("banned"));
}

#[test]
fn secrecy_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", TWO_VOTERS);
    let out = votecheck(&["secrecy", "--config", &cfg, "--banned", "<Archimedes,Babbage>"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let pod = write(dir.path(), "b.toml", &format!("{TWO_VOTERS}corrupt = [\"podservice\"]\n"));
    let out = votecheck(&["secrecy", "--config", &pod, "--banned", "<Archimedes,Babbage>"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("intruderknows.<Archimedes,Babbage>"));
}

#[test]
fn presets_run_from_the_command_line() {
    let out = votecheck(&["anonymity", "--preset", "full-dy-fails"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("take.wbb.teller.vote"), "{stdout}");
    let out = votecheck(&["anonymity", "--preset", "no-such-preset"]);
    assert_eq!(out.status.code(), Some(3));
}
