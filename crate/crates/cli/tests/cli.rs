use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ptpsec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptpsec")).args(args).output().unwrap()
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ptpsec-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const TWO_NODES: &str = r#"
name = "tiny"
seed = 1
horizon_s = 12

[link]
delay_us = 100
jitter_us = 20

[[nodes]]
name = "gm"
master_capable = true
priority1 = 10

[[nodes]]
name = "s1"
initial_offset_us = 300
"#;

#[test]
fn list_shows_bundled_scenarios() {
    let out = ptpsec(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 10);
    assert!(text.contains("delay_spoof"));
}

#[test]
fn run_writes_three_outputs() {
    let dir = scratch("outputs");
    let out = ptpsec(&["run", "delay_spoof", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let offsets = std::fs::read_to_string(dir.join("delay_spoof_offsets.csv")).unwrap();
    assert_eq!(offsets.lines().next(), Some("time_ns,node,true_offset_ns"));
    assert!(dir.join("delay_spoof_verdicts.csv").exists());
    let summary = std::fs::read_to_string(dir.join("delay_spoof_summary.txt")).unwrap();
    assert!(summary.contains("attack_success: true"));
    assert!(summary.contains("max_abs_offset_ms"));
    assert!(summary.contains("[drops_by_reason]"));
}

#[test]
fn config_error_exits_2_with_line() {
    let dir = scratch("bad");
    let bad = TWO_NODES.replace("priority1 = 10", "priority1 = 300");
    let path = write(&dir, "bad.toml", &bad);
    let out = ptpsec(&["run", &path, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 13"), "{err}");
}

#[test]
fn missing_config_exits_2() {
    let out = ptpsec(&["run", "/nonexistent/ptpsec.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn capability_violation_exits_1() {
    let dir = scratch("cap");
    let cfg = format!(
        "{TWO_NODES}
[adversary]
class = \"oob_applicative\"
attack = \"sync_spoof\"
start_s = 5

[adversary.params]
master = \"gm\"
shift_ns = 1_000_000
spoof_addr = true
"
    );
    let path = write(&dir, "cap.toml", &cfg);
    let out = ptpsec(&["run", &path, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stderr).unwrap().contains("oob_applicative"));
}

#[test]
fn seed_controls_output_bytes() {
    let dir = scratch("seed");
    let path = write(&dir, "tiny.toml", TWO_NODES);
    let csv = |seed: &str, sub: &str| {
        let d = dir.join(sub);
        let out = ptpsec(&["run", &path, "--seed", seed, "--out", d.to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read(d.join("tiny_offsets.csv")).unwrap()
    };
    let a = csv("7", "a");
    assert_eq!(a, csv("7", "b"));
    assert_ne!(a, csv("8", "c"));
}

#[test]
fn bench_reports_medians() {
    let out = ptpsec(&["bench", "--iters", "100"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("sign_median_ms") && text.contains("verify_median_ms"));
}
