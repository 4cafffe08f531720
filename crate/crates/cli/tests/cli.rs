use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qinduct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qinduct")).args(args).output().unwrap()
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A config pointing at the demo tasks and mock script, writing under `dir`.
fn config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "tasks = {:?}\ninference_models = [\"mock-a\"]\nsample_size = 10\ncache_dir = {:?}\nout_dir = {:?}\nmock_script = {:?}\n",
        demo().join("tasks"),
        dir.join("cache"),
        dir.join("out"),
        demo().join("mock_script.json"),
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn replay_prints_the_four_records() {
    let out = qinduct(&["replay-table1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for line in ["vs ZCoT: 50-3-7", "vs SCoT: 52-0-8", "vs INDUCT: 44-3-13", "small models vs INDUCT: 10-3-2"] {
        assert!(text.contains(line), "{text}");
    }
}

#[test]
fn gen_cipher_writes_one_file_per_shift() {
    let dir = tempfile::tempdir().unwrap();
    let out = qinduct(&["gen-cipher", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 25);
    assert!(dir.path().join("shift_cipher_rot_03.json").exists());
}

#[test]
fn eval_with_nothing_to_evaluate_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = qinduct(&["eval", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(qinduct(&["run", "--methods", "nonsense"]).status.code(), Some(2));
    assert_eq!(qinduct(&["gen-cipher", "--ks", "0-3", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn mock_run_then_warm_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = qinduct(&["run", "-c", cfg, "--methods", "zcot,strategy_induct"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = dir.path().join("out/reports/report.json");
    let first = std::fs::read(&report).unwrap();
    let out = qinduct(&["report", "-c", cfg, "--methods", "zcot,strategy_induct"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(&report).unwrap(), first);
}
