use std::path::PathBuf;
use std::process::{Command, Output};

fn apbcfw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apbcfw")).args(args).output().unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("apbcfw-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn collision_csv_has_config_and_header() {
    let out = tmp("collision.csv");
    let o = apbcfw(&["collision", "--pairs", "2:2,10:4", "--trials", "2000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# collision"));
    assert!(lines.next().unwrap().starts_with("n,tau,formula"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn solve_writes_trace() {
    let o = apbcfw(&["solve", "--problem", "gfl", "--n", "20", "--d", "2", "--tau", "2", "--max-iters", "30"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# "));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("iter,"));
    assert!(rows.len() >= 30);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let cfg = tmp("run.cfg");
    std::fs::write(&cfg, "# solver\nproblem=quadratic\nn=6\nd=2\ntau=3\nmax_iters=5\n").unwrap();
    let o = apbcfw(&["solve", "--config", cfg.to_str().unwrap(), "--tau", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().find(|l| l.starts_with("iter,")).unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "tau").unwrap();
    let row = text.lines().filter(|l| !l.starts_with('#')).nth(1).unwrap();
    assert_eq!(row.split(',').nth(col).unwrap(), "2");
}

#[test]
fn threaded_modes_print_banner() {
    let o = apbcfw(&[
        "solve",
        "--problem",
        "quadratic",
        "--n",
        "8",
        "--d",
        "2",
        "--mode",
        "async-threads",
        "--workers",
        "2",
        "--max-iters",
        "10",
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("results vary between runs"));
}

#[test]
fn bad_arguments_fail() {
    assert!(!apbcfw(&["solve", "--mode", "warp"]).status.success());
    assert!(!apbcfw(&["solve", "--n", "4", "--tau", "9"]).status.success());
    assert!(!apbcfw(&["collision", "--pairs", "3"]).status.success());
}

#[test]
fn curvature_and_speedup_run() {
    let o = apbcfw(&["curvature", "--problem", "quadratic", "--n", "4", "--d", "2", "--taus", "1,2"]);
    assert!(o.status.success());
    assert!(!stdout(&o).is_empty());
    let o = apbcfw(&["speedup", "--problem", "quadratic", "--n", "8", "--d", "2", "--taus", "1,2", "--seeds", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("speedup"));
    let o = apbcfw(&["delay", "--problem", "gfl", "--n", "20", "--d", "2", "--kappas", "0,2", "--seeds", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
