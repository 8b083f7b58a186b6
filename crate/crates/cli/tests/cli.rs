use std::path::Path;
use std::process::{Command, Output};

fn vmint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmint"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("master_seed = 3\nworkers = 1\n{body}")).unwrap();
    path.to_str().unwrap().to_string()
}

const RUIN: &str = r#"
[experiment.ruin]
kind = "gamblers_ruin"
kernel = "nearest_neighbor"
reps = 5000
x = [3]
lo = 0
hi = 10

[experiment.sweep]
kind = "tightness_sweep"
kernel = "uniform_range(2)"
reps = 200
t = [20, 80]
M = [1, 4]
"#;

#[test]
fn run_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), RUIN);
    let out = dir.path().join("out");
    let o = vmint(&["run", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("ruin") && stdout.contains("pass"));
    assert!(out.join("ruin.csv").exists() && out.join("records.jsonl").exists());

    let p = vmint(&["plot-data", out.to_str().unwrap(), "--kind", "survival"]);
    assert_eq!(p.status.code(), Some(0));
    let table = String::from_utf8(p.stdout).unwrap();
    assert!(table.starts_with("series,t,M,p_hat,ci_low,ci_high\n"));
    assert_eq!(table.lines().count(), 5);

    let bad = vmint(&["plot-data", out.to_str().unwrap(), "--kind", "pie"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("survival, density, schedule"));
}

#[test]
fn seed_flag_changes_draws_and_workers_do_not() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), RUIN);
    let run = |seed: &str, workers: &str, name: &str| {
        let out = dir.path().join(name);
        let o = vmint(&["run", &config, "--seed", seed, "--workers", workers, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out.join("ruin.csv")).unwrap()
    };
    let a = run("9", "1", "a");
    let b = run("9", "3", "b");
    let c = run("10", "1", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn failing_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // Expecting growth from a tight kernel fails the median check.
    let config = write_config(
        dir.path(),
        r#"
[experiment.wrong]
kind = "tightness_sweep"
kernel = "uniform_range(2)"
reps = 100
t = [10]
M = [1000]
expect = "not_tight"
"#,
    );
    let o = vmint(&["run", &config, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[experiment.x]\nkind = \"vk\"\nkernel = \"nearest_neighbor\"\nreps = 10\nk = [1]\nt = [1]\n");
    let o = vmint(&["run", &config]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("reps") && err.contains("line"), "{err}");
    assert_eq!(vmint(&["run", "/nonexistent/config.toml"]).status.code(), Some(2));
    let zero = vmint(&["run", &config, "--workers", "0"]);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn empty_config_exits_zero_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dir.path().join("never");
    let o = vmint(&["run", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!out.exists());
}

#[test]
fn kernel_inspect_prints_moments_and_schedule() {
    let o = vmint(&["kernel", "inspect", "uniform_range(2)"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("radius      2"));
    assert!(text.contains("E|X|^2      2.5"));
    let heavy = String::from_utf8(vmint(&["kernel", "inspect", "power_law(1.5, 1000)"]).stdout).unwrap();
    assert!(heavy.contains("schedule"));
    assert_eq!(vmint(&["kernel", "inspect", "brownian"]).status.code(), Some(2));
}

#[test]
fn kernel_table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("k.txt");
    let o = vmint(&["kernel", "inspect", "geometric(0.5)", "--table", table.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let spec = format!("table({})", table.display());
    let again = vmint(&["kernel", "inspect", &spec]);
    assert_eq!(again.status.code(), Some(0), "{}", String::from_utf8_lossy(&again.stderr));
}

#[test]
fn verify_single_criterion() {
    let o = vmint(&["verify", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("criterion 10 PASS"));
    assert_eq!(vmint(&["verify", "nope"]).status.code(), Some(2));
}
