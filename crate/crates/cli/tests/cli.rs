//! End-to-end tests of the binary: artifact schemas, layered configuration,
//! determinism, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

const OUT_DIR_ENV: &str = "NPL_MMD_OUT_DIR";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_npl-mmd"));
    cmd.env_remove(OUT_DIR_ENV);
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn binary");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().expect("spawn binary");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stderr).to_string(),
    )
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

/// Small fast gaussian run: B=8 draws in well under a second.
fn tiny_run_args<'a>(cmd: &'a mut Command, seed: u64, out: &Path) -> &'a mut Command {
    cmd.args([
        "run",
        "--model",
        "gaussian",
        "--n",
        "50",
        "--b",
        "8",
        "--steps",
        "60",
        "--batch",
        "16",
        "--seed",
        &seed.to_string(),
        "--out-dir",
    ])
    .arg(out)
}

#[test]
fn run_writes_b_rows_and_stable_schema() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(tiny_run_args(&mut bin(), 7, dir.path()));

    let posterior = read(&dir.path().join("posterior.csv"));
    assert!(
        posterior.ends_with('\n'),
        "posterior.csv not newline-terminated"
    );
    let lines: Vec<&str> = posterior.lines().collect();
    assert_eq!(lines.len(), 9, "header + 8 draw rows");
    assert_eq!(lines[0], "b,theta_0,theta_1,theta_2,theta_3,loss,seed");
    for (j, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0], j.to_string());
        for field in &fields[1..6] {
            field
                .parse::<f64>()
                .unwrap_or_else(|_| panic!("bad float {field}"));
        }
        fields[6].parse::<u64>().expect("seed column");
    }

    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("summary.json"))).unwrap();
    assert_eq!(summary["draws_total"], 8);
    assert_eq!(summary["draws_failed"], 0);
    assert_eq!(summary["model"], "gaussian");
    assert!(summary["nmse"].as_f64().unwrap() >= 0.0);
    assert_eq!(summary["mean"].as_array().unwrap().len(), 4);

    let config: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("config.json"))).unwrap();
    assert_eq!(config["seed"], 7);
    assert_eq!(config["b"], 8);
    assert_eq!(config["kernel"], "model-default");
}

#[test]
fn rerun_with_same_config_is_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_ok(tiny_run_args(&mut bin(), 11, dir_a.path()));
    run_ok(tiny_run_args(&mut bin(), 11, dir_b.path()));
    assert_eq!(
        read(&dir_a.path().join("posterior.csv")),
        read(&dir_b.path().join("posterior.csv"))
    );
}

#[test]
fn threads_do_not_change_results() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_ok(tiny_run_args(&mut bin(), 13, dir_a.path()).args(["--threads", "1"]));
    run_ok(tiny_run_args(&mut bin(), 13, dir_b.path()).args(["--threads", "2"]));
    assert_eq!(
        read(&dir_a.path().join("posterior.csv")),
        read(&dir_b.path().join("posterior.csv"))
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("experiment.conf");
    std::fs::write(
        &config_path,
        "# experiment manifest\n\
         model = gaussian\n\
         n = 50\n\
         B = 4\n\
         steps = 60\n\
         batch = 16\n\
         seed = 7\n\
         T = 25\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    run_ok(
        bin()
            .arg("run")
            .arg("--config")
            .arg(&config_path)
            .args(["--b", "6", "--out-dir"])
            .arg(&out),
    );
    let posterior = read(&out.join("posterior.csv"));
    assert_eq!(posterior.lines().count(), 7, "header + 6 rows (flag wins)");
    let config: serde_json::Value = serde_json::from_str(&read(&out.join("config.json"))).unwrap();
    assert_eq!(config["b"], 6);
    assert_eq!(config["truncation"], 25, "file key T applies");
    assert_eq!(config["seed"], 7);
}

#[test]
fn config_file_errors_reference_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.conf");
    std::fs::write(&config_path, "model = gaussian\nn = 50\nbogus_key = 3\n").unwrap();
    let (code, stderr) = exit_code(bin().arg("run").arg("--config").arg(&config_path));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains(":3:"), "no line reference in: {stderr}");
    assert!(stderr.contains("bogus_key"), "no key name in: {stderr}");

    std::fs::write(&config_path, "model = gaussian\nnot a key value line\n").unwrap();
    let (code, stderr) = exit_code(bin().arg("run").arg("--config").arg(&config_path));
    assert_eq!(code, 2);
    assert!(stderr.contains(":2:"), "no line reference in: {stderr}");
}

#[test]
fn invalid_settings_exit_2() {
    // Unknown model.
    let (code, stderr) = exit_code(bin().args(["run", "--model", "gamma"]));
    assert_eq!(code, 2, "stderr: {stderr}");
    // Missing model.
    let (code, _) = exit_code(bin().args(["run", "--n", "50"]));
    assert_eq!(code, 2);
    // Downstream precondition violation (epsilon out of range).
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr) =
        exit_code(tiny_run_args(&mut bin(), 1, dir.path()).args(["--epsilon", "1.5"]));
    assert_eq!(code, 2, "stderr: {stderr}");
}

#[test]
fn runtime_failure_exits_1() {
    // Output directory cannot be created below a regular file.
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("nested");
    let (code, stderr) = exit_code(tiny_run_args(&mut bin(), 1, &out));
    assert_eq!(code, 1, "stderr: {stderr}");
}

#[test]
fn out_dir_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let mut cmd = bin();
    cmd.args([
        "run", "--model", "gaussian", "--n", "50", "--b", "4", "--steps", "40", "--batch", "16",
        "--seed", "3",
    ])
    .env(OUT_DIR_ENV, dir.path());
    run_ok(&mut cmd);
    assert!(dir.path().join("posterior.csv").exists());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn sweep_writes_one_row_per_grid_value() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin().args([
        "sweep",
        "--model",
        "gaussian",
        "--n",
        "50",
        "--b",
        "4",
        "--steps",
        "40",
        "--batch",
        "16",
        "--seed",
        "3",
        "--truncation",
        "20",
        "--parameter",
        "alpha",
        "--grid",
        "0.01,1,100",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]));
    let sweep = read(&dir.path().join("sweep.csv"));
    assert!(sweep.ends_with('\n'));
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines.len(), 4, "header + 3 rows");
    assert_eq!(lines[0], "parameter,value,nmse");
    assert!(lines[1].starts_with("alpha,"));
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert!(fields[2].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn sweep_empty_grid_exits_2() {
    let (code, stderr) = exit_code(bin().args([
        "sweep",
        "--model",
        "gaussian",
        "--parameter",
        "alpha",
        "--grid",
        "",
    ]));
    assert_eq!(code, 2, "stderr: {stderr}");

    let (code, _) = exit_code(bin().args([
        "sweep",
        "--model",
        "gaussian",
        "--parameter",
        "slope",
        "--grid",
        "1,2",
    ]));
    assert_eq!(code, 2, "unknown parameter should be a config error");
}

#[test]
fn bound_check_writes_grid_rows_with_exact_bound_column() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin().args([
        "bound-check",
        "--n-grid",
        "64,128",
        "--runs",
        "1",
        "--b",
        "2",
        "--steps",
        "40",
        "--batch",
        "32",
        "--model-mmd-samples",
        "300",
        "--seed",
        "5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]));
    let bound = read(&dir.path().join("bound.csv"));
    let lines: Vec<&str> = bound.lines().collect();
    assert_eq!(lines.len(), 3, "header + 2 rows");
    assert_eq!(lines[0], "n,mmd_estimate,bound_2_over_sqrt_n");
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let n: f64 = fields[0].parse().unwrap();
        let estimate: f64 = fields[1].parse().unwrap();
        let bound_col: f64 = fields[2].parse().unwrap();
        assert!(estimate.is_finite() && estimate >= 0.0);
        assert!((bound_col - 2.0 / n.sqrt()).abs() <= 1e-12);
    }
    let config: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("config.json"))).unwrap();
    assert_eq!(config["model"], "gandk");
    assert_eq!(config["runs"], 1);
}

#[test]
fn bound_check_rejects_non_gandk_model() {
    let (code, stderr) = exit_code(bin().args([
        "bound-check",
        "--model",
        "gaussian",
        "--n-grid",
        "64",
        "--runs",
        "1",
    ]));
    assert_eq!(code, 2, "stderr: {stderr}");
}
