//! End-to-end tests of the installed binary: exit codes, output files, and
//! byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

use granular_kinetics::cli::output::{parse_float_field, read_csv};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_granular-kinetics"))
}

fn write_conf(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn diagram_runs_produce_byte_identical_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "d.conf",
        "command = diagram\n[homogeneous]\nalpha = 0.61, 1.0\nrho_grid = 0:0.4:0.05\n",
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "diagram",
            "--config",
            conf.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", stderr_of(&res));
    }
    for name in ["diagram_alpha_0.61.csv", "diagram_alpha_1.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    assert!(out_a.join("manifest.txt").exists());

    // round trip: the file parses back to finite floats, u empty at rho = 0
    let (header, rows) = read_csv(&out_a.join("diagram_alpha_1.csv")).unwrap();
    assert_eq!(header, ["rho", "q", "u", "theta"]);
    assert_eq!(rows.len(), 9);
    assert_eq!(parse_float_field(&rows[0][2]).unwrap(), None);
    for row in &rows[1..] {
        let u = parse_float_field(&row[2]).unwrap().unwrap();
        assert!((0.0..=1.0).contains(&u));
    }
}

#[test]
fn simulate_writes_a_trajectory_with_one_based_cells() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "s.conf",
        "command = simulate\n[scenarios]\nname = traffic_light\nqueue_cells = 2\n[dynamics]\nhorizon = 2\nstride = 5\n",
    );
    let out = dir.path().join("out");
    let res = run(&[
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr_of(&res));
    let (header, rows) = read_csv(&out.join("trajectory.csv")).unwrap();
    assert_eq!(header, ["t", "cell", "rho", "q", "u", "theta"]);
    assert_eq!(rows[0][1], "1");
    assert_eq!(rows[9][1], "10");
    // queue cells are full, empty cells have no mean speed
    assert_eq!(parse_float_field(&rows[3][2]).unwrap(), Some(1.0));
    assert_eq!(parse_float_field(&rows[0][4]).unwrap(), None);
    let t_final = parse_float_field(&rows.last().unwrap()[0])
        .unwrap()
        .unwrap();
    assert!((t_final - 2.0).abs() < 1e-9, "{t_final}");
}

#[test]
fn verify_passes_on_a_quick_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "v.conf",
        "command = verify\n[verify]\ntrials = 4\nlevels = 3\ndeltas = 1e-2, 1e-3\nhorizon = 3\npairs = 16\nsamples = 200\n",
    );
    let out = dir.path().join("out");
    let res = run(&[
        "verify",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr_of(&res));
    let summary = std::fs::read_to_string(out.join("verify_summary.txt")).unwrap();
    assert!(summary.contains("overall: PASS"), "{summary}");
    for name in [
        "invariance.csv",
        "mass_balance.csv",
        "equicontinuity.csv",
        "convergence.csv",
        "dependence.csv",
        "manifest.txt",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
}

#[test]
fn config_value_errors_name_the_key_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "bad.conf",
        "command = simulate\n[scenarios]\nbeta = 1.5\n",
    );
    let res = run(&["simulate", "--config", conf.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr_of(&res);
    assert!(err.contains("scenarios.beta"), "{err}");
    assert!(err.contains("outside [0, 1]"), "{err}");
}

#[test]
fn unknown_keys_report_their_line_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "bad.conf",
        "command = simulate\n\n[dynamics]\ntypo_horizon = 3\n",
    );
    let res = run(&["simulate", "--config", conf.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr_of(&res);
    assert!(err.contains("bad.conf:4"), "{err}");
    assert!(err.contains("typo_horizon"), "{err}");
}

#[test]
fn oversized_steps_are_rejected_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "s.conf",
        "command = simulate\n[dynamics]\nhorizon = 30\ndt_max = 10\n",
    );
    let out = dir.path().join("out");
    let res = run(&[
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr_of(&res);
    assert!(err.contains("stability bound"), "{err}");
}

#[test]
fn unreachable_tolerance_exits_2_but_writes_the_diagram() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "d.conf",
        "command = diagram\n[homogeneous]\nalpha = 0.61\nrho_grid = 0.2:0.2:0.1\ntol = 1e-30\nmax_steps = 2000\n",
    );
    let out = dir.path().join("out");
    let res = run(&[
        "diagram",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr_of(&res));
    let err = stderr_of(&res);
    assert!(err.contains("residual"), "{err}");
    // evidence still written
    let (_, rows) = read_csv(&out.join("diagram_alpha_0.61.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(out.join("manifest.txt").exists());
}

#[test]
fn failed_verification_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // ascending perturbation sizes invert the expected gap ordering
    let conf = write_conf(
        dir.path(),
        "v.conf",
        "command = verify\n[verify]\ntrials = 2\nlevels = 3\ndeltas = 1e-4, 1e-2\nhorizon = 3\npairs = 8\nsamples = 100\n",
    );
    let out = dir.path().join("out");
    let res = run(&[
        "verify",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", stderr_of(&res));
    assert!(
        stderr_of(&res).contains("dependence"),
        "{}",
        stderr_of(&res)
    );
    let summary = std::fs::read_to_string(out.join("verify_summary.txt")).unwrap();
    assert!(summary.contains("overall: FAIL"), "{summary}");
}

#[test]
fn subcommand_and_config_command_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "d.conf",
        "command = diagram\n[homogeneous]\nalpha = 1\n",
    );
    let res = run(&["simulate", "--config", conf.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr_of(&res);
    assert!(err.contains("diagram") && err.contains("simulate"), "{err}");
}

#[test]
fn missing_config_file_exits_1() {
    let res = run(&["simulate", "--config", "/nonexistent/path.conf"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn log_level_env_var_enables_run_summaries_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "s.conf",
        "command = simulate\n[dynamics]\nhorizon = 1\n",
    );
    let out = dir.path().join("out");
    let res = bin()
        .args([
            "simulate",
            "--config",
            conf.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .env("GK_LOG", "info")
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", stderr_of(&res));
    let err = stderr_of(&res);
    assert!(
        err.contains("simulate"),
        "expected info logging, got: {err}"
    );
}
