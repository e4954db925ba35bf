use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("porofem-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn porofem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_porofem")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn theta_two_is_a_validation_error() {
    let o = porofem(&["run", "--theta", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("theta"));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = scratch("unknown");
    let file = dir.join("bad.cfg");
    fs::write(&file, "case = test1\nlevles = 2\n").unwrap();
    let o = porofem(&["run", "--config", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("levles"));
}

#[test]
fn single_level_csv_has_empty_rates() {
    let dir = scratch("single");
    let out = dir.to_str().unwrap();
    let o = porofem(&[
        "run",
        "--case",
        "test1",
        "--levels",
        "1",
        "--dt",
        "0.25",
        "--output",
        out,
        "--run-name",
        "r",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.join("r/errors.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,err_u_L2L2,err_u_L2H1,rate_u,err_p_L2L2,err_p_L2H1,rate_p");
    assert_eq!(lines.len(), 2);
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!((cells[3], cells[6]), ("", ""));
    for f in ["config.txt", "steps_n8.csv", "p_n8.svg", "p_exact.svg"] {
        assert!(dir.join("r").join(f).is_file(), "missing {f}");
    }
}

#[test]
fn flags_win_over_file_and_csv_is_reproducible() {
    let dir = scratch("flags");
    let file = dir.join("run.cfg");
    fs::write(&file, "# two levels\ncase = polynomial\nlevels = 3\ndt = 0.5\n").unwrap();
    let out = dir.to_str().unwrap();
    let mut csv = Vec::new();
    for name in ["a", "b"] {
        let o = porofem(&[
            "run",
            "--config",
            file.to_str().unwrap(),
            "--levels",
            "2",
            "--output",
            out,
            "--run-name",
            name,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        csv.push(fs::read(dir.join(name).join("errors.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
    assert_eq!(String::from_utf8_lossy(&csv[0]).lines().count(), 3);
    let echo = fs::read_to_string(dir.join("a/config.txt")).unwrap();
    assert!(echo.contains("levels = 2") && echo.contains("case = polynomial"));
}

#[test]
fn zero_problem_comparison_is_flat() {
    let dir = scratch("compare");
    let out = dir.to_str().unwrap();
    let o = porofem(&[
        "compare",
        "--case",
        "zero",
        "--n0",
        "4",
        "--dt",
        "0.25",
        "--output",
        out,
        "--run-name",
        "c",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.join("c/indicators.txt")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("multiphysics tv=0.000000e0"));
    assert!(lines[1].starts_with("naive tv=0.000000e0"));
    for f in ["p_multiphysics.svg", "p_naive.svg"] {
        assert!(dir.join("c").join(f).is_file());
    }
}

#[test]
fn probe_reports_are_deterministic() {
    let dir = scratch("probe");
    let out = dir.to_str().unwrap();
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let o = porofem(&["probe", "--seed", "7", "--output", out, "--run-name", name]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
        reports.push(fs::read(dir.join(name).join("probes.txt")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let text = String::from_utf8_lossy(&reports[0]).into_owned();
    assert!(text.lines().all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
    assert!(text.lines().any(|l| l.starts_with("PASS kappa_identities")));
}

#[test]
fn mesh_export_writes_each_level() {
    let dir = scratch("mesh");
    let out = dir.to_str().unwrap();
    let o = porofem(&["mesh", "--n0", "2", "--levels", "2", "--output", out, "--run-name", "m"]);
    assert!(o.status.success());
    let off = fs::read_to_string(dir.join("m/mesh_n4.off")).unwrap();
    let mut lines = off.lines();
    assert_eq!(lines.next(), Some("OFF"));
    assert_eq!(lines.next(), Some("25 32 0"));
    assert!(dir.join("m/mesh_n2.off").is_file());
}

#[test]
fn usage_errors_exit_with_validation_code() {
    assert_eq!(porofem(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(porofem(&["--help"]).status.code(), Some(0));
}

#[test]
fn key_spelling_is_accepted_as_flag() {
    let dir = scratch("spelling");
    let out = dir.to_str().unwrap();
    let o = porofem(&[
        "mesh",
        "--dev_sign",
        "positive",
        "--levels",
        "1",
        "--output",
        out,
        "--run_name",
        "m",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = fs::read_to_string(dir.join("m/config.txt")).unwrap();
    assert!(echo.contains("dev_sign = positive"));
}
