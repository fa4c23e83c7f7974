//! End-to-end CLI behavior: exit codes, schema diagnostics, and the shape
//! of the report files.

use std::path::{Path, PathBuf};
use std::process::Output;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_reserve")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("reserve_cli_{}_{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    std::process::Command::new(binary())
        .args(args)
        .output()
        .expect("spawn reserve")
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

const LINEAR_CONFIG: &str = "\
[model]
basis = linear
x = 55
delta_d = 1.0
nu0 = [-2.0, -0.05, -2.3, 0.01]
mu = [0.01, 0.002, -0.01, 0.003]
sigma = [[0.004, 0.0008, 0, 0], [0.0008, 0.004, 0.0008, 0], [0, 0.0008, 0.004, 0.0008], [0, 0, 0.0008, 0.004]]

[contract]
T = 10
r = 0.02

[mc]
paths = 500
dt = 0.1
seed = 7

[pde]
dz = 0.2
dt = 0.1
moments = 3

[portfolio]
active = 100
quantiles = [0.5, 0.95]
";

const EXP3_CONFIG: &str = "\
[model]
basis = exp3
x = 55
delta_d = 1.0
nu0 = [-2.0, -0.05, 0.02, -2.3, 0.01, 0.03]
mu = [0.01, 0.002, 0, -0.01, 0.003, 0.001]
sigma = [[0.004, 0, 0, 0, 0, 0], [0, 0.004, 0, 0, 0, 0], [0, 0, 0.004, 0, 0, 0], [0, 0, 0, 0.004, 0, 0], [0, 0, 0, 0, 0.004, 0], [0, 0, 0, 0, 0, 0.004]]

[contract]
T = 10
r = 0.02

[mc]
paths = 500
dt = 0.1
seed = 7

[pde]
dz = 0.2
dt = 0.1
moments = 3
";

const SERIES: &str = "\
year,nu_1_1,nu_1_2,nu_2_1,nu_2_2
2000,-2.00,-0.05,-2.30,0.01
2001,-1.98,-0.06,-2.31,0.02
2002,-1.99,-0.04,-2.29,0.01
2003,-1.97,-0.05,-2.33,0.03
";

#[test]
fn fit_exactly_linear_series_gives_zero_covariance() {
    let dir = workdir("fit_linear");
    let series = dir.join("series.csv");
    write(
        &series,
        "year,nu_1_1,nu_1_2\n2000,0,0\n2001,1,2\n2002,2,4\n2003,3,6\n",
    );
    let out = run(&["fit", series.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let fit = std::fs::read_to_string(dir.join("fit.json")).unwrap();
    assert!(fit.contains("\"mu\": [1.00000, 2.00000]"), "{fit}");
    assert!(fit.contains("\"sigma\": [[0.00000, 0.00000], [0.00000, 0.00000]]"), "{fit}");
}

#[test]
fn fit_two_row_series_exits_with_validation_status() {
    let dir = workdir("fit_short");
    let series = dir.join("series.csv");
    write(&series, "year,nu_1_1\n2000,0\n2001,1\n");
    let out = run(&["fit", series.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("insufficient data"), "{err}");
}

#[test]
fn fit_header_count_mismatch_names_the_count() {
    let dir = workdir("fit_header");
    let series = dir.join("series.csv");
    // nu_2_2 present implies n = m = 2, so 4 parameter columns expected.
    write(&series, "year,nu_1_1,nu_2_2\n2000,0,0\n2001,1,1\n2002,2,2\n");
    let out = run(&["fit", series.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("2 parameter columns") && err.contains("4"),
        "diagnostic should name the counts: {err}"
    );
}

#[test]
fn unknown_config_key_is_rejected_with_path() {
    let dir = workdir("badkey");
    let cfg = dir.join("config.txt");
    write(&cfg, &LINEAR_CONFIG.replace("seed = 7", "sead = 7"));
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mc.sead") || err.contains("mc.seed"), "{err}");
}

#[test]
fn out_of_range_value_is_rejected_before_computation() {
    let dir = workdir("badval");
    let cfg = dir.join("config.txt");
    write(&cfg, &LINEAR_CONFIG.replace("dt = 0.1\nseed = 7", "dt = 0\nseed = 7"));
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mc"), "{err}");
}

#[test]
fn compare_linear_emits_three_representations() {
    let dir = workdir("cmp_linear");
    let cfg = dir.join("config.txt");
    write(&cfg, LINEAR_CONFIG);
    let out = run(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["dist_full.csv", "dist_markov2d.csv", "dist_mimicked1d.csv"] {
        assert!(dir.join(file).exists(), "missing {file}");
    }
    let ks = std::fs::read_to_string(dir.join("ks.csv")).unwrap();
    assert_eq!(ks.lines().count(), 4, "header plus three pairs: {ks}");
    assert!(ks.contains("full_vs_markov2d"));
    assert!(ks.contains("full_vs_mimicked1d"));
    assert!(ks.contains("markov2d_vs_mimicked1d"));

    let mc = std::fs::read_to_string(dir.join("mc_moments.csv")).unwrap();
    assert_eq!(mc.lines().count(), 10, "header plus 3 reps x 3 moments: {mc}");
}

#[test]
fn compare_exp3_emits_two_representations() {
    let dir = workdir("cmp_exp3");
    let cfg = dir.join("config.txt");
    write(&cfg, EXP3_CONFIG);
    let out = run(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("dist_full.csv").exists());
    assert!(dir.join("dist_mimicked1d.csv").exists());
    assert!(
        !dir.join("dist_markov2d.csv").exists(),
        "exp3 basis has no exact 2-D representation"
    );
    let ks = std::fs::read_to_string(dir.join("ks.csv")).unwrap();
    assert_eq!(ks.lines().count(), 2, "header plus one pair: {ks}");
    assert!(ks.contains("full_vs_mimicked1d"));
}

#[test]
fn solve_emits_one_row_per_moment() {
    let dir = workdir("solve");
    let cfg = dir.join("config.txt");
    write(&cfg, LINEAR_CONFIG);
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let moments = std::fs::read_to_string(dir.join("moments.csv")).unwrap();
    let rows: Vec<&str> = moments.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0], "n,method,value,ci_low,ci_high");
    for (i, row) in rows[1..].iter().enumerate() {
        assert!(row.starts_with(&format!("{},pde,", i + 1)), "{row}");
        assert!(row.ends_with(",,"), "PDE rows have empty CI columns: {row}");
    }
}

#[test]
fn portfolio_with_no_active_policies_reports_zeros() {
    let dir = workdir("portfolio_zero");
    let cfg = dir.join("config.txt");
    write(&cfg, &LINEAR_CONFIG.replace("active = 100", "active = 0"));
    let out = run(&[
        "portfolio",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report = std::fs::read_to_string(dir.join("portfolio.csv")).unwrap();
    assert!(report.contains("active,0"));
    assert!(report.contains("reserve,0.00000"));
    for line in report.lines().filter(|l| l.starts_with("quantile_")) {
        assert!(line.ends_with(",0.00000"), "{line}");
    }
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = workdir("seed_override");
    let cfg = dir.join("config.txt");
    write(&cfg, LINEAR_CONFIG);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let out_c = dir.join("c");
    for (out, seed) in [(&out_a, "7"), (&out_b, "8"), (&out_c, "8")] {
        let res = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success());
    }
    let a = std::fs::read(out_a.join("moments.csv")).unwrap();
    let b = std::fs::read(out_b.join("moments.csv")).unwrap();
    let c = std::fs::read(out_c.join("moments.csv")).unwrap();
    assert_ne!(a, b, "different seeds must change the sample");
    assert_eq!(b, c, "same seed must reproduce the report");
}

#[test]
fn unknown_command_and_missing_config_fail_cleanly() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn fit_accepts_the_documented_series_schema() {
    let dir = workdir("fit_ok");
    let series = dir.join("series.csv");
    write(&series, SERIES);
    let out = run(&["fit", series.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dimension 4"), "{stdout}");
}
