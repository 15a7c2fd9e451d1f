//! End-to-end checks of the `stochsens` binary: exit codes, file formats,
//! and seeded reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochsens"))
}

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn usage_errors_exit_1() {
    assert_code(&run(&["simulate"]), 1); // missing required flags
    assert_code(&run(&["no-such-subcommand"]), 1);
    let model = models_dir().join("reversible_isomerization.model");
    let m = model.to_str().unwrap();
    // FD without h
    assert_code(
        &run(&[
            "sensitivity", "--model", m, "--output", "component:1", "--param", "1", "--method", "FD1_CRN",
            "--system-size", "5", "--t-final", "1", "--samples", "200",
        ]),
        1,
    );
    // h with GT
    assert_code(
        &run(&[
            "sensitivity", "--model", m, "--output", "component:1", "--param", "1", "--method", "GT",
            "--system-size", "5", "--t-final", "1", "--samples", "200", "--h", "0.01",
        ]),
        1,
    );
    // unknown method name
    assert_code(
        &run(&[
            "sensitivity", "--model", m, "--output", "component:1", "--param", "1", "--method", "XXX",
            "--system-size", "5", "--t-final", "1", "--samples", "200",
        ]),
        1,
    );
}

#[test]
fn model_parse_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.model");
    std::fs::write(&bad, "S1 S2 @ 0.3\n").unwrap();
    let out = run(&[
        "simulate", "--model", bad.to_str().unwrap(), "--system-size", "5", "--t-final", "1", "--paths", "10",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn simulate_prints_species_summary_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let model = models_dir().join("birth_death.model");
    let args = [
        "simulate", "--model", model.to_str().unwrap(), "--system-size", "10", "--t-final", "2", "--paths",
        "2000", "--seed", "9", "--out-dir", dir.path().to_str().unwrap(),
    ];
    let a = run(&args);
    assert_code(&a, 0);
    let text = String::from_utf8_lossy(&a.stdout).to_string();
    assert!(text.contains("species,mean,variance"), "{text}");
    // mean within 3 SE of E X(2) = 10: SE ~ sqrt(9.8/2000) ~ 0.07
    let mean: f64 = text
        .lines()
        .find(|l| l.starts_with("S,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!((mean - 10.0).abs() < 0.3, "mean {mean}");
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sensitivity_reports_relative_metrics_when_oracle_matches() {
    let dir = tempfile::tempdir().unwrap();
    let model = models_dir().join("reversible_isomerization.model");
    let out = run(&[
        "sensitivity", "--model", model.to_str().unwrap(), "--output", "component:1", "--param", "1",
        "--method", "CGT", "--system-size", "10", "--t-final", "10", "--samples", "2000", "--seed", "5",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("truth="), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("sensitivity.csv")).unwrap();
    assert!(csv.starts_with("# stochsens"));
    assert!(csv.contains("method,N,Ns,h,point,std_error,sample_variance,rsd,rb,re,truth"));
    let row = csv.lines().last().unwrap();
    assert!(row.starts_with("CGT,10,2000,,"), "row: {row}");
    // truth column = exact iso sensitivity at N = 10
    let truth: f64 = row.split(',').next_back().unwrap().parse().unwrap();
    assert!((truth - (-16.026951787996342)).abs() < 1e-9);
}

#[test]
fn scaling_study_runs_config_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let model = models_dir().join("reversible_isomerization.model");
    let cfg = dir.path().join("study.cfg");
    std::fs::write(
        &cfg,
        format!(
            "model = {}\noutput = component:1\nparam = 1\nt_final = 5\nh = 0.01\nseed = 11\n\
             n_grid = 5,10\nn_samples = 500\nmethods = GT\n",
            model.display()
        ),
    )
    .unwrap();
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    for out in [&out1, &out2] {
        let r = run(&["scaling-study", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert_code(&r, 0);
    }
    for file in ["scaling.csv", "slopes.csv"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out2.join(file)).unwrap();
        assert_eq!(a, b, "{file} not reproducible");
        assert!(a.starts_with(b"# stochsens"));
    }
    // GT-only config produces only GT rows
    let scaling = std::fs::read_to_string(out1.join("scaling.csv")).unwrap();
    let data_rows: Vec<&str> = scaling.lines().filter(|l| !l.starts_with('#') && !l.starts_with("model,")).collect();
    assert_eq!(data_rows.len(), 2);
    assert!(data_rows.iter().all(|r| r.contains(",GT,")));
}

#[test]
fn time_study_single_horizon_emits_rows_without_regression() {
    let dir = tempfile::tempdir().unwrap();
    let model = models_dir().join("reversible_isomerization.model");
    let cfg = dir.path().join("time.cfg");
    std::fs::write(
        &cfg,
        format!(
            "model = {}\noutput = component:1\nparam = 1\nsystem_size = 5\nt_grid = 2\nh = 0.01\n\
             seed = 3\nn_samples = 500\nmethods = GT,CGT\n",
            model.display()
        ),
    )
    .unwrap();
    let r = run(&["time-study", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_code(&r, 0);
    let csv = std::fs::read_to_string(dir.path().join("time_study.csv")).unwrap();
    assert!(csv.starts_with("# stochsens"));
    let data_rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#') && !l.starts_with("T,")).collect();
    assert_eq!(data_rows.len(), 2, "{csv}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.cfg");
    std::fs::write(&cfg, "model = x\nbogus = 1\n").unwrap();
    let r = run(&["scaling-study", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_code(&r, 2);
}

#[test]
fn dump_paths_writes_csv_per_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let model = models_dir().join("pure_death.model");
    let r = run(&[
        "simulate", "--model", model.to_str().unwrap(), "--system-size", "5", "--t-final", "50", "--paths", "2",
        "--seed", "1", "--dump-paths", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_code(&r, 0);
    for i in 0..2 {
        let text = std::fs::read_to_string(dir.path().join(format!("path_{i:05}.csv"))).unwrap();
        assert!(text.contains("time,channel,state_1"), "{text}");
        // pure death from 5 molecules: exactly 5 events, final state 0
        let events: Vec<&str> = text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("time,")).collect();
        assert_eq!(events.len(), 5);
        assert!(events.last().unwrap().ends_with(",0"));
    }
}
