//! Implementations behind the `stochsens` binary's subcommands.
//!
//! The binary itself only parses arguments and maps [`CliError`] onto exit
//! codes (1 usage, 2 model parse, 3 runtime); everything observable — output
//! files, stdout summaries, determinism — lives here where tests can reach
//! it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{self, ConfigError};
use crate::estimators::{self, Method};
use crate::girsanov::gt_weight;
use crate::model::{parse_network, ModelError, ReactionNetwork, SystemInstance};
use crate::oracles;
use crate::paths::simulate_coupled;
use crate::streams::{derive_seed, open_stream, StreamKey};
use crate::study::{self, OutputFn, TruthSource};
use crate::VERSION;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Fixed exit codes: 1 usage, 2 model/config parse, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Model(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<study::StudyError> for CliError {
    fn from(e: study::StudyError) -> Self {
        match e {
            study::StudyError::Model(m) => CliError::Model(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_model(path: &Path) -> Result<ReactionNetwork, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read model file {}: {e}", path.display())))?;
    Ok(parse_network(&text)?)
}

fn ensure_out_dir(out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", out_dir.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn header(command: &str, seed: u64, config_lines: &[String]) -> Vec<String> {
    let mut lines = vec![format!("stochsens {VERSION}"), format!("command: {command}"), format!("seed: {seed}")];
    lines.extend(config_lines.iter().cloned());
    lines
}

/// `simulate`: sample paths, optionally dump them, and print per-species
/// mean and variance at the final time.
#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    model_path: &Path,
    system_size: u64,
    t_final: f64,
    n_paths: usize,
    seed: u64,
    dump_paths: bool,
    out_dir: &Path,
    stdout: &mut impl Write,
) -> Result<(), CliError> {
    let network = load_model(model_path)?;
    let inst = SystemInstance::new(network.clone(), system_size)?;
    if n_paths == 0 {
        return Err(CliError::Usage("need at least one path".into()));
    }
    ensure_out_dir(out_dir)?;

    let trajectories: Result<Vec<_>, _> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut stream = open_stream(StreamKey::direct(seed, i));
            crate::paths::simulate_direct(&inst, None, t_final, &mut stream)
        })
        .collect();
    let trajectories = trajectories.map_err(runtime)?;

    let config_lines = vec![
        format!("model={}", model_path.display()),
        format!("system_size={system_size}"),
        format!("t_final={t_final}"),
        format!("n_paths={n_paths}"),
    ];
    if dump_paths {
        for (i, traj) in trajectories.iter().enumerate() {
            let mut buf = Vec::new();
            for line in header("simulate", seed, &config_lines) {
                writeln!(&mut buf, "# {line}").map_err(runtime)?;
            }
            writeln!(&mut buf, "# trajectory: {i}").map_err(runtime)?;
            writeln!(
                &mut buf,
                "# initial_state: {}",
                traj.initial_state().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            )
            .map_err(runtime)?;
            traj.write_csv(&mut buf).map_err(runtime)?;
            write_file(&out_dir.join(format!("path_{i:05}.csv")), &buf)?;
        }
    }

    writeln!(stdout, "# stochsens {VERSION} simulate seed={seed}").map_err(runtime)?;
    writeln!(stdout, "species,mean,variance").map_err(runtime)?;
    let n = n_paths as f64;
    for (s, name) in network.species.iter().enumerate() {
        let values: Vec<f64> = trajectories.iter().map(|t| t.final_state()[s] as f64).collect();
        let mean = values.iter().sum::<f64>() / n;
        let var = if n > 1.0 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        writeln!(stdout, "{name},{mean},{var}").map_err(runtime)?;
    }
    Ok(())
}

/// Truth for `sensitivity` when a built-in oracle matches the model.
fn builtin_truth(
    network: &ReactionNetwork,
    output: OutputFn,
    param_index: usize,
    n: u64,
    t_final: f64,
) -> Option<f64> {
    let x0 = &network.initial_concentration;
    match oracles::known_model(network)? {
        oracles::KnownModel::BirthDeath => {
            if output != OutputFn::Component(0) {
                return None;
            }
            let p = oracles::BirthDeathParams {
                c1: network.reactions[0].rate_const,
                c2: network.reactions[1].rate_const,
                x0: x0[0],
                n,
                t: t_final,
            };
            match param_index {
                0 => Some(oracles::bd_sens_c1(&p)),
                1 => Some(oracles::bd_sens_c2(&p)),
                _ => None,
            }
        }
        oracles::KnownModel::ReversibleIsomerization => {
            if param_index != 0 {
                return None;
            }
            let d = oracles::IsoDistribution::new(
                (x0[0] * n as f64).round() as u64,
                (x0[1] * n as f64).round() as u64,
                network.reactions[0].rate_const,
                network.reactions[1].rate_const,
                t_final,
            );
            Some(d.sensitivity_c1(|s| output.eval(s, n)))
        }
    }
}

/// `sensitivity`: one estimator at one design point; prints the summary and
/// appends a CSV row.
#[allow(clippy::too_many_arguments)]
pub fn cmd_sensitivity(
    model_path: &Path,
    output: OutputFn,
    param_1based: usize,
    method: Method,
    system_size: u64,
    t_final: f64,
    n_samples: usize,
    h: Option<f64>,
    seed: u64,
    out_dir: &Path,
    stdout: &mut impl Write,
) -> Result<(), CliError> {
    if param_1based == 0 {
        return Err(CliError::Usage("reaction indices are 1-based".into()));
    }
    let param_index = param_1based - 1;
    let network = load_model(model_path)?;
    if param_index >= network.n_reactions() {
        return Err(CliError::Usage(format!(
            "param {param_1based} out of range; model has {} reactions",
            network.n_reactions()
        )));
    }
    let is_fd = method.fd_kind().is_some();
    let h = match (is_fd, h) {
        (true, Some(h)) => Some(h),
        (true, None) => return Err(CliError::Usage(format!("method {} requires --h", method.label()))),
        (false, Some(_)) => {
            return Err(CliError::Usage(format!("--h is meaningless for {}", method.label())))
        }
        (false, None) => None,
    };
    let inst = SystemInstance::new(network.clone(), system_size)?;
    ensure_out_dir(out_dir)?;

    let summary = match method.fd_kind() {
        None => {
            let cell = derive_seed(derive_seed(seed, system_size), 0);
            let samples: Result<Vec<(f64, f64)>, CliError> = (0..n_samples as u64)
                .into_par_iter()
                .map(|i| {
                    let mut stream = open_stream(StreamKey::direct(cell, i));
                    let traj =
                        crate::paths::simulate_direct(&inst, None, t_final, &mut stream).map_err(runtime)?;
                    let fv = output.eval(traj.final_state(), system_size);
                    let z = gt_weight(&traj, param_index, t_final).map_err(runtime)?.value;
                    Ok((fv, z))
                })
                .collect();
            let (f, z): (Vec<f64>, Vec<f64>) = samples?.into_iter().unzip();
            match method {
                Method::Gt => {
                    let products: Vec<f64> = f.iter().zip(&z).map(|(a, b)| a * b).collect();
                    estimators::estimate_gt(&products).map_err(runtime)?
                }
                _ => estimators::estimate_cgt(&f, &z).map_err(runtime)?,
            }
        }
        Some((coupling, order)) => {
            let h = h.unwrap();
            let cell = derive_seed(derive_seed(seed, system_size), 1 + method as u64);
            let quotients: Result<Vec<f64>, CliError> = (0..n_samples as u64)
                .into_par_iter()
                .map(|i| {
                    let pair = simulate_coupled(&inst, param_index, h, coupling, order, t_final, cell, i)
                        .map_err(runtime)?;
                    Ok(pair.quotient(|s| output.eval(s, system_size)))
                })
                .collect();
            estimators::fd_summary_from_quotients(&quotients?, coupling, order, h).map_err(runtime)?
        }
    };

    let truth = builtin_truth(&network, output, param_index, system_size, t_final);
    let summary = match truth {
        Some(s) if s != 0.0 => estimators::relative_metrics(summary, s).map_err(runtime)?,
        _ => summary,
    };

    let config_lines = vec![
        format!("model={}", model_path.display()),
        format!("output={}", output.label()),
        format!("param={param_1based}"),
        format!("method={}", method.label()),
        format!("system_size={system_size}"),
        format!("t_final={t_final}"),
        format!("n_samples={n_samples}"),
        format!("h={}", h.map(|v| v.to_string()).unwrap_or_default()),
    ];
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut buf = Vec::new();
    for line in header("sensitivity", seed, &config_lines) {
        writeln!(&mut buf, "# {line}").map_err(runtime)?;
    }
    writeln!(&mut buf, "method,N,Ns,h,point,std_error,sample_variance,rsd,rb,re,truth").map_err(runtime)?;
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        method.label(),
        system_size,
        summary.n_samples,
        opt(summary.h),
        summary.point,
        summary.std_error,
        summary.sample_variance,
        opt(summary.rsd),
        opt(summary.rb),
        opt(summary.re),
        opt(truth),
    );
    writeln!(&mut buf, "{row}").map_err(runtime)?;
    write_file(&out_dir.join("sensitivity.csv"), &buf)?;

    writeln!(stdout, "# stochsens {VERSION} sensitivity seed={seed}").map_err(runtime)?;
    writeln!(
        stdout,
        "{} point={} std_error={} variance={}",
        method.label(),
        summary.point,
        summary.std_error,
        summary.sample_variance
    )
    .map_err(runtime)?;
    if let Some(t) = truth {
        writeln!(stdout, "truth={t} rsd={} rb={} re={}", opt(summary.rsd), opt(summary.rb), opt(summary.re))
            .map_err(runtime)?;
    }
    writeln!(stdout, "row: {row}").map_err(runtime)?;
    Ok(())
}

/// `scaling-study`: run the sweep described by a config file and write
/// `scaling.csv` + `slopes.csv`.
pub fn cmd_scaling_study(
    config_path: &Path,
    seed_override: Option<u64>,
    out_dir: &Path,
    stdout: &mut impl Write,
) -> Result<(), CliError> {
    let mut file = config::load_scaling_config(config_path)?;
    if let Some(seed) = seed_override {
        file.config.seed = seed;
    }
    let network = load_model(&file.model_path)?;
    ensure_out_dir(out_dir)?;

    let report = study::run_scaling_study(&network, &file.config)?;

    let mut lines = header("scaling-study", file.config.seed, &config::scaling_header(&file));
    lines.push(format!("truth_source: {}", report.truth_source.label()));
    let model_label = file.model_path.display().to_string();

    let mut buf = Vec::new();
    study::write_scaling_csv(&report, &model_label, file.config.output, file.config.slope_window, &lines, &mut buf)
        .map_err(runtime)?;
    write_file(&out_dir.join("scaling.csv"), &buf)?;

    let mut buf = Vec::new();
    study::write_slopes_csv(&report, &lines, &mut buf).map_err(runtime)?;
    write_file(&out_dir.join("slopes.csv"), &buf)?;

    writeln!(stdout, "# stochsens {VERSION} scaling-study seed={}", file.config.seed).map_err(runtime)?;
    writeln!(stdout, "truth_source: {}", report.truth_source.label()).map_err(runtime)?;
    writeln!(stdout, "method,slope,intercept,n_points").map_err(runtime)?;
    for s in &report.slopes {
        writeln!(stdout, "{},{:.4},{:.4},{}", s.method.label(), s.slope, s.intercept, s.n_points)
            .map_err(runtime)?;
    }
    if report.truth_source == TruthSource::None {
        writeln!(stdout, "(indicator output: slopes fitted on raw variance)").map_err(runtime)?;
    }
    Ok(())
}

/// `time-study`: run the fixed-N horizon sweep and write `time_study.csv`.
pub fn cmd_time_study(
    config_path: &Path,
    seed_override: Option<u64>,
    out_dir: &Path,
    stdout: &mut impl Write,
) -> Result<(), CliError> {
    let mut file = config::load_time_study_config(config_path)?;
    if let Some(seed) = seed_override {
        file.config.seed = seed;
    }
    let network = load_model(&file.model_path)?;
    ensure_out_dir(out_dir)?;

    let rows = study::run_time_study(&network, &file.config)?;
    let lines = header("time-study", file.config.seed, &config::time_study_header(&file));
    let mut buf = Vec::new();
    study::write_time_csv(&rows, &lines, &mut buf).map_err(runtime)?;
    write_file(&out_dir.join("time_study.csv"), &buf)?;

    writeln!(stdout, "# stochsens {VERSION} time-study seed={}", file.config.seed).map_err(runtime)?;
    writeln!(stdout, "T,method,point,variance").map_err(runtime)?;
    for r in &rows {
        writeln!(stdout, "{},{},{},{}", r.t, r.method.label(), r.point, r.variance).map_err(runtime)?;
    }
    Ok(())
}

/// Shared `--workers` handling: run `body` inside a pool of the requested
/// size (0 = library default). Determinism does not depend on the choice.
pub fn with_worker_pool<T: Send>(workers: usize, body: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if workers == 0 {
        return Ok(body());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(body))
}

/// Expand `~` is not supported; keep paths literal. Helper for the binary.
pub fn out_dir_or_default(dir: Option<PathBuf>) -> PathBuf {
    dir.unwrap_or_else(|| PathBuf::from("."))
}
