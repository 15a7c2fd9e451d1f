//! Experiment harness: system-size sweeps with RSD slope extraction, time
//! sweeps, and the asymptotic cost calculators.
//!
//! Each `(N, method-group)` cell derives its own sub-seed from the master
//! seed, and trajectories inside a cell are keyed by trajectory index, so a
//! report is a pure function of its configuration: reruns at any worker
//! count produce byte-identical CSV.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::estimators::{self, EstimateSummary, Method};
use crate::girsanov::gt_weight;
use crate::model::{ModelError, ReactionNetwork, SystemInstance};
use crate::oracles::{self, KnownModel};
use crate::paths::{simulate_coupled, simulate_direct, SimError};
use crate::streams::{derive_seed, open_stream, StreamKey};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimator(#[from] crate::estimators::EstimatorError),
    #[error(transparent)]
    Girsanov(#[from] crate::girsanov::GirsanovError),
    #[error("slope fit needs at least 2 points in the window, got {0}")]
    TooFewPoints(usize),
    #[error("slope fit requires positive values, got {0}")]
    NonpositiveValue(f64),
    #[error("N grid must be strictly increasing")]
    GridNotIncreasing,
    #[error("config: {0}")]
    BadConfig(String),
}

/// The four output functions of the scaling experiments. Species indices are
/// 0-based; the harness owns the explicit N-dependence of `sin(x_i / N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFn {
    /// f(x) = x_i
    Component(usize),
    /// f(x) = x_i^2
    Square(usize),
    /// f(x) = sin(x_i / N)
    SinScaled(usize),
    /// f(x) = 1 if x_i <= x_k
    IndicatorLeq(usize, usize),
}

impl OutputFn {
    pub fn eval(&self, state: &[i64], system_size: u64) -> f64 {
        match *self {
            OutputFn::Component(i) => state[i] as f64,
            OutputFn::Square(i) => (state[i] as f64).powi(2),
            OutputFn::SinScaled(i) => (state[i] as f64 / system_size as f64).sin(),
            OutputFn::IndicatorLeq(i, k) => {
                if state[i] <= state[k] {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Canonical text form used in config files and CSV:
    /// `component:1`, `square:1`, `sin_scaled:1`, `indicator_leq:1:2`
    /// with 1-based species indices.
    pub fn label(&self) -> String {
        match *self {
            OutputFn::Component(i) => format!("component:{}", i + 1),
            OutputFn::Square(i) => format!("square:{}", i + 1),
            OutputFn::SinScaled(i) => format!("sin_scaled:{}", i + 1),
            OutputFn::IndicatorLeq(i, k) => format!("indicator_leq:{}:{}", i + 1, k + 1),
        }
    }

    pub fn parse(s: &str) -> Option<OutputFn> {
        let (kind, rest) = s.split_once(':')?;
        let one_based = |t: &str| t.trim().parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1);
        match kind.trim() {
            "component" => Some(OutputFn::Component(one_based(rest)?)),
            "square" => Some(OutputFn::Square(one_based(rest)?)),
            "sin_scaled" => Some(OutputFn::SinScaled(one_based(rest)?)),
            "indicator_leq" => {
                let (a, b) = rest.split_once(':')?;
                Some(OutputFn::IndicatorLeq(one_based(a)?, one_based(b)?))
            }
            _ => None,
        }
    }

    fn is_indicator(&self) -> bool {
        matches!(self, OutputFn::IndicatorLeq(..))
    }
}

/// Configuration of a system-size scaling sweep.
#[derive(Debug, Clone)]
pub struct ScalingConfig {
    pub output: OutputFn,
    /// 0-based reaction index of the perturbed parameter.
    pub param_index: usize,
    pub t_final: f64,
    pub h: f64,
    pub seed: u64,
    pub n_grid: Vec<u64>,
    pub n_samples: usize,
    pub methods: Vec<Method>,
    /// Fraction of the largest N values used by the slope fit.
    pub slope_window: f64,
}

impl ScalingConfig {
    fn validate(&self) -> Result<(), StudyError> {
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(StudyError::GridNotIncreasing);
        }
        if self.n_grid.is_empty() {
            return Err(StudyError::BadConfig("empty N grid".into()));
        }
        if self.n_samples < 100 {
            return Err(StudyError::BadConfig("n_samples must be at least 100".into()));
        }
        if !(0.0 < self.slope_window && self.slope_window <= 1.0) {
            return Err(StudyError::BadConfig("slope_window must lie in (0, 1]".into()));
        }
        if self.methods.is_empty() {
            return Err(StudyError::BadConfig("no methods selected".into()));
        }
        Ok(())
    }
}

/// One `(N, method)` cell of a scaling report.
#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub n: u64,
    pub method: Method,
    pub point: f64,
    pub std_error: f64,
    pub raw_variance: f64,
    /// sd / |truth|; absent for the indicator output.
    pub rsd: Option<f64>,
    /// Relative bias; present only when a closed-form oracle supplies truth.
    pub rb: Option<f64>,
    pub h: Option<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone)]
pub struct SlopeFit {
    pub method: Method,
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub slopes: Vec<SlopeFit>,
    /// What the RSD was normalized by, for the record.
    pub truth_source: TruthSource,
}

/// Where the RSD normalizer came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSource {
    /// Built-in closed-form oracle (relative bias is reported too).
    Oracle,
    /// The per-N centered point estimate from the shared path set (no
    /// closed form exists; the unbiased estimate stands in for the truth).
    Estimated,
    /// Indicator output: raw variance only.
    None,
}

impl TruthSource {
    pub fn label(self) -> &'static str {
        match self {
            TruthSource::Oracle => "oracle",
            TruthSource::Estimated => "estimated",
            TruthSource::None => "none",
        }
    }
}

fn oracle_truth(
    net: &ReactionNetwork,
    output: OutputFn,
    param_index: usize,
    x0: &[f64],
    n: u64,
    t: f64,
) -> Option<f64> {
    match oracles::known_model(net)? {
        KnownModel::BirthDeath => {
            if output != OutputFn::Component(0) {
                return None;
            }
            let p = oracles::BirthDeathParams {
                c1: net.reactions[0].rate_const,
                c2: net.reactions[1].rate_const,
                x0: x0[0],
                n,
                t,
            };
            match param_index {
                0 => Some(oracles::bd_sens_c1(&p)),
                1 => Some(oracles::bd_sens_c2(&p)),
                _ => None,
            }
        }
        KnownModel::ReversibleIsomerization => {
            if param_index != 0 {
                return None;
            }
            let x10 = (x0[0] * n as f64).round() as u64;
            let x20 = (x0[1] * n as f64).round() as u64;
            let d = oracles::IsoDistribution::new(
                x10,
                x20,
                net.reactions[0].rate_const,
                net.reactions[1].rate_const,
                t,
            );
            Some(d.sensitivity_c1(|state| output.eval(state, n)))
        }
    }
}

/// Group tags for per-cell seed derivation; GT and CGT share tag 0 so they
/// consume one common path set.
fn method_group(m: Method) -> u64 {
    match m {
        Method::Gt | Method::Cgt => 0,
        Method::Fd1Irn => 1,
        Method::Fd1Crn => 2,
        Method::Fd1Crp => 3,
        Method::Fd2Irn => 4,
        Method::Fd2Crn => 5,
        Method::Fd2Crp => 6,
    }
}

fn cell_seed(master: u64, n: u64, group: u64) -> u64 {
    derive_seed(derive_seed(master, n), group)
}

/// Simulate the shared GT/CGT path set at one N and return `(f, z)` pairs in
/// trajectory order.
fn gt_cgt_samples(
    inst: &SystemInstance,
    output: OutputFn,
    param_index: usize,
    t_final: f64,
    seed: u64,
    n_samples: usize,
) -> Result<(Vec<f64>, Vec<f64>), StudyError> {
    let n = inst.system_size();
    let pairs: Result<Vec<(f64, f64)>, StudyError> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut stream = open_stream(StreamKey::direct(seed, i));
            let traj = simulate_direct(inst, None, t_final, &mut stream)?;
            let fv = output.eval(traj.final_state(), n);
            let z = gt_weight(&traj, param_index, t_final)?.value;
            Ok((fv, z))
        })
        .collect();
    let pairs = pairs?;
    Ok(pairs.into_iter().unzip())
}

#[allow(clippy::too_many_arguments)]
fn fd_quotients(
    inst: &SystemInstance,
    method: Method,
    output: OutputFn,
    param_index: usize,
    h: f64,
    t_final: f64,
    seed: u64,
    n_samples: usize,
) -> Result<Vec<f64>, StudyError> {
    let (coupling, order) = method.fd_kind().expect("FD method");
    let n = inst.system_size();
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let pair = simulate_coupled(inst, param_index, h, coupling, order, t_final, seed, i)?;
            Ok(pair.quotient(|state| output.eval(state, n)))
        })
        .collect()
}

/// Run the full system-size sweep.
///
/// GT and CGT at each N share one simulated path set; every FD variant draws
/// its own coupled pairs. RSD is normalized by the closed-form oracle when
/// the network has one, by the shared centered point estimate otherwise, and
/// is omitted for the indicator output, which reports raw variance alone.
pub fn run_scaling_study(network: &ReactionNetwork, config: &ScalingConfig) -> Result<ScalingReport, StudyError> {
    config.validate()?;
    let x0 = network.initial_concentration.clone();
    let wants_paths = config.methods.iter().any(|&m| m.fd_kind().is_none());
    let has_oracle = !config.output.is_indicator()
        && oracle_truth(network, config.output, config.param_index, &x0, config.n_grid[0], config.t_final)
            .is_some();
    let truth_source = if config.output.is_indicator() {
        TruthSource::None
    } else if has_oracle {
        TruthSource::Oracle
    } else {
        TruthSource::Estimated
    };

    let mut rows = Vec::new();
    for &n in &config.n_grid {
        let inst = SystemInstance::with_initial(network.clone(), n, &x0)?;

        let shared = if wants_paths || truth_source == TruthSource::Estimated {
            let seed = cell_seed(config.seed, n, 0);
            Some(gt_cgt_samples(&inst, config.output, config.param_index, config.t_final, seed, config.n_samples)?)
        } else {
            None
        };

        let truth: Option<f64> = match truth_source {
            TruthSource::Oracle => {
                oracle_truth(network, config.output, config.param_index, &x0, n, config.t_final)
            }
            // The centered point has the same expectation as the plain GT
            // mean but far lower noise, so it is the better stand-in truth.
            TruthSource::Estimated => shared.as_ref().map(|(f, z)| {
                let centered = estimators::cgt_samples(f, z);
                centered.iter().sum::<f64>() / centered.len() as f64
            }),
            TruthSource::None => None,
        };

        for &method in &config.methods {
            let summary: EstimateSummary = match method {
                Method::Gt => {
                    let (f, z) = shared.as_ref().expect("shared path set");
                    let products: Vec<f64> = f.iter().zip(z).map(|(a, b)| a * b).collect();
                    estimators::estimate_gt(&products)?
                }
                Method::Cgt => {
                    let (f, z) = shared.as_ref().expect("shared path set");
                    estimators::estimate_cgt(f, z)?
                }
                fd => {
                    let group = method_group(fd);
                    let seed = cell_seed(config.seed, n, group);
                    let quotients = fd_quotients(
                        &inst,
                        fd,
                        config.output,
                        config.param_index,
                        config.h,
                        config.t_final,
                        seed,
                        config.n_samples,
                    )?;
                    let (coupling, order) = fd.fd_kind().unwrap();
                    estimators::fd_summary_from_quotients(&quotients, coupling, order, config.h)?
                }
            };
            let rsd = match truth {
                Some(s) if s != 0.0 => Some(summary.sample_variance.sqrt() / s.abs()),
                _ => None,
            };
            let rb = match (truth_source, truth) {
                (TruthSource::Oracle, Some(s)) if s != 0.0 => Some((summary.point - s) / s.abs()),
                _ => None,
            };
            rows.push(ScalingRow {
                n,
                method,
                point: summary.point,
                std_error: summary.std_error,
                raw_variance: summary.sample_variance,
                rsd,
                rb,
                h: summary.h,
                n_samples: summary.n_samples,
            });
        }
    }

    // Slope of log(rsd) vs log(N) per method (log raw variance for the
    // indicator output), over the largest-window fraction of the grid.
    let mut slopes = Vec::new();
    if config.n_grid.len() >= 2 {
        for &method in &config.methods {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == method)
                .map(|r| (r.n as f64, r.rsd.unwrap_or(r.raw_variance)))
                .collect();
            match fit_slope(&points, config.slope_window) {
                Ok((slope, intercept)) => {
                    let used = window_len(points.len(), config.slope_window);
                    slopes.push(SlopeFit { method, slope, intercept, n_points: used });
                }
                Err(StudyError::TooFewPoints(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }

    Ok(ScalingReport { rows, slopes, truth_source })
}

fn window_len(total: usize, window: f64) -> usize {
    ((total as f64 * window).ceil() as usize).clamp(2.min(total), total)
}

/// Ordinary least squares in log-log coordinates over the largest
/// `ceil(window * count)` abscissas. Returns `(slope, intercept)`.
pub fn fit_slope(points: &[(f64, f64)], window: f64) -> Result<(f64, f64), StudyError> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite abscissas"));
    let keep = window_len(pts.len(), window);
    if pts.len() < 2 || keep < 2 {
        return Err(StudyError::TooFewPoints(pts.len()));
    }
    let tail = &pts[pts.len() - keep..];
    let mut xs = Vec::with_capacity(keep);
    let mut ys = Vec::with_capacity(keep);
    for &(x, y) in tail {
        if y <= 0.0 {
            return Err(StudyError::NonpositiveValue(y));
        }
        xs.push(x.ln());
        ys.push(y.ln());
    }
    let n = keep as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Configuration of a fixed-N, varying-horizon study.
#[derive(Debug, Clone)]
pub struct TimeStudyConfig {
    pub output: OutputFn,
    pub param_index: usize,
    pub system_size: u64,
    pub t_grid: Vec<f64>,
    pub h: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub methods: Vec<Method>,
}

#[derive(Debug, Clone)]
pub struct TimeRow {
    pub t: f64,
    pub method: Method,
    pub point: f64,
    pub variance: f64,
    pub std_error: f64,
}

/// Estimator point and variance per horizon in `t_grid` at fixed N.
///
/// One path set per method group is simulated out to the largest horizon and
/// evaluated at every grid time, which the stored propensity integrals make
/// exact.
pub fn run_time_study(network: &ReactionNetwork, config: &TimeStudyConfig) -> Result<Vec<TimeRow>, StudyError> {
    if !config.t_grid.windows(2).all(|w| w[0] < w[1]) || config.t_grid.is_empty() {
        return Err(StudyError::BadConfig("t_grid must be nonempty and increasing".into()));
    }
    let t_max = *config.t_grid.last().unwrap();
    let x0 = network.initial_concentration.clone();
    let inst = SystemInstance::with_initial(network.clone(), config.system_size, &x0)?;
    let n = config.system_size;
    let mut rows = Vec::new();

    // per path: (f(X(t)) for each grid t, Z(t) for each grid t)
    type PathEvals = (Vec<f64>, Vec<f64>);
    let wants_paths = config.methods.iter().any(|&m| m.fd_kind().is_none());
    let shared: Option<Vec<PathEvals>> = if wants_paths {
        let seed = cell_seed(config.seed, n, 0);
        let per_path: Result<Vec<PathEvals>, StudyError> = (0..config.n_samples as u64)
            .into_par_iter()
            .map(|i| {
                let mut stream = open_stream(StreamKey::direct(seed, i));
                let traj = simulate_direct(&inst, None, t_max, &mut stream)?;
                let mut fs = Vec::with_capacity(config.t_grid.len());
                let mut zs = Vec::with_capacity(config.t_grid.len());
                for &t in &config.t_grid {
                    fs.push(config.output.eval(&traj.state_at(t)?, n));
                    zs.push(gt_weight(&traj, config.param_index, t)?.value);
                }
                Ok((fs, zs))
            })
            .collect();
        Some(per_path?)
    } else {
        None
    };

    for (ti, &t) in config.t_grid.iter().enumerate() {
        for &method in &config.methods {
            let summary = match method {
                Method::Gt => {
                    let data = shared.as_ref().unwrap();
                    let products: Vec<f64> = data.iter().map(|(f, z)| f[ti] * z[ti]).collect();
                    estimators::estimate_gt(&products)?
                }
                Method::Cgt => {
                    let data = shared.as_ref().unwrap();
                    let fs: Vec<f64> = data.iter().map(|(f, _)| f[ti]).collect();
                    let zs: Vec<f64> = data.iter().map(|(_, z)| z[ti]).collect();
                    estimators::estimate_cgt(&fs, &zs)?
                }
                fd => {
                    let (coupling, order) = fd.fd_kind().unwrap();
                    let seed = cell_seed(config.seed, n, method_group(fd));
                    let quotients: Result<Vec<f64>, StudyError> = (0..config.n_samples as u64)
                        .into_par_iter()
                        .map(|i| {
                            let pair = simulate_coupled(
                                &inst,
                                config.param_index,
                                config.h,
                                coupling,
                                order,
                                t_max,
                                seed,
                                i,
                            )?;
                            Ok(pair.quotient_at(|state| config.output.eval(state, n), t)?)
                        })
                        .collect();
                    estimators::fd_summary_from_quotients(&quotients?, coupling, order, config.h)?
                }
            };
            rows.push(TimeRow {
                t,
                method,
                point: summary.point,
                variance: summary.sample_variance,
                std_error: summary.std_error,
            });
        }
    }
    Ok(rows)
}

/// Relative number of simulated trajectories needed for relative error
/// `delta` (unit proportionality constant):
/// GT needs `N delta^-2`, CGT `delta^-2`, and an FD method with bias order
/// `gamma1` and variance exponent `gamma2` needs
/// `delta^-(2 + gamma2/gamma1) / N`.
pub fn ns_required(method: Method, delta: f64, n: u64, gamma1: f64, gamma2: f64) -> Result<f64, StudyError> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(StudyError::BadConfig(format!("delta must lie in (0,1), got {delta}")));
    }
    check_gammas(gamma1, gamma2)?;
    let nf = n as f64;
    Ok(match method {
        Method::Gt => nf * delta.powi(-2),
        Method::Cgt => delta.powi(-2),
        _ => delta.powf(-(2.0 + gamma2 / gamma1)) / nf,
    })
}

/// Variance-bias optimal FD perturbation, up to the unit constant:
/// `h ~ (N Ns)^(-1/(2 gamma1 + gamma2))`.
pub fn optimal_h(n: u64, n_samples: u64, gamma1: f64, gamma2: f64) -> Result<f64, StudyError> {
    check_gammas(gamma1, gamma2)?;
    Ok(((n as f64) * (n_samples as f64)).powf(-1.0 / (2.0 * gamma1 + gamma2)))
}

fn check_gammas(gamma1: f64, gamma2: f64) -> Result<(), StudyError> {
    if gamma1 < 1.0 {
        return Err(StudyError::BadConfig(format!("gamma1 must be >= 1, got {gamma1}")));
    }
    if gamma2 != 1.0 && gamma2 != 2.0 {
        return Err(StudyError::BadConfig(format!("gamma2 must be 1 or 2, got {gamma2}")));
    }
    Ok(())
}

/// Write the per-(N, method) rows as CSV. Missing values are empty fields.
pub fn write_scaling_csv(
    report: &ScalingReport,
    model_label: &str,
    output: OutputFn,
    slope_window: f64,
    header_lines: &[String],
    w: &mut impl Write,
) -> std::io::Result<()> {
    for line in header_lines {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "model,output,method,N,Ns,h,point,std_error,rsd,raw_variance,rb,slope_window")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            model_label,
            output.label(),
            r.method.label(),
            r.n,
            r.n_samples,
            opt(r.h),
            r.point,
            r.std_error,
            opt(r.rsd),
            r.raw_variance,
            opt(r.rb),
            slope_window,
        )?;
    }
    Ok(())
}

/// Write the fitted slopes as CSV.
pub fn write_slopes_csv(
    report: &ScalingReport,
    header_lines: &[String],
    w: &mut impl Write,
) -> std::io::Result<()> {
    for line in header_lines {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "method,slope,intercept,n_points")?;
    for s in &report.slopes {
        writeln!(w, "{},{},{},{}", s.method.label(), s.slope, s.intercept, s.n_points)?;
    }
    Ok(())
}

/// Write time-study rows as CSV.
pub fn write_time_csv(rows: &[TimeRow], header_lines: &[String], w: &mut impl Write) -> std::io::Result<()> {
    for line in header_lines {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "T,method,point,variance,std_error")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.t, r.method.label(), r.point, r.variance, r.std_error)?;
    }
    Ok(())
}
