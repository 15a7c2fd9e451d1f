//! Turns simulated samples into GT, CGT, and FD sensitivity estimates with
//! error accounting.
//!
//! Sample variance is the unbiased (n-1 denominator) estimate everywhere,
//! reduced in fixed trajectory order so results do not depend on worker
//! count. When the true sensitivity is known, [`relative_metrics`] fills the
//! relative standard deviation `RSD = sd / |truth|`, relative bias
//! `RB = (point - truth)/|truth|`, and relative error
//! `RE = sqrt(RSD^2 / n + RB^2)`.

use thiserror::Error;

use crate::paths::{CoupledPair, Coupling, FdOrder};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("f and Z sample lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("coupled pairs are heterogeneous: {0}")]
    HeterogeneousPairs(String),
    #[error("relative metrics undefined for zero true sensitivity; report raw variance instead")]
    ZeroTruth,
}

/// Estimator families, including the FD coupling and order variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Gt,
    Cgt,
    Fd1Irn,
    Fd1Crn,
    Fd1Crp,
    Fd2Irn,
    Fd2Crn,
    Fd2Crp,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Gt,
        Method::Cgt,
        Method::Fd1Irn,
        Method::Fd1Crn,
        Method::Fd1Crp,
        Method::Fd2Irn,
        Method::Fd2Crn,
        Method::Fd2Crp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Gt => "GT",
            Method::Cgt => "CGT",
            Method::Fd1Irn => "FD1_IRN",
            Method::Fd1Crn => "FD1_CRN",
            Method::Fd1Crp => "FD1_CRP",
            Method::Fd2Irn => "FD2_IRN",
            Method::Fd2Crn => "FD2_CRN",
            Method::Fd2Crp => "FD2_CRP",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label() == s)
    }

    /// The coupling and order of an FD method; `None` for GT/CGT.
    pub fn fd_kind(self) -> Option<(Coupling, FdOrder)> {
        match self {
            Method::Gt | Method::Cgt => None,
            Method::Fd1Irn => Some((Coupling::Irn, FdOrder::OneSided)),
            Method::Fd1Crn => Some((Coupling::Crn, FdOrder::OneSided)),
            Method::Fd1Crp => Some((Coupling::Crp, FdOrder::OneSided)),
            Method::Fd2Irn => Some((Coupling::Irn, FdOrder::TwoSided)),
            Method::Fd2Crn => Some((Coupling::Crn, FdOrder::TwoSided)),
            Method::Fd2Crp => Some((Coupling::Crp, FdOrder::TwoSided)),
        }
    }
}

/// Point estimate with full error accounting for one estimator run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub method: Method,
    /// Sample mean of the underlying estimator.
    pub point: f64,
    /// Unbiased sample variance of the underlying estimator.
    pub sample_variance: f64,
    /// sqrt(sample_variance / n_samples).
    pub std_error: f64,
    pub n_samples: usize,
    /// FD perturbation, when applicable.
    pub h: Option<f64>,
    pub rsd: Option<f64>,
    pub rb: Option<f64>,
    pub re: Option<f64>,
}

fn mean_and_variance(samples: &[f64]) -> Result<(f64, f64), EstimatorError> {
    let n = samples.len();
    if n < 2 {
        return Err(EstimatorError::TooFewSamples(n));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    Ok((mean, ss / (n - 1) as f64))
}

fn summary(method: Method, samples: &[f64], h: Option<f64>) -> Result<EstimateSummary, EstimatorError> {
    let (point, sample_variance) = mean_and_variance(samples)?;
    Ok(EstimateSummary {
        method,
        point,
        sample_variance,
        std_error: (sample_variance / samples.len() as f64).sqrt(),
        n_samples: samples.len(),
        h,
        rsd: None,
        rb: None,
        re: None,
    })
}

/// GT estimate from samples `f(X(T)) Z(T)`.
pub fn estimate_gt(samples: &[f64]) -> Result<EstimateSummary, EstimatorError> {
    summary(Method::Gt, samples, None)
}

/// Centered-GT estimate from paired output and weight samples.
///
/// The point is the mean of `(f_i - fbar) z_i` with `fbar` the sample mean of
/// `f`; centering on the estimated rather than exact mean costs an O(1/n)
/// bias that is invisible at the sample sizes used here.
pub fn estimate_cgt(f_values: &[f64], z_values: &[f64]) -> Result<EstimateSummary, EstimatorError> {
    if f_values.len() != z_values.len() {
        return Err(EstimatorError::LengthMismatch(f_values.len(), z_values.len()));
    }
    let n = f_values.len();
    if n < 2 {
        return Err(EstimatorError::TooFewSamples(n));
    }
    let fbar = f_values.iter().sum::<f64>() / n as f64;
    let products: Vec<f64> = f_values.iter().zip(z_values).map(|(f, z)| (f - fbar) * z).collect();
    summary(Method::Cgt, &products, None)
}

/// Centered products `(f_i - fbar) z_i`, the CGT underlying samples.
pub fn cgt_samples(f_values: &[f64], z_values: &[f64]) -> Vec<f64> {
    let fbar = f_values.iter().sum::<f64>() / f_values.len() as f64;
    f_values.iter().zip(z_values).map(|(f, z)| (f - fbar) * z).collect()
}

fn fd_method(coupling: Coupling, order: FdOrder) -> Method {
    match (order, coupling) {
        (FdOrder::OneSided, Coupling::Irn) => Method::Fd1Irn,
        (FdOrder::OneSided, Coupling::Crn) => Method::Fd1Crn,
        (FdOrder::OneSided, Coupling::Crp) => Method::Fd1Crp,
        (FdOrder::TwoSided, Coupling::Irn) => Method::Fd2Irn,
        (FdOrder::TwoSided, Coupling::Crn) => Method::Fd2Crn,
        (FdOrder::TwoSided, Coupling::Crp) => Method::Fd2Crp,
    }
}

/// FD estimate over coupled pairs: per-pair sample is the difference
/// quotient of `f` at the final time; all pairs must share `h`, coupling,
/// order, and parameter, and the order must match `order`.
pub fn estimate_fd(
    pairs: &[CoupledPair],
    f: impl Fn(&[i64]) -> f64,
    order: FdOrder,
) -> Result<EstimateSummary, EstimatorError> {
    if pairs.len() < 2 {
        return Err(EstimatorError::TooFewSamples(pairs.len()));
    }
    let first = &pairs[0];
    if first.order != order {
        return Err(EstimatorError::HeterogeneousPairs(format!(
            "pairs were generated {:?}, estimate requested {:?}",
            first.order, order
        )));
    }
    for p in pairs {
        if p.h != first.h || p.coupling != first.coupling || p.order != first.order || p.param_index != first.param_index
        {
            return Err(EstimatorError::HeterogeneousPairs(
                "pairs differ in h, coupling, order, or parameter".into(),
            ));
        }
    }
    let quotients: Vec<f64> = pairs.iter().map(|p| p.quotient(&f)).collect();
    fd_summary_from_quotients(&quotients, first.coupling, order, first.h)
}

/// FD summary from precomputed difference quotients (the study harness
/// streams pairs instead of materializing them).
pub fn fd_summary_from_quotients(
    quotients: &[f64],
    coupling: Coupling,
    order: FdOrder,
    h: f64,
) -> Result<EstimateSummary, EstimatorError> {
    summary(fd_method(coupling, order), quotients, Some(h))
}

/// Fill RSD/RB/RE against a known true sensitivity.
pub fn relative_metrics(mut s: EstimateSummary, true_sensitivity: f64) -> Result<EstimateSummary, EstimatorError> {
    if true_sensitivity == 0.0 {
        return Err(EstimatorError::ZeroTruth);
    }
    let at = true_sensitivity.abs();
    let rsd = s.sample_variance.sqrt() / at;
    let rb = (s.point - true_sensitivity) / at;
    s.rsd = Some(rsd);
    s.rb = Some(rb);
    s.re = Some((rsd * rsd / s.n_samples as f64 + rb * rb).sqrt());
    Ok(s)
}

/// Standard error of the unbiased sample variance, estimated from the
/// fourth central moment: `sqrt((m4 - (n-3)/(n-1) s^4) / n)`.
pub fn variance_standard_error(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let s2 = m2 * n / (n - 1.0);
    ((m4 - (n - 3.0) / (n - 1.0) * s2 * s2).max(0.0) / n).sqrt()
}

/// Both sides of the GT/CGT variance relation evaluated from the empirical
/// moments of a fixed sample set (population, n-denominator, moments).
///
/// Returns `(lhs, rhs)` where `lhs` is the variance of the centered products
/// `(f_i - fbar) z_i` and
///
/// ```text
/// rhs = Var(f z) - 2 fbar E[f z^2] + fbar^2 E[z^2]
///       + 2 fbar E[f z] E[z] - fbar^2 E[z]^2.
/// ```
///
/// The two trailing terms carry the sample mean of `z`; they vanish in
/// expectation (`E Z = 0`), leaving the population relation between the GT
/// and CGT variances. The two sides agree to floating-point accuracy on any
/// sample set.
pub fn gt_cgt_variance_identity(f_values: &[f64], z_values: &[f64]) -> (f64, f64) {
    assert_eq!(f_values.len(), z_values.len());
    let n = f_values.len() as f64;
    let m = |it: &mut dyn Iterator<Item = f64>| it.sum::<f64>() / n;
    let fbar = m(&mut f_values.iter().copied());
    let zbar = m(&mut z_values.iter().copied());
    let e_fz = m(&mut f_values.iter().zip(z_values).map(|(f, z)| f * z));
    let e_fz2 = m(&mut f_values.iter().zip(z_values).map(|(f, z)| f * z * z));
    let e_f2z2 = m(&mut f_values.iter().zip(z_values).map(|(f, z)| (f * z).powi(2)));
    let e_z2 = m(&mut z_values.iter().map(|z| z * z));

    let var_gt = e_f2z2 - e_fz * e_fz;
    let rhs = var_gt - 2.0 * fbar * e_fz2 + fbar * fbar * e_z2 + 2.0 * fbar * e_fz * zbar
        - fbar * fbar * zbar * zbar;

    let u: Vec<f64> = f_values.iter().zip(z_values).map(|(f, z)| (f - fbar) * z).collect();
    let ubar = m(&mut u.iter().copied());
    let lhs = m(&mut u.iter().map(|x| x * x)) - ubar * ubar;
    (lhs, rhs)
}
