//! The Girsanov weight process along a simulated path.
//!
//! Under stochastic mass action every rate parameter enters its channel
//! multiplicatively, so the likelihood-ratio derivative collapses to the
//! scaled compensated reaction count
//!
//! ```text
//! Z(t) = ( R_j(t) - integral of a_j over (0, t] ) / c_j
//! ```
//!
//! which has mean zero and turns `f(X(t)) Z(t)` into an unbiased estimator
//! of `d/dc_j E[f(X(t))]`.

use thiserror::Error;

use crate::paths::{SimError, Trajectory};

#[derive(Debug, Error)]
pub enum GirsanovError {
    #[error("weight undefined: rate constant of channel {0} is zero")]
    ZeroRate(usize),
    #[error("parameter index {index} out of range (path has {len} channels)")]
    BadParamIndex { index: usize, len: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// The accumulated weight for one path and one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtWeight {
    pub param_index: usize,
    /// Z(t) = (reaction_count - compensator) / c_j.
    pub value: f64,
    pub reaction_count: u64,
    pub compensator: f64,
}

/// Girsanov weight of `trajectory` for the rate parameter of channel
/// `param_index`, evaluated at time `t`.
///
/// Reuses the trajectory's stored propensity integrals; after simulation the
/// query costs O(log #events).
pub fn gt_weight(trajectory: &Trajectory, param_index: usize, t: f64) -> Result<GtWeight, GirsanovError> {
    let m = trajectory.n_channels();
    if param_index >= m {
        return Err(GirsanovError::BadParamIndex { index: param_index, len: m });
    }
    let c = trajectory.rates()[param_index];
    if c == 0.0 {
        return Err(GirsanovError::ZeroRate(param_index));
    }
    let reaction_count = trajectory.reaction_count_at(param_index, t)?;
    let compensator = trajectory.compensator_at(param_index, t)?;
    Ok(GtWeight {
        param_index,
        value: (reaction_count as f64 - compensator) / c,
        reaction_count,
        compensator,
    })
}

/// The GT sensitivity sample `f(X(t)) * Z(t)`.
pub fn gt_sample(
    trajectory: &Trajectory,
    param_index: usize,
    f: impl Fn(&[i64]) -> f64,
    t: f64,
) -> Result<f64, GirsanovError> {
    let w = gt_weight(trajectory, param_index, t)?;
    Ok(f(&trajectory.state_at(t)?) * w.value)
}
