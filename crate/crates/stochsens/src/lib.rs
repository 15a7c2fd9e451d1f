//! Exact stochastic simulation of reaction networks with parametric
//! sensitivity estimation.
//!
//! The crate simulates continuous-time Markov jump processes under stochastic
//! mass action kinetics (Gillespie's direct method and the random time change
//! representation), and estimates parametric sensitivities
//! `d/dc_j E[f(X(T))]` three ways:
//!
//! * **GT** — the Girsanov transformation (likelihood ratio) estimator
//!   `f(X(T)) Z(T)`, unbiased;
//! * **CGT** — the centered variant `(f(X(T)) - f̄) Z(T)`, same target with
//!   typically much lower variance;
//! * **FD** — one- and two-sided finite differences over coupled path pairs
//!   (independent streams, common random numbers, or common Poisson clocks).
//!
//! Everything is driven by a system-size parameter `N` (classical scaling:
//! initial copy numbers and propensities proportional to `N`), so the
//! relative standard deviations of the three estimator families scale as
//! `N^{1/2}`, `N^0`, and `N^{-1/2}`. The [`study`] module measures those
//! exponents; the [`oracles`] module supplies closed-form ground truth for
//! the linear test networks and the deterministic fluid limit.
//!
//! See the crate examples for runnable entry points into each capability,
//! and the `stochsens` binary for the file-driven command line interface.

pub mod cli;
pub mod config;
pub mod estimators;
pub mod girsanov;
pub mod model;
pub mod oracles;
pub mod paths;
pub mod streams;
pub mod study;

pub use estimators::{EstimateSummary, Method};
pub use girsanov::{gt_sample, gt_weight, GtWeight};
pub use model::{parse_network, Reaction, ReactionNetwork, SystemInstance};
pub use paths::{simulate_coupled, simulate_direct, simulate_rtc, CoupledPair, Coupling, FdOrder, Trajectory};
pub use streams::{open_stream, StreamKey, UniformStream};

/// Crate version string recorded in every output file header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
