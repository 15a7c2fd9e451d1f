//! Closed-form means, sensitivities, and estimator variances for the
//! analytically tractable test networks, plus the deterministic fluid limit
//! with forward sensitivities. These are the ground truth the acceptance
//! suite checks Monte Carlo output against.
//!
//! The long variance expressions are transcribed monomial by monomial, with
//! the exponential prefactor factored exactly as displayed, so each addend
//! can be audited independently. Every closed form here is cross-validated
//! in the tests two ways: against an independent numerical derivative or
//! integrator, and against Monte Carlo simulation.

use thiserror::Error;

use crate::model::{ReactionNetwork, SystemInstance};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("step must be positive, got {0}")]
    NonpositiveStep(f64),
    #[error("fluid state became non-finite at t = {0}")]
    NonFiniteState(f64),
}

/// Parameters of the birth-death network `0 -> S` (rate `N c1`),
/// `S -> 0` (rate `c2 x`), started at `X(0) = N x0`.
#[derive(Debug, Clone, Copy)]
pub struct BirthDeathParams {
    pub c1: f64,
    pub c2: f64,
    pub x0: f64,
    pub n: u64,
    pub t: f64,
}

impl BirthDeathParams {
    fn nf(&self) -> f64 {
        self.n as f64
    }
}

/// `E X(t) = N x0 e^{-c2 t} + (N c1 / c2)(1 - e^{-c2 t})`.
pub fn bd_mean(p: &BirthDeathParams) -> f64 {
    let e = (-p.c2 * p.t).exp();
    p.nf() * p.x0 * e + p.nf() * p.c1 / p.c2 * (1.0 - e)
}

/// `d/dc1 E X(t) = (N / c2)(1 - e^{-c2 t})`.
pub fn bd_sens_c1(p: &BirthDeathParams) -> f64 {
    p.nf() / p.c2 * (1.0 - (-p.c2 * p.t).exp())
}

/// `d/dc2 E X(t) = -N x0 t e^{-c2 t} - (N c1 / c2^2)(1 - e^{-c2 t}) + (N c1 / c2) t e^{-c2 t}`.
pub fn bd_sens_c2(p: &BirthDeathParams) -> f64 {
    let e = (-p.c2 * p.t).exp();
    -p.nf() * p.x0 * p.t * e - p.nf() * p.c1 / (p.c2 * p.c2) * (1.0 - e) + p.nf() * p.c1 / p.c2 * p.t * e
}

/// `Var X(t) = N x0 (1 - e^{-c2 t}) e^{-c2 t} + (N c1 / c2)(1 - e^{-c2 t})`.
pub fn bd_var_x(p: &BirthDeathParams) -> f64 {
    let e = (-p.c2 * p.t).exp();
    p.nf() * p.x0 * (1.0 - e) * e + p.nf() * p.c1 / p.c2 * (1.0 - e)
}

/// Variance of the GT estimator `X(t) Z(t)` for the `c1` sensitivity.
pub fn bd_var_gt_c1(p: &BirthDeathParams) -> f64 {
    let (n, c1, c2, x0, t) = (p.nf(), p.c1, p.c2, p.x0, p.t);
    let e1 = (c2 * t).exp();
    let e2 = (2.0 * c2 * t).exp();
    let prefactor = n * (-2.0 * c2 * t).exp() / (c1 * c2 * c2);
    let terms = [
        e2 * n * n * c1 * c1 * t,
        n * c1 * t * c2 * e2,
        2.0 * e1 * n * n * c1 * c2 * t * x0,
        e1 * c2 * c2 * t * n * x0,
        c2 * c2 * t * n * n * x0 * x0,
        -2.0 * e1 * n * n * c1 * c1 * t,
        -e1 * n * c1 * c2 * t,
        -2.0 * n * n * c1 * t * c2 * x0,
        -n * x0 * t * c2 * c2,
        3.0 * n * c1 * e2,
        e2 * c2,
        2.0 * n * x0 * e1 * c2,
        n * n * c1 * c1 * t,
        -6.0 * e1 * n * c1,
        -e1 * c2,
        -2.0 * n * x0 * c2,
        3.0 * n * c1,
    ];
    prefactor * terms.iter().sum::<f64>()
}

/// Variance of the CGT estimator `(X(t) - E X(t)) Z(t)` for the `c1`
/// sensitivity.
pub fn bd_var_cgt_c1(p: &BirthDeathParams) -> f64 {
    let (n, c1, c2, x0, t) = (p.nf(), p.c1, p.c2, p.x0, p.t);
    let e1 = (c2 * t).exp();
    let e2 = (2.0 * c2 * t).exp();
    let prefactor = n * (-2.0 * c2 * t).exp() / (c1 * c2 * c2);
    let terms = [
        n * c1 * t * c2 * e2,
        e1 * c2 * c2 * t * n * x0,
        -e1 * n * c1 * c2 * t,
        -n * x0 * t * c2 * c2,
        n * c1 * e2,
        e2 * c2,
        -2.0 * e1 * n * c1,
        -e1 * c2,
        n * c1,
    ];
    prefactor * terms.iter().sum::<f64>()
}

/// Variance of the GT estimator for the `c2` sensitivity in the pure death
/// case (`c1 = 0`).
///
/// The leading cubic monomial appears with both exponentials: the
/// `e^{-3 c2 t}` addend carries `N^3 x0^3` (their difference is
/// `(N x0)^3 p^2 (1-p)` with `p = e^{-c2 t}`), which the `t = 0` and
/// Monte Carlo cross-checks pin down.
pub fn pd_var_gt_c2(p: &BirthDeathParams) -> f64 {
    let (n, c2, x0, t) = (p.nf(), p.c2, p.x0, p.t);
    let em1 = (-c2 * t).exp();
    let em2 = (-2.0 * c2 * t).exp();
    let em3 = (-3.0 * c2 * t).exp();
    let terms = [
        em2 * n * n * n * x0 * x0 * x0,
        -4.0 * em2 * n * n * x0 * x0,
        3.0 * em2 * n * x0,
        3.0 * em2 * n * n * x0 * x0 * t * t * c2 * c2,
        -2.0 * em3 * n * x0,
        3.0 * em3 * n * n * x0 * x0,
        em1 * n * n * x0 * x0,
        -em1 * n * x0,
        em1 * n * x0 * t * t * c2 * c2,
        -4.0 * em2 * t * t * c2 * c2 * n * x0,
        -em3 * n * n * n * x0 * x0 * x0,
    ];
    terms.iter().sum::<f64>() / (c2 * c2)
}

/// Variance of the CGT estimator for the `c2` sensitivity in the pure death
/// case (`c1 = 0`).
pub fn pd_var_cgt_c2(p: &BirthDeathParams) -> f64 {
    let (n, c2, x0, t) = (p.nf(), p.c2, p.x0, p.t);
    let em1 = (-c2 * t).exp();
    let em2 = (-2.0 * c2 * t).exp();
    let em3 = (-3.0 * c2 * t).exp();
    let terms = [
        -2.0 * em2 * n * n * x0 * x0,
        3.0 * em2 * n * x0,
        em2 * n * n * x0 * x0 * t * t * c2 * c2,
        -2.0 * em3 * n * x0,
        em3 * n * n * x0 * x0,
        em1 * n * n * x0 * x0,
        -em1 * n * x0,
        em1 * n * x0 * t * t * c2 * c2,
        -4.0 * em2 * n * x0 * t * t * c2 * c2,
    ];
    terms.iter().sum::<f64>() / (c2 * c2)
}

/// Means of the reversible isomerization `S1 <-> S2` populations.
///
/// `E X1(t) = X1(0) + g (c2 X2(0) - c1 X1(0))` with
/// `g = (1 - e^{-(c1+c2) t}) / (c1 + c2)`, and `E X2` mirrors it so the
/// total is conserved.
pub fn iso_mean(x10: f64, x20: f64, c1: f64, c2: f64, t: f64) -> (f64, f64) {
    let s = c1 + c2;
    let g = (1.0 - (-s * t).exp()) / s;
    let d = c2 * x20 - c1 * x10;
    (x10 + g * d, x20 - g * d)
}

/// `d/dc1 E X1(t)` by differentiating the mean formula.
pub fn iso_sens_c1(x10: f64, x20: f64, c1: f64, c2: f64, t: f64) -> f64 {
    let s = c1 + c2;
    let est = (-s * t).exp();
    let g = (1.0 - est) / s;
    let dg = t * est / s - (1.0 - est) / (s * s);
    let d = c2 * x20 - c1 * x10;
    dg * d - g * x10
}

/// Single-molecule occupation probabilities of the two-state chain behind
/// the isomerization network, with their `c1`-derivatives.
///
/// `p11` is the probability a molecule starting in S1 is in S1 at time `t`;
/// `p21` the same for a molecule starting in S2.
fn iso_transition_probs(c1: f64, c2: f64, t: f64) -> (f64, f64, f64, f64) {
    let s = c1 + c2;
    let est = (-s * t).exp();
    let p11 = c2 / s + c1 / s * est;
    let p21 = c2 / s * (1.0 - est);
    let dp11 = -c2 / (s * s) + est * (c2 / (s * s) - c1 * t / s);
    let dp21 = -c2 / (s * s) * (1.0 - est) + c2 / s * t * est;
    (p11, p21, dp11, dp21)
}

/// Exact distribution of `X1(t)` for reversible isomerization with
/// deterministic initial counts, together with its derivative in `c1`.
///
/// Molecules hop independently, so `X1(t)` is the sum of two binomials; the
/// pmf is their convolution and the `c1`-derivative follows by the product
/// rule. This turns *any* output function into an exact sensitivity oracle.
#[derive(Debug, Clone)]
pub struct IsoDistribution {
    total: u64,
    pmf: Vec<f64>,
    dpmf_dc1: Vec<f64>,
}

impl IsoDistribution {
    pub fn new(x10: u64, x20: u64, c1: f64, c2: f64, t: f64) -> Self {
        let (p11, p21, dp11, dp21) = iso_transition_probs(c1, c2, t);
        let (pmf1, dpmf1) = binomial_pmf_and_dp(x10, p11);
        let (pmf2, dpmf2) = binomial_pmf_and_dp(x20, p21);
        let dpmf1: Vec<f64> = dpmf1.iter().map(|d| d * dp11).collect();
        let dpmf2: Vec<f64> = dpmf2.iter().map(|d| d * dp21).collect();
        let pmf = convolve(&pmf1, &pmf2);
        let mut dpmf = convolve(&dpmf1, &pmf2);
        for (d, extra) in dpmf.iter_mut().zip(convolve(&pmf1, &dpmf2)) {
            *d += extra;
        }
        IsoDistribution { total: x10 + x20, pmf, dpmf_dc1: dpmf }
    }

    /// `E f(X(t))` where `f` sees the full state `(x1, x2)`.
    pub fn expectation(&self, f: impl Fn(&[i64]) -> f64) -> f64 {
        self.weighted(&self.pmf, f)
    }

    /// `d/dc1 E f(X(t))`, exact.
    pub fn sensitivity_c1(&self, f: impl Fn(&[i64]) -> f64) -> f64 {
        self.weighted(&self.dpmf_dc1, f)
    }

    fn weighted(&self, weights: &[f64], f: impl Fn(&[i64]) -> f64) -> f64 {
        weights
            .iter()
            .enumerate()
            .map(|(x1, w)| w * f(&[x1 as i64, self.total as i64 - x1 as i64]))
            .sum()
    }
}

/// Binomial pmf over `0..=n` plus its derivative in the success probability,
/// computed by the stable ratio recurrence from `(1-p)^n`.
fn binomial_pmf_and_dp(n: u64, p: f64) -> (Vec<f64>, Vec<f64>) {
    let n_us = n as usize;
    let mut pmf = vec![0.0; n_us + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        let mut dp = vec![0.0; n_us + 1];
        if n_us >= 1 {
            dp[0] = -(n as f64);
            dp[1] = n as f64;
        }
        return (pmf, dp);
    }
    if p >= 1.0 {
        pmf[n_us] = 1.0;
        let mut dp = vec![0.0; n_us + 1];
        if n_us >= 1 {
            dp[n_us] = n as f64;
            dp[n_us - 1] = -(n as f64);
        }
        return (pmf, dp);
    }
    pmf[0] = (1.0 - p).powi(n as i32);
    for k in 0..n_us {
        pmf[k + 1] = pmf[k] * ((n_us - k) as f64) / ((k + 1) as f64) * p / (1.0 - p);
    }
    let dp = pmf
        .iter()
        .enumerate()
        .map(|(k, &v)| v * (k as f64 / p - (n_us - k) as f64 / (1.0 - p)))
        .collect();
    (pmf, dp)
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Deterministic fluid limit on a fixed grid with forward sensitivities.
#[derive(Debug, Clone)]
pub struct FluidSolution {
    pub times: Vec<f64>,
    /// Concentration vector per grid point.
    pub states: Vec<Vec<f64>>,
    /// `sensitivities[k][j]` = dX/dc_j at grid point `k` (length n each).
    pub sensitivities: Vec<Vec<Vec<f64>>>,
}

impl FluidSolution {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("grid is never empty")
    }

    pub fn final_sensitivity(&self, param: usize) -> &[f64] {
        &self.sensitivities.last().expect("grid is never empty")[param]
    }
}

/// Integrate the fluid limit `dX/dt = sum_j nu_j a_j(X)` together with the
/// forward sensitivity system `dS_j/dt = (dF/dx) S_j + nu_j a_j(X)/c_j`
/// by the classical fixed-step fourth-order Runge-Kutta method.
///
/// The grid is `t_final / step` rounded up to an integer number of equal
/// steps, so output is bit-reproducible for a given argument set.
pub fn fluid_solve(
    instance: &SystemInstance,
    rates_override: Option<&[f64]>,
    t_final: f64,
    step: f64,
) -> Result<FluidSolution, OracleError> {
    if step <= 0.0 {
        return Err(OracleError::NonpositiveStep(step));
    }
    let net = instance.network();
    let n = net.n_species();
    let m = net.n_reactions();
    let rates: Vec<f64> = match rates_override {
        Some(r) => r.to_vec(),
        None => net.rate_consts(),
    };
    let x0: Vec<f64> =
        instance.initial_state().iter().map(|&c| c as f64 / instance.system_size() as f64).collect();

    // Augmented state: concentrations followed by m sensitivity blocks.
    let dim = n * (1 + m);
    let mut y = vec![0.0; dim];
    y[..n].copy_from_slice(&x0);

    let deriv = |y: &[f64], dy: &mut [f64]| {
        let x = &y[..n];
        dy.fill(0.0);
        // cache per-channel rate and gradient
        #[allow(clippy::needless_range_loop)]
        for j in 0..m {
            let aj = net.fluid_rate_with(x, j, rates[j]);
            let nu = net.reactions[j].net_change();
            for i in 0..n {
                dy[i] += nu[i] as f64 * aj;
            }
            // parameter-derivative source term for sensitivity block j:
            // d a_j / d c_j = a_j / c_j = b_j(x)
            let bj = net.fluid_rate_with(x, j, 1.0);
            let block = n * (1 + j);
            for i in 0..n {
                dy[block + i] += nu[i] as f64 * bj;
            }
        }
        // Jacobian-vector products: dS/dt += (dF/dx) S for each block.
        for jparam in 0..m {
            let s = &y[n * (1 + jparam)..n * (2 + jparam)];
            let mut jac_s = vec![0.0; n];
            #[allow(clippy::needless_range_loop)]
            for j in 0..m {
                let nu = net.reactions[j].net_change();
                // grad a_j . s
                let mut grad_dot_s = 0.0;
                for (i, &w) in net.reactions[j].reactant_counts.iter().enumerate() {
                    if w == 0 {
                        continue;
                    }
                    // d a_j/d x_i = c_j * w * x_i^{w-1}/w! * prod_{k != i} ...
                    let mut d = rates[j];
                    for (k, &wk) in net.reactions[j].reactant_counts.iter().enumerate() {
                        if k == i {
                            d *= f64::from(w) / factorial(w);
                            d *= x[k].powi(w as i32 - 1);
                        } else {
                            d *= x[k].powi(wk as i32) / factorial(wk);
                        }
                    }
                    grad_dot_s += d * s[i];
                }
                for i in 0..n {
                    jac_s[i] += nu[i] as f64 * grad_dot_s;
                }
            }
            for i in 0..n {
                dy[n * (1 + jparam) + i] += jac_s[i];
            }
        }
    };

    let n_steps = (t_final / step).ceil().max(1.0) as usize;
    let dt = t_final / n_steps as f64;

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut sens = Vec::with_capacity(n_steps + 1);
    let record = |times: &mut Vec<f64>, states: &mut Vec<Vec<f64>>, sens: &mut Vec<Vec<Vec<f64>>>, t: f64, y: &[f64]| {
        times.push(t);
        states.push(y[..n].to_vec());
        sens.push((0..m).map(|j| y[n * (1 + j)..n * (2 + j)].to_vec()).collect());
    };
    record(&mut times, &mut states, &mut sens, 0.0, &y);

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    for step_idx in 0..n_steps {
        let t = step_idx as f64 * dt;
        deriv(&y, &mut k1);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = y[i] + dt * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..dim {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !y[..n].iter().all(|v| v.is_finite()) {
            return Err(OracleError::NonFiniteState(t + dt));
        }
        record(&mut times, &mut states, &mut sens, (step_idx + 1) as f64 * dt, &y);
    }
    Ok(FluidSolution { times, states, sensitivities: sens })
}

fn factorial(w: u32) -> f64 {
    (1..=w).map(f64::from).product::<f64>().max(1.0)
}

/// Test networks the crate recognizes for built-in ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnownModel {
    /// `0 -> S`, `S -> 0`.
    BirthDeath,
    /// `S1 -> S2`, `S2 -> S1`.
    ReversibleIsomerization,
}

/// Structural match of a network against the built-in oracles.
pub fn known_model(net: &ReactionNetwork) -> Option<KnownModel> {
    if net.n_species() == 1 && net.n_reactions() == 2 {
        let birth = &net.reactions[0];
        let death = &net.reactions[1];
        if birth.reactant_counts == [0] && birth.product_counts == [1]
            && death.reactant_counts == [1] && death.product_counts == [0]
        {
            return Some(KnownModel::BirthDeath);
        }
    }
    if net.n_species() == 2 && net.n_reactions() == 2 {
        let fwd = &net.reactions[0];
        let bwd = &net.reactions[1];
        if fwd.reactant_counts == [1, 0] && fwd.product_counts == [0, 1]
            && bwd.reactant_counts == [0, 1] && bwd.product_counts == [1, 0]
        {
            return Some(KnownModel::ReversibleIsomerization);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_network;

    const TOL: f64 = 1e-9;

    fn p_ref() -> BirthDeathParams {
        BirthDeathParams { c1: 1.0, c2: 1.0, x0: 1.0, n: 10, t: 2.0 }
    }

    #[test]
    fn bd_mean_examples() {
        let p = p_ref();
        assert_eq!(bd_mean(&BirthDeathParams { t: 0.0, ..p }), 10.0);
        assert!((bd_mean(&BirthDeathParams { t: 500.0, ..p }) - 10.0).abs() < TOL);
        assert_eq!(bd_mean(&p), 10.0); // terms cancel exactly at these values
    }

    #[test]
    fn bd_sensitivities() {
        let p = p_ref();
        assert_eq!(bd_sens_c1(&BirthDeathParams { t: 0.0, ..p }), 0.0);
        assert!((bd_sens_c1(&BirthDeathParams { t: 500.0, ..p }) - 10.0).abs() < TOL);
        // central difference cross-check for the c2 formula
        let h = 1e-6;
        let fd = (bd_mean(&BirthDeathParams { c2: p.c2 + h, ..p }) - bd_mean(&BirthDeathParams { c2: p.c2 - h, ..p }))
            / (2.0 * h);
        let exact = bd_sens_c2(&p);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "fd {fd} vs {exact}");
    }

    #[test]
    fn bd_variances_vanish_at_time_zero() {
        let p0 = BirthDeathParams { t: 0.0, ..p_ref() };
        assert!(bd_var_gt_c1(&p0).abs() < 1e-12);
        assert!(bd_var_cgt_c1(&p0).abs() < 1e-12);
        assert!(pd_var_gt_c2(&p0).abs() < 1e-12);
        assert!(pd_var_cgt_c2(&p0).abs() < 1e-12);
        // At t = 1e-12 the exact variances are O(t): about N^3 x0^2 t / c1
        // for GT (~1e-9 here), far below the t = 2 values of O(10^3).
        let p = BirthDeathParams { t: 1e-12, ..p_ref() };
        assert!(bd_var_gt_c1(&p).abs() < 2e-8);
        assert!(bd_var_cgt_c1(&p).abs() < 2e-8);
        assert!(pd_var_gt_c2(&p).abs() < 2e-8);
        assert!(pd_var_cgt_c2(&p).abs() < 2e-8);
    }

    #[test]
    fn bd_variance_reference_values() {
        // Frozen against an independent moment-ODE integration (GT/CGT for
        // c1) and an exact per-individual decomposition (pure death).
        let p = p_ref();
        assert!((bd_var_gt_c1(&p) - 2452.6809699841147).abs() < 1e-8);
        assert!((bd_var_cgt_c1(&p) - 279.7480266314378).abs() < 1e-9);
        let pd = BirthDeathParams { c1: 0.0, c2: 1.0, x0: 1.0, n: 10, t: 1.0 };
        assert!((pd_var_gt_c2(&pd) - 121.38965697286747).abs() < 1e-9);
        assert!((pd_var_cgt_c2(&pd) - 25.884028430545953).abs() < 1e-9);
    }

    #[test]
    fn pure_death_variances_match_counting_derivation() {
        // Independent route: X = sum of survival indicators, c2*Z = sum of
        // per-individual compensated death indicators; all mixed moments of
        // iid terms are available in closed form.
        for &(n, c2, x0, t) in &[(10u64, 1.0, 1.0, 1.0), (6, 0.5, 2.0, 1.7), (40, 2.0, 0.5, 0.3)] {
            let p = BirthDeathParams { c1: 0.0, c2, x0, n, t };
            let pop = n as f64 * x0;
            let pr = (-c2 * t).exp();
            let q = 1.0 - pr;
            let w = c2 * c2 * t * t;
            let gt = (pop.powi(3) * pr * pr * q
                + pop * pop * (-3.0 * pr * pr * q + pr * q + 3.0 * pr * pr * w)
                + pop * (2.0 * pr * pr * q - pr * q - 4.0 * pr * pr * w + pr * w))
                / (c2 * c2);
            let cgt = (pop * pop * (-pr * pr * q + pr * q + pr * pr * w)
                + pop * (2.0 * pr * pr * q - pr * q - 4.0 * pr * pr * w + pr * w))
                / (c2 * c2);
            assert!((pd_var_gt_c2(&p) - gt).abs() <= 1e-9 * gt.abs().max(1.0), "GT at n={n}");
            assert!((pd_var_cgt_c2(&p) - cgt).abs() <= 1e-9 * cgt.abs().max(1.0), "CGT at n={n}");
        }
    }

    #[test]
    fn variance_scaling_orders() {
        // GT variance is O(N^3), CGT is O(N^2): the scaled values converge
        // to finite nonzero limits along N -> 1e6.
        let at = |n: u64| BirthDeathParams { n, ..p_ref() };
        let mut prev_gt = f64::NAN;
        let mut prev_cgt = f64::NAN;
        for &n in &[1_000u64, 100_000, 1_000_000] {
            let g = bd_var_gt_c1(&at(n)) / (n as f64).powi(3);
            let c = bd_var_cgt_c1(&at(n)) / (n as f64).powi(2);
            assert!(g.is_finite() && g > 0.0);
            assert!(c.is_finite() && c > 0.0);
            if prev_gt.is_finite() {
                assert!((g - prev_gt).abs() / prev_gt < 0.05);
                assert!((c - prev_cgt).abs() / prev_cgt < 0.05);
            }
            prev_gt = g;
            prev_cgt = c;
        }
        let pd = |n: u64| BirthDeathParams { c1: 0.0, c2: 1.0, x0: 1.0, n, t: 1.0 };
        let g6 = pd_var_gt_c2(&pd(1_000_000)) / 1e18;
        let c6 = pd_var_cgt_c2(&pd(1_000_000)) / 1e12;
        assert!(g6 > 0.0 && g6.is_finite());
        assert!(c6 > 0.0 && c6.is_finite());
    }

    #[test]
    fn bd_var_x_examples() {
        let p = p_ref();
        assert_eq!(bd_var_x(&BirthDeathParams { t: 0.0, ..p }), 0.0);
        let pd = BirthDeathParams { c1: 0.0, t: 1e3, ..p };
        assert!(bd_var_x(&pd).abs() < 1e-300 * 1e6 + 1e-12);
        assert!((bd_var_x(&p) - 9.816843611112658).abs() < 1e-12);
    }

    #[test]
    fn iso_mean_examples() {
        let (a, b) = iso_mean(7.0, 3.0, 0.3, 0.2, 0.0);
        assert_eq!((a, b), (7.0, 3.0));
        // equilibrium split proportional to (c2, c1)/(c1+c2)
        let (a, b) = iso_mean(7.0, 3.0, 0.3, 0.2, 1e4);
        assert!((a - 10.0 * 0.2 / 0.5).abs() < 1e-9);
        assert!((b - 10.0 * 0.3 / 0.5).abs() < 1e-9);
        for &t in &[0.0, 0.5, 2.0, 9.0] {
            let (a, b) = iso_mean(7.0, 3.0, 0.3, 0.2, t);
            assert!((a + b - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn iso_sens_examples() {
        assert_eq!(iso_sens_c1(5.0, 5.0, 0.3, 0.2, 0.0), 0.0);
        // §-style settings: linear in the initial populations
        let s10 = iso_sens_c1(10.0, 10.0, 0.3, 0.2, 10.0);
        let s100 = iso_sens_c1(100.0, 100.0, 0.3, 0.2, 10.0);
        assert!((s100 - 10.0 * s10).abs() < 1e-9 * s100.abs());
        assert!((s10 - (-16.026951787996342)).abs() < 1e-12);
        // central-difference oracle at 1e-6 relative
        let h = 1e-6;
        let fd = (iso_mean(10.0, 10.0, 0.3 + h, 0.2, 10.0).0 - iso_mean(10.0, 10.0, 0.3 - h, 0.2, 10.0).0)
            / (2.0 * h);
        assert!((fd - s10).abs() <= 1e-6 * s10.abs());
    }

    #[test]
    fn iso_distribution_matches_closed_forms() {
        let d = IsoDistribution::new(10, 10, 0.3, 0.2, 10.0);
        let total: f64 = d.pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let dsum: f64 = d.dpmf_dc1.iter().sum();
        assert!(dsum.abs() < 1e-12, "pmf derivative sums to 0");
        let mean = d.expectation(|x| x[0] as f64);
        assert!((mean - iso_mean(10.0, 10.0, 0.3, 0.2, 10.0).0).abs() < 1e-10);
        let sens = d.sensitivity_c1(|x| x[0] as f64);
        assert!((sens - iso_sens_c1(10.0, 10.0, 0.3, 0.2, 10.0)).abs() < 1e-9);
        // frozen values for the nonlinear outputs (independently computed)
        let s_sq = d.sensitivity_c1(|x| (x[0] as f64).powi(2));
        assert!((s_sq - (-260.04243622904124)).abs() < 1e-8);
        let s_sin = d.sensitivity_c1(|x| (x[0] as f64 / 10.0).sin());
        assert!((s_sin - (-1.0784089401922208)).abs() < 1e-10);
        let s_ind = d.sensitivity_c1(|x| if x[0] <= x[1] { 1.0 } else { 0.0 });
        assert!((s_ind - 1.5749421594098707).abs() < 1e-10);
    }

    #[test]
    fn iso_distribution_sensitivity_agrees_with_finite_difference() {
        let h = 1e-6;
        let f = |x: &[i64]| (x[0] as f64).sin().mul_add(2.0, (x[1] as f64).sqrt());
        let hi = IsoDistribution::new(8, 5, 0.3 + h, 0.2, 4.0).expectation(f);
        let lo = IsoDistribution::new(8, 5, 0.3 - h, 0.2, 4.0).expectation(f);
        let fd = (hi - lo) / (2.0 * h);
        let exact = IsoDistribution::new(8, 5, 0.3, 0.2, 4.0).sensitivity_c1(f);
        assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{fd} vs {exact}");
    }

    fn iso_net() -> ReactionNetwork {
        parse_network("init S1 = 1\ninit S2 = 1\nS1 -> S2 @ 0.3\nS2 -> S1 @ 0.2").unwrap()
    }

    #[test]
    fn fluid_limit_of_linear_networks_is_exact() {
        let inst = SystemInstance::new(iso_net(), 10).unwrap();
        let sol = fluid_solve(&inst, None, 10.0, 0.01).unwrap();
        let (m1, m2) = iso_mean(1.0, 1.0, 0.3, 0.2, 10.0);
        assert!((sol.final_state()[0] - m1).abs() < 1e-8);
        assert!((sol.final_state()[1] - m2).abs() < 1e-8);
        // forward sensitivity matches the differentiated mean (per unit N)
        let s = iso_sens_c1(1.0, 1.0, 0.3, 0.2, 10.0);
        assert!((sol.final_sensitivity(0)[0] - s).abs() < 1e-8, "{} vs {s}", sol.final_sensitivity(0)[0]);

        let bd = parse_network("init S = 1\n0 -> S @ 1.0\nS -> 0 @ 1.0").unwrap();
        let inst = SystemInstance::new(bd, 10).unwrap();
        let sol = fluid_solve(&inst, None, 2.0, 0.01).unwrap();
        let p = BirthDeathParams { c1: 1.0, c2: 1.0, x0: 1.0, n: 1, t: 2.0 };
        assert!((sol.final_state()[0] - bd_mean(&p)).abs() < 1e-8);
        assert!((sol.final_sensitivity(0)[0] - bd_sens_c1(&p)).abs() < 1e-8);
        assert!((sol.final_sensitivity(1)[0] - bd_sens_c2(&p)).abs() < 1e-8);
    }

    #[test]
    fn fluid_step_halving_converges_to_fourth_order() {
        let net = parse_network("init S1 = 10\n2*S1 -> S2 @ 0.002\nS2 -> 2*S1 @ 0.5\nS1 -> 0 @ 1.0\nS2 -> S3 @ 0.04")
            .unwrap();
        let inst = SystemInstance::new(net, 100).unwrap();
        let coarse = fluid_solve(&inst, None, 5.0, 0.02).unwrap();
        let fine = fluid_solve(&inst, None, 5.0, 0.01).unwrap();
        for i in 0..3 {
            let rel = (coarse.final_state()[i] - fine.final_state()[i]).abs()
                / fine.final_state()[i].abs().max(1e-12);
            assert!(rel < 1e-8, "species {i}: rel {rel}");
        }
    }

    #[test]
    fn fluid_zero_rates_leave_state_constant() {
        let inst = SystemInstance::new(iso_net(), 10).unwrap();
        let sol = fluid_solve(&inst, Some(&[0.0, 0.0]), 5.0, 0.1).unwrap();
        assert_eq!(sol.final_state(), &[1.0, 1.0]);
    }

    #[test]
    fn fluid_rejects_nonpositive_step() {
        let inst = SystemInstance::new(iso_net(), 10).unwrap();
        assert!(matches!(fluid_solve(&inst, None, 1.0, 0.0), Err(OracleError::NonpositiveStep(_))));
    }

    #[test]
    fn known_model_matching() {
        assert_eq!(known_model(&iso_net()), Some(KnownModel::ReversibleIsomerization));
        let bd = parse_network("0 -> S @ 1.0\nS -> 0 @ 1.0").unwrap();
        assert_eq!(known_model(&bd), Some(KnownModel::BirthDeath));
        let dd = parse_network("S1 -> 0 @ 1.0\n2*S1 -> S2 @ 0.002\nS2 -> 2*S1 @ 0.5\nS2 -> S3 @ 0.04").unwrap();
        assert_eq!(known_model(&dd), None);
    }
}
