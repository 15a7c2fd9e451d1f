//! Exact simulation of the jump process by the direct method and by the
//! random time change representation, plus coupled path pairs for finite
//! differences.

use thiserror::Error;

use crate::model::SystemInstance;
use crate::streams::{crn_keys, crp_keys, open_stream, UniformStream};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("propensity of channel {channel} is not finite at t = {t}")]
    PropensityNotFinite { channel: usize, t: f64 },
    #[error("event cap of {cap} events exceeded at t = {t}")]
    EventCapExceeded { cap: u64, t: f64 },
    #[error("t_final must be positive, got {0}")]
    NonpositiveHorizon(f64),
    #[error("query time {t} outside [0, {t_final}]")]
    TimeOutOfRange { t: f64, t_final: f64 },
    #[error("perturbation h must be nonzero")]
    ZeroPerturbation,
    #[error("perturbed rate c + h = {0} must stay positive")]
    NonpositivePerturbedRate(f64),
    #[error("parameter index {index} out of range (network has {len} reactions)")]
    BadParamIndex { index: usize, len: usize },
}

/// One recorded jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    /// Reaction channel, 0-based.
    pub channel: u32,
}

/// An exact SSA path together with per-channel reaction counts and the
/// running propensity integrals needed by the Girsanov weight.
///
/// Checkpoint `k` (for `k` in `0..=n_events`) describes the path just after
/// event `k-1` (checkpoint 0 is the initial condition): the post-jump state
/// is implicit, while `counts`, `cum`, and `intensity` store `R_j`, the
/// integral of `a_j` up to the checkpoint time, and the post-jump intensity
/// `a_j`. Between checkpoints the intensities are constant, so the integrals
/// extend exactly to any query time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    initial_state: Vec<i64>,
    final_state: Vec<i64>,
    rates: Vec<f64>,
    system_size: u64,
    t_final: f64,
    events: Vec<JumpEvent>,
    net_stoich: Vec<i64>, // m x n, row j = net change of channel j
    n_species: usize,
    n_channels: usize,
    counts: Vec<u64>,    // (n_events + 1) x m
    cum: Vec<f64>,       // (n_events + 1) x m
    intensity: Vec<f64>, // (n_events + 1) x m
}

impl Trajectory {
    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn initial_state(&self) -> &[i64] {
        &self.initial_state
    }

    pub fn final_state(&self) -> &[i64] {
        &self.final_state
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn system_size(&self) -> u64 {
        self.system_size
    }

    /// Deterministic rate constants the path was simulated under (any
    /// coupled-pair override already applied).
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Number of checkpoints with time <= t (index of the row in effect at t).
    fn checkpoint_at(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time <= t)
    }

    fn row(&self, k: usize) -> std::ops::Range<usize> {
        k * self.n_channels..(k + 1) * self.n_channels
    }

    fn checkpoint_time(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.events[k - 1].time
        }
    }

    /// State at time `t`, right-continuous: the post-jump state of the last
    /// event with time <= t.
    pub fn state_at(&self, t: f64) -> Result<Vec<i64>, SimError> {
        if !(0.0..=self.t_final).contains(&t) {
            return Err(SimError::TimeOutOfRange { t, t_final: self.t_final });
        }
        let k = self.checkpoint_at(t);
        let mut state = self.initial_state.clone();
        for e in &self.events[..k] {
            let j = e.channel as usize;
            for (i, s) in state.iter_mut().enumerate() {
                *s += self.net_stoich[j * self.n_species + i];
            }
        }
        Ok(state)
    }

    /// Reaction count `R_j(t)` (events of channel `j` with time <= t).
    pub fn reaction_count_at(&self, j: usize, t: f64) -> Result<u64, SimError> {
        if !(0.0..=self.t_final).contains(&t) {
            return Err(SimError::TimeOutOfRange { t, t_final: self.t_final });
        }
        let k = self.checkpoint_at(t);
        Ok(self.counts[self.row(k)][j])
    }

    /// Compensator `integral of a_j over (0, t]`, exact for the piecewise
    /// constant intensity (floating-point summation error only).
    pub fn compensator_at(&self, j: usize, t: f64) -> Result<f64, SimError> {
        if !(0.0..=self.t_final).contains(&t) {
            return Err(SimError::TimeOutOfRange { t, t_final: self.t_final });
        }
        let k = self.checkpoint_at(t);
        let base = self.cum[self.row(k)][j];
        let a = self.intensity[self.row(k)][j];
        Ok(base + a * (t - self.checkpoint_time(k)))
    }

    /// Total reaction count of channel `j` at `t_final`.
    pub fn reaction_count(&self, j: usize) -> u64 {
        self.counts[self.row(self.events.len())][j]
    }

    /// Compensator of channel `j` at `t_final`.
    pub fn compensator(&self, j: usize) -> f64 {
        self.compensator_at(j, self.t_final).expect("t_final is in range")
    }

    /// Write the path as CSV: `time,channel,state_1..state_n` with the
    /// 1-based channel of each jump.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        let names: Vec<String> = (1..=self.n_species).map(|i| format!("state_{i}")).collect();
        writeln!(w, "time,channel,{}", names.join(","))?;
        let mut state = self.initial_state.clone();
        for e in &self.events {
            let j = e.channel as usize;
            for (i, s) in state.iter_mut().enumerate() {
                *s += self.net_stoich[j * self.n_species + i];
            }
            let cols: Vec<String> = state.iter().map(|s| s.to_string()).collect();
            writeln!(w, "{},{},{}", e.time, e.channel + 1, cols.join(","))?;
        }
        Ok(())
    }
}

/// Accumulates checkpoint rows during simulation.
struct TrajectoryBuilder {
    traj: Trajectory,
    state: Vec<i64>,
    t_prev: f64,
    cur_cum: Vec<f64>,
    cur_counts: Vec<u64>,
    cur_intensity: Vec<f64>,
}

impl TrajectoryBuilder {
    fn new(instance: &SystemInstance, rates: Vec<f64>, t_final: f64) -> Self {
        let net = instance.network();
        let m = net.n_reactions();
        let n = net.n_species();
        let mut net_stoich = Vec::with_capacity(m * n);
        for r in &net.reactions {
            net_stoich.extend(r.net_change());
        }
        let initial_state = instance.initial_state().to_vec();
        let mut traj = Trajectory {
            initial_state: initial_state.clone(),
            final_state: Vec::new(),
            rates,
            system_size: instance.system_size(),
            t_final,
            events: Vec::new(),
            net_stoich,
            n_species: n,
            n_channels: m,
            counts: vec![0; m],
            cum: vec![0.0; m],
            intensity: vec![0.0; m],
        };
        traj.intensity.clear();
        let m = traj.n_channels;
        TrajectoryBuilder {
            traj,
            state: initial_state,
            t_prev: 0.0,
            cur_cum: vec![0.0; m],
            cur_counts: vec![0; m],
            cur_intensity: vec![0.0; m],
        }
    }

    /// Record the intensities in force from the current checkpoint onward.
    fn set_intensities(&mut self, a: &[f64]) {
        debug_assert_eq!(self.traj.intensity.len() % self.traj.n_channels, 0);
        self.traj.intensity.extend_from_slice(a);
        self.cur_intensity.copy_from_slice(a);
    }

    /// Append a jump of `channel` at `time`; intensities of the closing
    /// interval are the most recently recorded row.
    fn push_event(&mut self, time: f64, channel: usize) {
        let dt = time - self.t_prev;
        for (c, a) in self.cur_cum.iter_mut().zip(&self.cur_intensity) {
            *c += a * dt;
        }
        self.cur_counts[channel] += 1;
        self.traj.cum.extend_from_slice(&self.cur_cum);
        self.traj.counts.extend_from_slice(&self.cur_counts);
        self.traj.events.push(JumpEvent { time, channel: channel as u32 });
        for (i, s) in self.state.iter_mut().enumerate() {
            *s += self.traj.net_stoich[channel * self.traj.n_species + i];
            debug_assert!(*s >= 0, "state went negative");
        }
        self.t_prev = time;
    }

    fn state(&self) -> &[i64] {
        &self.state
    }

    fn finish(mut self) -> Trajectory {
        self.traj.final_state = self.state;
        debug_assert_eq!(self.traj.intensity.len(), (self.traj.events.len() + 1) * self.traj.n_channels);
        self.traj
    }
}

/// Simulate one exact path with Gillespie's direct method.
///
/// The whole path consumes a single uniform stream in demand order: one
/// variate for each exponential holding time, one for each channel
/// selection. `rates_override`, when given, replaces the network's
/// deterministic rate constants.
pub fn simulate_direct(
    instance: &SystemInstance,
    rates_override: Option<&[f64]>,
    t_final: f64,
    stream: &mut UniformStream,
) -> Result<Trajectory, SimError> {
    if t_final <= 0.0 {
        return Err(SimError::NonpositiveHorizon(t_final));
    }
    let m = instance.network().n_reactions();
    let rates: Vec<f64> = match rates_override {
        Some(r) => r.to_vec(),
        None => instance.network().rate_consts(),
    };
    let mut b = TrajectoryBuilder::new(instance, rates.clone(), t_final);
    let mut a = vec![0.0; m];
    let mut t = 0.0;
    loop {
        let mut a0 = 0.0;
        for j in 0..m {
            a[j] = instance.propensity_with(b.state(), j, rates[j]);
            if !a[j].is_finite() {
                return Err(SimError::PropensityNotFinite { channel: j, t });
            }
            a0 += a[j];
        }
        b.set_intensities(&a);
        if a0 <= 0.0 {
            break; // absorbing state
        }
        let tau = stream.next_exponential() / a0;
        if t + tau > t_final {
            break;
        }
        t += tau;
        let target = stream.next_uniform() * a0;
        let mut acc = 0.0;
        let mut chosen = m - 1;
        for (j, &aj) in a.iter().enumerate() {
            acc += aj;
            if target < acc {
                chosen = j;
                break;
            }
        }
        b.push_event(t, chosen);
        if b.traj.events.len() as u64 >= instance.event_cap() {
            return Err(SimError::EventCapExceeded { cap: instance.event_cap(), t });
        }
    }
    Ok(b.finish())
}

/// Simulate one exact path by the random time change representation
/// (modified next reaction method).
///
/// Channel `j` consumes only `streams[j]`, its own unit-rate internal clock,
/// which is what makes the common-reaction-path coupling possible. Equal
/// candidate firing times break toward the lowest channel index.
pub fn simulate_rtc(
    instance: &SystemInstance,
    rates_override: Option<&[f64]>,
    t_final: f64,
    streams: &mut [UniformStream],
) -> Result<Trajectory, SimError> {
    if t_final <= 0.0 {
        return Err(SimError::NonpositiveHorizon(t_final));
    }
    let m = instance.network().n_reactions();
    assert_eq!(streams.len(), m, "one stream per reaction channel");
    let rates: Vec<f64> = match rates_override {
        Some(r) => r.to_vec(),
        None => instance.network().rate_consts(),
    };
    let mut b = TrajectoryBuilder::new(instance, rates.clone(), t_final);
    let mut consumed = vec![0.0; m]; // internal time T_j already spent
    let mut next_fire: Vec<f64> = streams.iter_mut().map(|s| s.next_exponential()).collect();
    let mut a = vec![0.0; m];
    let mut t = 0.0;
    loop {
        for j in 0..m {
            a[j] = instance.propensity_with(b.state(), j, rates[j]);
            if !a[j].is_finite() {
                return Err(SimError::PropensityNotFinite { channel: j, t });
            }
        }
        b.set_intensities(&a);
        let mut best = f64::INFINITY;
        let mut chosen = usize::MAX;
        for j in 0..m {
            if a[j] > 0.0 {
                let dt = (next_fire[j] - consumed[j]) / a[j];
                if dt < best {
                    best = dt;
                    chosen = j;
                }
            }
        }
        if chosen == usize::MAX || t + best > t_final {
            break;
        }
        t += best;
        for j in 0..m {
            consumed[j] += a[j] * best;
        }
        next_fire[chosen] += streams[chosen].next_exponential();
        b.push_event(t, chosen);
        if b.traj.events.len() as u64 >= instance.event_cap() {
            return Err(SimError::EventCapExceeded { cap: instance.event_cap(), t });
        }
    }
    Ok(b.finish())
}

/// How the two legs of a finite-difference pair share randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coupling {
    /// Independent uniform streams, direct method.
    Irn,
    /// Common uniform stream consumed in lockstep demand order, direct
    /// method; the legs desynchronize naturally after the first differing
    /// jump and no re-synchronization is attempted.
    Crn,
    /// Common per-channel Poisson clocks, random time change simulator.
    Crp,
}

impl Coupling {
    pub fn label(self) -> &'static str {
        match self {
            Coupling::Irn => "IRN",
            Coupling::Crn => "CRN",
            Coupling::Crp => "CRP",
        }
    }
}

/// One- or two-sided finite difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FdOrder {
    /// Legs at c and c + h, divisor h.
    OneSided,
    /// Legs at c - h and c + h, divisor 2h.
    TwoSided,
}

/// A coupled pair of paths differing only in one rate constant.
///
/// For [`FdOrder::OneSided`] the legs sit at `c` and `c + h`; for
/// [`FdOrder::TwoSided`] the `nominal` leg sits at `c - h` and the
/// `perturbed` leg at `c + h`.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub nominal: Trajectory,
    pub perturbed: Trajectory,
    pub coupling: Coupling,
    pub order: FdOrder,
    pub h: f64,
    pub param_index: usize,
}

impl CoupledPair {
    /// The finite-difference quotient of `f` evaluated at time `t`.
    pub fn quotient_at(&self, f: impl Fn(&[i64]) -> f64, t: f64) -> Result<f64, SimError> {
        let hi = f(&self.perturbed.state_at(t)?);
        let lo = f(&self.nominal.state_at(t)?);
        Ok((hi - lo) / self.divisor())
    }

    /// The finite-difference quotient of `f` at the final time.
    pub fn quotient(&self, f: impl Fn(&[i64]) -> f64) -> f64 {
        (f(self.perturbed.final_state()) - f(self.nominal.final_state())) / self.divisor()
    }

    fn divisor(&self) -> f64 {
        match self.order {
            FdOrder::OneSided => self.h,
            FdOrder::TwoSided => 2.0 * self.h,
        }
    }
}

/// Simulate a coupled pair for the finite-difference estimator.
///
/// Requires `h != 0` and both leg rates positive; tests that need the
/// degenerate `h == 0` sanity pair use [`simulate_coupled_unchecked`].
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled(
    instance: &SystemInstance,
    param_index: usize,
    h: f64,
    coupling: Coupling,
    order: FdOrder,
    t_final: f64,
    seed: u64,
    trajectory_index: u64,
) -> Result<CoupledPair, SimError> {
    if h == 0.0 {
        return Err(SimError::ZeroPerturbation);
    }
    simulate_coupled_unchecked(instance, param_index, h, coupling, order, t_final, seed, trajectory_index)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn simulate_coupled_unchecked(
    instance: &SystemInstance,
    param_index: usize,
    h: f64,
    coupling: Coupling,
    order: FdOrder,
    t_final: f64,
    seed: u64,
    trajectory_index: u64,
) -> Result<CoupledPair, SimError> {
    let m = instance.network().n_reactions();
    if param_index >= m {
        return Err(SimError::BadParamIndex { index: param_index, len: m });
    }
    let base = instance.network().rate_consts();
    let mut lo = base.clone();
    let mut hi = base;
    match order {
        FdOrder::OneSided => hi[param_index] += h,
        FdOrder::TwoSided => {
            lo[param_index] -= h;
            hi[param_index] += h;
        }
    }
    if lo[param_index] <= 0.0 || hi[param_index] <= 0.0 {
        return Err(SimError::NonpositivePerturbedRate(lo[param_index].min(hi[param_index])));
    }

    let (nominal, perturbed) = match coupling {
        Coupling::Irn | Coupling::Crn => {
            let (key_lo, key_hi) = crn_keys(
                seed,
                trajectory_index,
                coupling == Coupling::Crn,
                order == FdOrder::TwoSided,
            );
            let mut s_lo = open_stream(key_lo);
            let mut s_hi = open_stream(key_hi);
            (
                simulate_direct(instance, Some(&lo), t_final, &mut s_lo)?,
                simulate_direct(instance, Some(&hi), t_final, &mut s_hi)?,
            )
        }
        Coupling::Crp => {
            let keys = crp_keys(seed, trajectory_index, m);
            let mut s_lo: Vec<_> = keys.iter().map(|&k| open_stream(k)).collect();
            let mut s_hi: Vec<_> = keys.iter().map(|&k| open_stream(k)).collect();
            (
                simulate_rtc(instance, Some(&lo), t_final, &mut s_lo)?,
                simulate_rtc(instance, Some(&hi), t_final, &mut s_hi)?,
            )
        }
    };
    Ok(CoupledPair { nominal, perturbed, coupling, order, h, param_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_network, SystemInstance};
    use crate::oracles;
    use crate::streams::StreamKey;

    fn birth_death(c1: f64, c2: f64) -> SystemInstance {
        let net = parse_network(&format!("0 -> S @ {c1}\nS -> 0 @ {c2}")).unwrap();
        SystemInstance::with_initial(net, 10, &[1.0]).unwrap()
    }

    fn iso_instance(n: u64) -> SystemInstance {
        let net = parse_network("S1 -> S2 @ 0.3\nS2 -> S1 @ 0.2").unwrap();
        SystemInstance::with_initial(net, n, &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn absorbing_state_yields_zero_events() {
        let net = parse_network("S -> 0 @ 1.0").unwrap();
        let inst = SystemInstance::with_initial(net, 1, &[0.0]).unwrap();
        let mut s = open_stream(StreamKey::direct(0, 0));
        let traj = simulate_direct(&inst, None, 5.0, &mut s).unwrap();
        assert_eq!(traj.n_events(), 0);
        assert_eq!(traj.final_state(), &[0]);
        assert_eq!(traj.compensator(0), 0.0);
    }

    #[test]
    fn same_stream_key_gives_identical_paths() {
        let inst = iso_instance(10);
        let run = || {
            let mut s = open_stream(StreamKey::direct(7, 3));
            simulate_direct(&inst, None, 5.0, &mut s).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.events(), b.events());
        assert_eq!(a.final_state(), b.final_state());
    }

    #[test]
    fn direct_method_mean_matches_birth_death_oracle() {
        // E X(2) = 10 exactly at c1 = c2 = x0 = 1, N = 10.
        let inst = birth_death(1.0, 1.0);
        let n_paths = 100_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n_paths {
            let mut s = open_stream(StreamKey::direct(12, i));
            let traj = simulate_direct(&inst, None, 2.0, &mut s).unwrap();
            let x = traj.final_state()[0] as f64;
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n_paths as f64;
        let var = (sumsq - sum * sum / n_paths as f64) / (n_paths - 1) as f64;
        let se = (var / n_paths as f64).sqrt();
        let truth = oracles::bd_mean(&oracles::BirthDeathParams { c1: 1.0, c2: 1.0, x0: 1.0, n: 10, t: 2.0 });
        assert_eq!(truth, 10.0);
        assert!((mean - truth).abs() < 3.0 * se, "mean {mean} vs {truth} (se {se})");
    }

    #[test]
    fn rtc_pure_death_absorbs_with_exact_event_count() {
        let net = parse_network("S -> 0 @ 1.0").unwrap();
        let inst = SystemInstance::with_initial(net, 5, &[1.0]).unwrap();
        for i in 0..200 {
            let mut streams = vec![open_stream(StreamKey::channel(3, i, 1))];
            let traj = simulate_rtc(&inst, None, 60.0, &mut streams).unwrap();
            assert_eq!(traj.n_events(), 5);
            assert_eq!(traj.final_state(), &[0]);
        }
    }

    #[test]
    fn rtc_is_deterministic_in_its_streams() {
        let inst = iso_instance(10);
        let run = || {
            let mut streams: Vec<_> = (1..=2).map(|k| open_stream(StreamKey::channel(9, 4, k))).collect();
            simulate_rtc(&inst, None, 5.0, &mut streams).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.events(), b.events());
    }

    #[test]
    fn direct_and_rtc_agree_in_distribution() {
        // Mean and variance of X1(T) for reversible isomerization from both
        // simulators, within 3 combined standard errors, cross-checked
        // against the closed form.
        let inst = iso_instance(10);
        let n_paths = 100_000u64;
        let stats = |use_rtc: bool| {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for i in 0..n_paths {
                let x = if use_rtc {
                    let mut streams: Vec<_> =
                        (1..=2).map(|k| open_stream(StreamKey::channel(21, i, k))).collect();
                    simulate_rtc(&inst, None, 10.0, &mut streams).unwrap().final_state()[0] as f64
                } else {
                    let mut s = open_stream(StreamKey::direct(22, i));
                    simulate_direct(&inst, None, 10.0, &mut s).unwrap().final_state()[0] as f64
                };
                sum += x;
                sumsq += x * x;
            }
            let mean = sum / n_paths as f64;
            let var = (sumsq - sum * sum / n_paths as f64) / (n_paths - 1) as f64;
            (mean, var, (var / n_paths as f64).sqrt())
        };
        let (m_d, v_d, se_d) = stats(false);
        let (m_r, v_r, se_r) = stats(true);
        let (truth, _) = oracles::iso_mean(10.0, 10.0, 0.3, 0.2, 10.0);
        let se_comb = (se_d * se_d + se_r * se_r).sqrt();
        assert!((m_d - m_r).abs() < 3.0 * se_comb, "{m_d} vs {m_r}");
        assert!((m_d - truth).abs() < 3.0 * se_d);
        assert!((m_r - truth).abs() < 3.0 * se_r);
        // variance of a variance estimate ~ var * sqrt(2/n); compare loosely
        let tol = 3.0 * v_d * (2.0 / n_paths as f64).sqrt() * 2.0;
        assert!((v_d - v_r).abs() < tol, "{v_d} vs {v_r}");
    }

    #[test]
    fn state_queries_are_right_continuous() {
        let inst = iso_instance(2);
        let mut s = open_stream(StreamKey::direct(5, 0));
        let traj = simulate_direct(&inst, None, 5.0, &mut s).unwrap();
        assert!(traj.n_events() > 0);
        assert_eq!(traj.state_at(0.0).unwrap(), traj.initial_state());
        let e = traj.events()[0];
        let mut expected = traj.initial_state().to_vec();
        let j = e.channel as usize;
        let net = inst.network().reactions[j].net_change();
        for (i, v) in expected.iter_mut().enumerate() {
            *v += net[i];
        }
        assert_eq!(traj.state_at(e.time).unwrap(), expected, "post-jump at event time");
        assert_eq!(traj.state_at(traj.t_final()).unwrap(), traj.final_state());
        assert!(traj.state_at(traj.t_final() + 1.0).is_err());
        assert!(traj.state_at(-0.1).is_err());
    }

    #[test]
    fn conservation_law_holds_along_paths() {
        // X1 + X2 is invariant for reversible isomerization.
        let inst = iso_instance(10);
        let mut s = open_stream(StreamKey::direct(31, 0));
        let traj = simulate_direct(&inst, None, 10.0, &mut s).unwrap();
        let total: i64 = traj.initial_state().iter().sum();
        for e in traj.events() {
            let st = traj.state_at(e.time).unwrap();
            assert_eq!(st.iter().sum::<i64>(), total);
            assert!(st.iter().all(|&x| x >= 0));
        }
    }

    #[test]
    fn compensated_counts_have_mean_near_zero() {
        // R_j(T) minus its compensator is a martingale started at 0.
        let inst = iso_instance(10);
        let n_paths = 20_000u64;
        for j in 0..2 {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for i in 0..n_paths {
                let mut s = open_stream(StreamKey::direct(47, i));
                let traj = simulate_direct(&inst, None, 5.0, &mut s).unwrap();
                let m = traj.reaction_count(j) as f64 - traj.compensator(j);
                sum += m;
                sumsq += m * m;
            }
            let mean = sum / n_paths as f64;
            let var = (sumsq - sum * sum / n_paths as f64) / (n_paths - 1) as f64;
            let se = (var / n_paths as f64).sqrt();
            assert!(mean.abs() < 3.0 * se, "channel {j}: mean {mean}, se {se}");
        }
    }

    #[test]
    fn h_zero_pairs_are_identical_under_crn_and_crp() {
        let inst = iso_instance(5);
        for coupling in [Coupling::Crn, Coupling::Crp] {
            let pair = simulate_coupled_unchecked(
                &inst, 0, 0.0, coupling, FdOrder::OneSided, 5.0, 77, 0,
            )
            .unwrap();
            assert_eq!(pair.nominal.events(), pair.perturbed.events(), "{coupling:?}");
        }
        assert!(matches!(
            simulate_coupled(&inst, 0, 0.0, Coupling::Crn, FdOrder::OneSided, 5.0, 1, 0),
            Err(SimError::ZeroPerturbation)
        ));
    }

    #[test]
    fn crp_legs_correlate_and_irn_legs_do_not() {
        let inst = iso_instance(10);
        let n_pairs = 10_000u64;
        let corr = |coupling: Coupling| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..n_pairs {
                let p = simulate_coupled(&inst, 0, 0.01, coupling, FdOrder::OneSided, 10.0, 501, i).unwrap();
                xs.push(p.nominal.final_state()[0] as f64);
                ys.push(p.perturbed.final_state()[0] as f64);
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let mut cov = 0.0;
            let mut vx = 0.0;
            let mut vy = 0.0;
            for i in 0..xs.len() {
                cov += (xs[i] - mx) * (ys[i] - my);
                vx += (xs[i] - mx).powi(2);
                vy += (ys[i] - my).powi(2);
            }
            cov / (vx * vy).sqrt()
        };
        assert!(corr(Coupling::Crp) > 0.9);
        assert!(corr(Coupling::Irn).abs() < 0.05);
    }

    #[test]
    fn irn_fd_numerator_variance_splits_into_leg_variances() {
        let inst = iso_instance(10);
        let n_pairs = 20_000u64;
        let mut d = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for i in 0..n_pairs {
            let p = simulate_coupled(&inst, 0, 0.01, Coupling::Irn, FdOrder::OneSided, 10.0, 640, i).unwrap();
            let a = p.nominal.final_state()[0] as f64;
            let b = p.perturbed.final_state()[0] as f64;
            lo.push(a);
            hi.push(b);
            d.push(b - a);
        }
        let var = |v: &[f64]| {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
        };
        let (vd, vl, vh) = (var(&d), var(&lo), var(&hi));
        // SE of a variance estimate is roughly var * sqrt(2/n).
        let se = (vl + vh) * (2.0 / n_pairs as f64).sqrt() * 2.0;
        assert!((vd - (vl + vh)).abs() < 3.0 * se, "{vd} vs {}", vl + vh);
    }

    #[test]
    fn event_cap_is_an_error_not_truncation() {
        let inst = birth_death(1.0, 1.0).with_event_cap(10);
        let mut s = open_stream(StreamKey::direct(1, 1));
        assert!(matches!(
            simulate_direct(&inst, None, 50.0, &mut s),
            Err(SimError::EventCapExceeded { cap: 10, .. })
        ));
    }

    #[test]
    fn horizon_must_be_positive() {
        let inst = birth_death(1.0, 1.0);
        let mut s = open_stream(StreamKey::direct(1, 1));
        assert!(matches!(simulate_direct(&inst, None, 0.0, &mut s), Err(SimError::NonpositiveHorizon(_))));
    }
}
