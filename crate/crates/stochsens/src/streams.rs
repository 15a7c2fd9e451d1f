//! Deterministic, splittable random streams.
//!
//! Every random decision in the crate is drawn from a stream identified by a
//! [`StreamKey`]. The key — never the order in which streams happen to be
//! opened — determines the variate sequence, so a study run with one worker
//! and with eight workers consumes identical randomness per trajectory.
//!
//! The generator is ChaCha8 keyed on the packed key fields. ChaCha is a
//! counter-mode stream cipher, so distinct keys yield statistically
//! independent sequences and the same key always replays the same sequence on
//! any platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Which leg of a coupled pair a stream feeds.
///
/// Couplings that share randomness across legs hand both legs keys with the
/// same `Leg` value; independent-stream couplings separate them here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Leg {
    Nominal,
    PerturbedPlus,
    PerturbedMinus,
}

impl Leg {
    fn tag(self) -> u8 {
        match self {
            Leg::Nominal => 0,
            Leg::PerturbedPlus => 1,
            Leg::PerturbedMinus => 2,
        }
    }
}

/// Identity of one random stream.
///
/// `channel_index` 0 is the uniform stream consumed by the direct method;
/// `k >= 1` is the internal Poisson clock of reaction channel `k` used by the
/// random time change simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub trajectory_index: u64,
    pub channel_index: u32,
    pub leg: Leg,
}

impl StreamKey {
    /// Direct-method uniform stream for one trajectory.
    pub fn direct(seed: u64, trajectory_index: u64) -> Self {
        StreamKey { seed, trajectory_index, channel_index: 0, leg: Leg::Nominal }
    }

    /// Direct-method stream for a specific coupling leg.
    pub fn direct_leg(seed: u64, trajectory_index: u64, leg: Leg) -> Self {
        StreamKey { seed, trajectory_index, channel_index: 0, leg }
    }

    /// Internal Poisson clock of reaction channel `channel` (1-based).
    pub fn channel(seed: u64, trajectory_index: u64, channel: u32) -> Self {
        debug_assert!(channel >= 1, "channel clocks are 1-based");
        StreamKey { seed, trajectory_index, channel_index: channel, leg: Leg::Nominal }
    }

    fn chacha_seed(self) -> [u8; 32] {
        let mut bytes = [0u8; 32];
        bytes[0..8].copy_from_slice(&self.seed.to_le_bytes());
        bytes[8..16].copy_from_slice(&self.trajectory_index.to_le_bytes());
        bytes[16..20].copy_from_slice(&self.channel_index.to_le_bytes());
        bytes[20] = self.leg.tag();
        // Fixed domain tag so the zero key is not the all-zero ChaCha key.
        bytes[24..32].copy_from_slice(b"stochsns");
        bytes
    }
}

/// Keys for the two uniform streams of a direct-method coupled pair.
///
/// Common random numbers hands both legs the *same* key, so each leg replays
/// the identical uniform sequence at its own demand rate; independent random
/// numbers separates the legs. For two-sided differences the independent legs
/// are the minus/plus pair.
pub fn crn_keys(seed: u64, trajectory_index: u64, common: bool, two_sided: bool) -> (StreamKey, StreamKey) {
    if common {
        let k = StreamKey::direct(seed, trajectory_index);
        (k, k)
    } else if two_sided {
        (
            StreamKey::direct_leg(seed, trajectory_index, Leg::PerturbedMinus),
            StreamKey::direct_leg(seed, trajectory_index, Leg::PerturbedPlus),
        )
    } else {
        (
            StreamKey::direct_leg(seed, trajectory_index, Leg::Nominal),
            StreamKey::direct_leg(seed, trajectory_index, Leg::PerturbedPlus),
        )
    }
}

/// Keys for the `m` shared channel clocks of a common-reaction-path pair.
pub fn crp_keys(seed: u64, trajectory_index: u64, n_channels: usize) -> Vec<StreamKey> {
    (1..=n_channels as u32)
        .map(|k| StreamKey::channel(seed, trajectory_index, k))
        .collect()
}

/// A single-consumer source of uniform variates on the open interval (0, 1).
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    /// Uniform variate in the open interval (0, 1); never exactly 0 or 1,
    /// so `-ln(u)` is always finite.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11; // 53 significant bits
        (bits as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0) // / 2^53
    }

    /// Unit-rate exponential variate.
    #[inline]
    pub fn next_exponential(&mut self) -> f64 {
        -self.next_uniform().ln()
    }
}

/// Open the stream identified by `key`.
pub fn open_stream(key: StreamKey) -> UniformStream {
    UniformStream { rng: ChaCha8Rng::from_seed(key.chacha_seed()) }
}

/// Derive a sub-seed for an independent block of work (a study cell, a CLI
/// rerun, ...) from the master seed and a structural tag.
///
/// SplitMix64 finalizer; the result depends only on the inputs, never on
/// scheduling.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
