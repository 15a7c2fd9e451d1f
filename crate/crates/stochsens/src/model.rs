//! Reaction networks, system-size-scaled mass action propensities, and
//! parameter conversions.
//!
//! # Model file grammar
//!
//! Plain text, line oriented; `#` starts a comment anywhere on a line.
//! Three kinds of non-empty lines:
//!
//! ```text
//! species S1 S2 S3          # optional: fixes species index order
//! init S1 = 10              # initial concentration x0 (decimal or a/b)
//! 2*S1 + S2 -> S3 @ 0.25    # reaction: reactants -> products @ rate
//! ```
//!
//! Reactant/product complexes are `+`-separated terms `k*Name` (`k` a
//! positive integer, default 1); `0` denotes the empty complex. Without a
//! `species` line, species are indexed in order of first appearance. The
//! copy-number initial condition of a [`SystemInstance`] with system size `N`
//! is `N * x0`, which must be an integer vector.
//!
//! Propensities take the stochastic mass action form
//! `a_j(x) = c_j / N^(|w_j|-1) * prod_i C(x_i, w_ij)`, where `w_j` counts the
//! molecules consumed by reaction `j` and `c_j` is the `N`-independent
//! ("deterministic") rate constant written in the model file.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown species `{name}` (not in the species declaration)")]
    UnknownSpecies { line: usize, name: String },
    #[error("line {line}: rate constant must be positive, got {value}")]
    NonpositiveRate { line: usize, value: f64 },
    #[error("model defines no reactions")]
    EmptyModel,
    #[error("species `{name}` has no `init` entry and no default")]
    MissingInitial { name: String },
    #[error("initial copy numbers N*x0 = {value} for `{name}` is not an integer (N = {n})")]
    NonIntegralInitial { name: String, value: f64, n: u64 },
    #[error("initial concentration for `{name}` is negative")]
    NegativeInitial { name: String },
    #[error("system size must be positive")]
    ZeroSystemSize,
    #[error("reaction index {index} out of range (network has {len} reactions)")]
    BadReactionIndex { index: usize, len: usize },
}

/// One reaction channel with split stoichiometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    /// Molecules consumed per species (the reactant complex).
    pub reactant_counts: Vec<u32>,
    /// Molecules created per species (the product complex).
    pub product_counts: Vec<u32>,
    /// Deterministic (N-independent) rate constant `c_j`.
    pub rate_const: f64,
}

impl Reaction {
    /// Net state change when this channel fires.
    pub fn net_change(&self) -> Vec<i64> {
        self.product_counts
            .iter()
            .zip(&self.reactant_counts)
            .map(|(&p, &r)| i64::from(p) - i64::from(r))
            .collect()
    }

    /// Total number of molecules consumed, `|w_j|` (the reaction order).
    pub fn order(&self) -> u32 {
        self.reactant_counts.iter().sum()
    }
}

/// A reaction network: named species, reactions in file order, and the
/// per-unit-size initial concentrations parsed from `init` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub species: Vec<String>,
    pub reactions: Vec<Reaction>,
    /// Initial concentration x0 (copy numbers are `N * x0`). Species without
    /// an `init` line default to 0.
    pub initial_concentration: Vec<f64>,
}

impl ReactionNetwork {
    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    /// Deterministic rate constants in reaction order.
    pub fn rate_consts(&self) -> Vec<f64> {
        self.reactions.iter().map(|r| r.rate_const).collect()
    }

    /// Density-dependent limit rate of channel `j` at concentration `conc`:
    /// `a_j(x) = c_j * prod_i x_i^(w_ij) / w_ij!`.
    pub fn fluid_rate(&self, conc: &[f64], j: usize) -> f64 {
        self.fluid_rate_with(conc, j, self.reactions[j].rate_const)
    }

    /// [`ReactionNetwork::fluid_rate`] with an overridden rate constant.
    pub fn fluid_rate_with(&self, conc: &[f64], j: usize, rate: f64) -> f64 {
        let mut v = rate;
        for (i, &w) in self.reactions[j].reactant_counts.iter().enumerate() {
            for k in 0..w {
                v *= conc[i] / f64::from(k + 1);
            }
        }
        v
    }
}

/// Parse a model file, rejecting nonpositive rate constants.
///
/// Zero rates make the Girsanov weight undefined; a network intended for
/// FD-only studies of a switched-off channel can be parsed with
/// [`parse_network_allowing_zero_rates`].
pub fn parse_network(text: &str) -> Result<ReactionNetwork, ModelError> {
    parse(text, false)
}

/// Parse a model file, allowing `rate == 0` (FD-only studies).
pub fn parse_network_allowing_zero_rates(text: &str) -> Result<ReactionNetwork, ModelError> {
    parse(text, true)
}

fn parse(text: &str, allow_zero: bool) -> Result<ReactionNetwork, ModelError> {
    let mut species: Vec<String> = Vec::new();
    let mut declared = false;
    let mut inits: Vec<(usize, f64, String)> = Vec::new();
    // (reactants, products, rate) with species resolved lazily
    type Complex = Vec<(usize, u32)>;
    let mut reactions: Vec<(Complex, Complex, f64)> = Vec::new();

    let mut lookup = |name: &str, declared: bool, species: &mut Vec<String>, line: usize| {
        if let Some(i) = species.iter().position(|s| s == name) {
            Ok(i)
        } else if declared {
            Err(ModelError::UnknownSpecies { line, name: name.to_string() })
        } else {
            species.push(name.to_string());
            Ok(species.len() - 1)
        }
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stripped = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }

        if let Some(rest) = stripped.strip_prefix("species") {
            if !rest.starts_with(char::is_whitespace) {
                return Err(ModelError::Syntax { line, msg: "expected `species NAME...`".into() });
            }
            if declared || !species.is_empty() {
                return Err(ModelError::Syntax {
                    line,
                    msg: "species declaration must be unique and precede reactions".into(),
                });
            }
            for name in rest.split_whitespace() {
                check_name(name, line)?;
                if species.iter().any(|s| s == name) {
                    return Err(ModelError::Syntax { line, msg: format!("duplicate species `{name}`") });
                }
                species.push(name.to_string());
            }
            if species.is_empty() {
                return Err(ModelError::Syntax { line, msg: "empty species declaration".into() });
            }
            declared = true;
            continue;
        }

        if let Some(rest) = stripped.strip_prefix("init") {
            if !rest.starts_with(char::is_whitespace) {
                return Err(ModelError::Syntax { line, msg: "expected `init NAME = VALUE`".into() });
            }
            let (name, value) = rest.split_once('=').ok_or_else(|| ModelError::Syntax {
                line,
                msg: "expected `init NAME = VALUE`".into(),
            })?;
            let name = name.trim();
            check_name(name, line)?;
            let idx = lookup(name, declared, &mut species, line)?;
            let v = parse_rational(value.trim()).ok_or_else(|| ModelError::Syntax {
                line,
                msg: format!("cannot parse initial value `{}`", value.trim()),
            })?;
            if v < 0.0 {
                return Err(ModelError::NegativeInitial { name: name.to_string() });
            }
            inits.push((idx, v, name.to_string()));
            continue;
        }

        // Reaction line: LHS -> RHS @ RATE
        let (complexes, rate_str) = stripped.rsplit_once('@').ok_or_else(|| ModelError::Syntax {
            line,
            msg: "reaction line must end with `@ rate`".into(),
        })?;
        let (lhs, rhs) = complexes.split_once("->").ok_or_else(|| ModelError::Syntax {
            line,
            msg: "reaction line must contain `->`".into(),
        })?;
        let rate: f64 = rate_str.trim().parse().map_err(|_| ModelError::Syntax {
            line,
            msg: format!("cannot parse rate `{}`", rate_str.trim()),
        })?;
        if !rate.is_finite() || rate < 0.0 || (rate == 0.0 && !allow_zero) {
            return Err(ModelError::NonpositiveRate { line, value: rate });
        }
        let lhs_terms = parse_complex(lhs, line, declared, &mut species, &mut lookup)?;
        let rhs_terms = parse_complex(rhs, line, declared, &mut species, &mut lookup)?;
        reactions.push((lhs_terms, rhs_terms, rate));
    }

    if reactions.is_empty() {
        return Err(ModelError::EmptyModel);
    }

    let n = species.len();
    let mut initial = vec![0.0; n];
    for (idx, v, _) in inits {
        initial[idx] = v;
    }
    let reactions = reactions
        .into_iter()
        .map(|(lhs, rhs, rate)| {
            let mut reactant_counts = vec![0u32; n];
            let mut product_counts = vec![0u32; n];
            for (i, k) in lhs {
                reactant_counts[i] += k;
            }
            for (i, k) in rhs {
                product_counts[i] += k;
            }
            Reaction { reactant_counts, product_counts, rate_const: rate }
        })
        .collect();

    Ok(ReactionNetwork { species, reactions, initial_concentration: initial })
}

fn check_name(name: &str, line: usize) -> Result<(), ModelError> {
    let mut chars = name.chars();
    let ok = match chars.next() {
        Some(c) => (c.is_ascii_alphabetic() || c == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        None => false,
    };
    if ok {
        Ok(())
    } else {
        Err(ModelError::Syntax { line, msg: format!("invalid species name `{name}`") })
    }
}

type Lookup<'a> = dyn FnMut(&str, bool, &mut Vec<String>, usize) -> Result<usize, ModelError> + 'a;

fn parse_complex(
    text: &str,
    line: usize,
    declared: bool,
    species: &mut Vec<String>,
    lookup: &mut Lookup<'_>,
) -> Result<Vec<(usize, u32)>, ModelError> {
    let text = text.trim();
    if text == "0" {
        return Ok(Vec::new());
    }
    if text.is_empty() {
        return Err(ModelError::Syntax { line, msg: "empty complex; use `0`".into() });
    }
    let mut out = Vec::new();
    for term in text.split('+') {
        let term = term.trim();
        let (count, name) = match term.split_once('*') {
            Some((k, name)) => {
                let k: u32 = k.trim().parse().map_err(|_| ModelError::Syntax {
                    line,
                    msg: format!("cannot parse stoichiometric count `{}`", k.trim()),
                })?;
                if k == 0 {
                    return Err(ModelError::Syntax { line, msg: "stoichiometric count 0".into() });
                }
                (k, name.trim())
            }
            None => (1, term),
        };
        check_name(name, line)?;
        let idx = lookup(name, declared, species, line)?;
        out.push((idx, count));
    }
    Ok(out)
}

fn parse_rational(s: &str) -> Option<f64> {
    if let Some((num, den)) = s.split_once('/') {
        let num: f64 = num.trim().parse().ok()?;
        let den: f64 = den.trim().parse().ok()?;
        if den == 0.0 {
            return None;
        }
        Some(num / den)
    } else {
        s.parse().ok()
    }
}

/// Convert a deterministic rate constant to the stochastic parameter
/// actually multiplying the combinatorial factor: `c'_j = c_j / N^(|w_j|-1)`.
pub fn to_stochastic_param(c: f64, n: u64, order: u32) -> f64 {
    c / (n as f64).powi(order as i32 - 1)
}

/// Inverse of [`to_stochastic_param`].
pub fn from_stochastic_param(c_prime: f64, n: u64, order: u32) -> f64 {
    c_prime * (n as f64).powi(order as i32 - 1)
}

/// Convert a sensitivity taken with respect to the deterministic parameter
/// into one with respect to the stochastic parameter:
/// `S'_j = S_j * N^(|w_j|-1)`. RSD, RB, and RE are identical under either
/// convention.
pub fn convert_sensitivity(s_deterministic: f64, n: u64, order: u32) -> f64 {
    s_deterministic * (n as f64).powi(order as i32 - 1)
}

/// Binomial coefficient C(x, k) in integer arithmetic (0 when x < k).
fn binomial(x: i64, k: u32) -> u128 {
    if x < i64::from(k) {
        return 0;
    }
    let x = x as u128;
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 0..u128::from(k) {
        num *= x - i;
        den *= i + 1;
    }
    num / den
}

/// Default guard against runaway simulations (events per path).
pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

/// A network instantiated at a concrete system size.
///
/// Immutable after construction; share freely across workers.
#[derive(Debug, Clone)]
pub struct SystemInstance {
    network: ReactionNetwork,
    system_size: u64,
    initial_state: Vec<i64>,
    event_cap: u64,
}

impl SystemInstance {
    /// Instantiate at system size `n` using the network's `init` concentrations.
    pub fn new(network: ReactionNetwork, system_size: u64) -> Result<Self, ModelError> {
        let x0 = network.initial_concentration.clone();
        Self::with_initial(network, system_size, &x0)
    }

    /// Instantiate with an explicit initial concentration vector; `N * x0`
    /// must be an integer vector.
    pub fn with_initial(network: ReactionNetwork, system_size: u64, x0: &[f64]) -> Result<Self, ModelError> {
        if system_size == 0 {
            return Err(ModelError::ZeroSystemSize);
        }
        assert_eq!(x0.len(), network.n_species(), "x0 length must match species count");
        let mut initial_state = Vec::with_capacity(x0.len());
        for (i, &c) in x0.iter().enumerate() {
            if c < 0.0 {
                return Err(ModelError::NegativeInitial { name: network.species[i].clone() });
            }
            let scaled = c * system_size as f64;
            let rounded = scaled.round();
            if (scaled - rounded).abs() > 1e-9 * scaled.abs().max(1.0) {
                return Err(ModelError::NonIntegralInitial {
                    name: network.species[i].clone(),
                    value: scaled,
                    n: system_size,
                });
            }
            initial_state.push(rounded as i64);
        }
        Ok(SystemInstance { network, system_size, initial_state, event_cap: DEFAULT_EVENT_CAP })
    }

    /// Replace the per-path event cap (default 10^8).
    pub fn with_event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }

    pub fn network(&self) -> &ReactionNetwork {
        &self.network
    }

    pub fn system_size(&self) -> u64 {
        self.system_size
    }

    /// Copy-number initial state `X(0) = N * x0`.
    pub fn initial_state(&self) -> &[i64] {
        &self.initial_state
    }

    pub fn event_cap(&self) -> u64 {
        self.event_cap
    }

    /// Stochastic mass action propensity of channel `j` at `state`.
    pub fn propensity(&self, state: &[i64], j: usize) -> f64 {
        self.propensity_with(state, j, self.network.reactions[j].rate_const)
    }

    /// [`SystemInstance::propensity`] with an overridden rate constant
    /// (perturbed legs of coupled pairs).
    pub fn propensity_with(&self, state: &[i64], j: usize, rate: f64) -> f64 {
        let r = &self.network.reactions[j];
        let mut combos: u128 = 1;
        for (i, &w) in r.reactant_counts.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let b = binomial(state[i], w);
            if b == 0 {
                return 0.0;
            }
            combos *= b;
        }
        to_stochastic_param(rate, self.system_size, r.order()) * combos as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ISO: &str = "S1 -> S2 @ 0.3 \n S2 -> S1 @ 0.2";

    #[test]
    fn parses_reversible_isomerization() {
        let net = parse_network(ISO).unwrap();
        assert_eq!(net.species, vec!["S1", "S2"]);
        assert_eq!(net.n_reactions(), 2);
        assert_eq!(net.reactions[0].net_change(), vec![-1, 1]);
        assert_eq!(net.reactions[1].net_change(), vec![1, -1]);
        assert_eq!(net.reactions[0].rate_const, 0.3);
    }

    #[test]
    fn parses_pure_production() {
        let net = parse_network("0 -> S @ 1.0").unwrap();
        assert_eq!(net.reactions[0].reactant_counts, vec![0]);
        assert_eq!(net.reactions[0].product_counts, vec![1]);
        assert_eq!(net.reactions[0].order(), 0);
    }

    #[test]
    fn empty_model_is_an_error() {
        assert!(matches!(parse_network(""), Err(ModelError::EmptyModel)));
        assert!(matches!(parse_network("# only comments\n"), Err(ModelError::EmptyModel)));
    }

    #[test]
    fn rejects_nonpositive_rates_unless_allowed() {
        assert!(matches!(
            parse_network("S -> 0 @ 0"),
            Err(ModelError::NonpositiveRate { line: 1, .. })
        ));
        assert!(matches!(parse_network("S -> 0 @ -1"), Err(ModelError::NonpositiveRate { .. })));
        let net = parse_network_allowing_zero_rates("S -> 0 @ 0").unwrap();
        assert_eq!(net.reactions[0].rate_const, 0.0);
    }

    #[test]
    fn species_declaration_fixes_order_and_catches_unknowns() {
        let net = parse_network("species B A\nA -> B @ 1").unwrap();
        assert_eq!(net.species, vec!["B", "A"]);
        assert_eq!(net.reactions[0].net_change(), vec![1, -1]);
        let err = parse_network("species A\nA -> C @ 1").unwrap_err();
        assert!(matches!(err, ModelError::UnknownSpecies { line: 2, .. }));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_network("S1 -> S2 @ 0.3\nS2 S1 @ 0.2").unwrap_err();
        match err {
            ModelError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn init_lines_accept_decimals_and_rationals() {
        let net = parse_network("init S1 = 1/2\ninit S2 = 0.25\nS1 -> S2 @ 1").unwrap();
        assert_eq!(net.initial_concentration, vec![0.5, 0.25]);
    }

    fn dimerizing() -> ReactionNetwork {
        parse_network("species S1 S2 S3\n2*S1 -> S2 @ 0.002\nS2 -> 2*S1 @ 0.5").unwrap()
    }

    #[test]
    fn dimerizing_propensity_matches_hand_value() {
        let inst = SystemInstance::with_initial(dimerizing(), 10, &[2.0, 0.0, 0.0]).unwrap();
        // c2/(2*10) * 20 * 19 = 0.038
        let a = inst.propensity(&[20, 0, 0], 0);
        assert!((a - 0.038).abs() < 1e-15, "a = {a}");
    }

    #[test]
    fn pure_production_propensity_is_n_times_rate() {
        let net = parse_network("0 -> S @ 1.5").unwrap();
        let inst = SystemInstance::with_initial(net, 10, &[0.0]).unwrap();
        assert_eq!(inst.propensity(&[1234], 0), 15.0);
    }

    #[test]
    fn unimolecular_propensity_vanishes_on_empty_pool() {
        let net = parse_network(ISO).unwrap();
        let inst = SystemInstance::with_initial(net, 1, &[0.0, 0.0]).unwrap();
        assert_eq!(inst.propensity(&[0, 5], 0), 0.0);
        assert!(inst.propensity(&[1, 5], 0) > 0.0);
    }

    #[test]
    fn fluid_rate_examples() {
        let net = dimerizing();
        // c * x^2 / 2
        assert!((net.fluid_rate(&[2.0, 0.0, 0.0], 0) - 0.004).abs() < 1e-18);
        let iso = parse_network("S1 -> S2 @ 0.5\nS2 -> S1 @ 1.0").unwrap();
        assert!((iso.fluid_rate(&[3.0, 0.0], 0) - 1.5).abs() < 1e-15);
        assert_eq!(net.fluid_rate(&[0.0, 0.0, 0.0], 0), 0.0);
    }

    #[test]
    fn parameter_conversions() {
        assert!((to_stochastic_param(0.002, 10, 2) - 0.0002).abs() < 1e-18);
        assert_eq!(to_stochastic_param(0.7, 99, 1), 0.7);
        assert_eq!(to_stochastic_param(1.0, 10, 0), 10.0);
        assert_eq!(convert_sensitivity(5.0, 10, 2), 50.0);
        assert_eq!(convert_sensitivity(5.0, 10, 1), 5.0);
        assert_eq!(convert_sensitivity(0.0, 10, 3), 0.0);
    }

    #[test]
    fn instance_requires_integral_initial_counts() {
        let net = parse_network("init S1 = 1/2\nS1 -> 0 @ 1").unwrap();
        assert!(SystemInstance::new(net.clone(), 2).is_ok());
        assert!(matches!(
            SystemInstance::new(net, 3),
            Err(ModelError::NonIntegralInitial { .. })
        ));
    }

    #[test]
    fn scaling_consistency_with_fluid_rate() {
        // |a_j(N x)/N - fluid(x)| <= B/N on a compact set, so the error
        // times N stays bounded while the error itself shrinks.
        let net = dimerizing();
        let x = [2.0, 1.0, 0.0];
        let mut last_scaled_err = f64::INFINITY;
        for &n in &[10u64, 100, 1000, 10_000] {
            let inst = SystemInstance::with_initial(net.clone(), n, &x).unwrap();
            let state: Vec<i64> = x.iter().map(|&c| (c * n as f64) as i64).collect();
            for j in 0..net.n_reactions() {
                let err = (inst.propensity(&state, j) / n as f64 - net.fluid_rate(&x, j)).abs();
                let scaled = err * n as f64;
                assert!(scaled < 10.0, "N = {n}, j = {j}: N*err = {scaled}");
            }
            let err0 = (inst.propensity(&state, 0) / n as f64 - net.fluid_rate(&x, 0)).abs();
            assert!(err0 <= last_scaled_err);
            last_scaled_err = err0;
        }
    }

    proptest! {
        #[test]
        fn stochastic_param_round_trip(c in 1e-6f64..1e6, n in 1u64..1_000_000, order in 0u32..4) {
            let back = from_stochastic_param(to_stochastic_param(c, n, order), n, order);
            prop_assert!((back - c).abs() <= c * f64::EPSILON * 4.0);
        }

        #[test]
        fn propensity_nonnegative_and_zero_iff_short(x in proptest::collection::vec(0i64..50, 2), w1 in 0u32..3, w2 in 0u32..3) {
            prop_assume!(w1 + w2 > 0);
            let mut lhs = Vec::new();
            if w1 > 0 { lhs.push(format!("{w1}*A")); }
            if w2 > 0 { lhs.push(format!("{w2}*B")); }
            let text = format!("species A B\n{} -> 0 @ 1.0", lhs.join(" + "));
            let net = parse_network(&text).unwrap();
            let inst = SystemInstance::with_initial(net, 7, &[0.0, 0.0]).unwrap();
            let a = inst.propensity(&x, 0);
            prop_assert!(a >= 0.0);
            let short = x[0] < i64::from(w1) || x[1] < i64::from(w2);
            prop_assert_eq!(a == 0.0, short);
        }
    }
}
