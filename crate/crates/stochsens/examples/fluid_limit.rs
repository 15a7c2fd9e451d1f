//! Classical scaling in action: concentrations X(t)/N of exact stochastic
//! paths collapse onto the deterministic fluid limit as N grows, at the
//! usual N^(-1/2) rate, and the ODE's forward sensitivity matches the
//! differentiated closed-form mean.
//!
//! ```text
//! cargo run --release --example fluid_limit
//! ```

use stochsens::model::{parse_network, SystemInstance};
use stochsens::oracles::{fluid_solve, iso_mean, iso_sens_c1};
use stochsens::paths::simulate_direct;
use stochsens::streams::{open_stream, StreamKey};

fn main() {
    let net = parse_network("init S1 = 1\ninit S2 = 1\nS1 -> S2 @ 0.3\nS2 -> S1 @ 0.2").unwrap();
    let t_final = 10.0;

    let inst = SystemInstance::new(net.clone(), 100).unwrap();
    let sol = fluid_solve(&inst, None, t_final, 0.01).unwrap();
    let (m1, _) = iso_mean(1.0, 1.0, 0.3, 0.2, t_final);
    println!("fluid X1(T)           : {:.6} (closed form {:.6})", sol.final_state()[0], m1);
    println!(
        "fluid dX1/dc1(T)      : {:.6} (closed form {:.6})",
        sol.final_sensitivity(0)[0],
        iso_sens_c1(1.0, 1.0, 0.3, 0.2, t_final)
    );

    println!("\nmedian sup_t |X_N(t)/N - X(t)| over 30 paths:");
    for &n in &[100u64, 1_000, 10_000] {
        let inst = SystemInstance::new(net.clone(), n).unwrap();
        let mut sups: Vec<f64> = (0..30)
            .map(|i| {
                let mut stream = open_stream(StreamKey::direct(77, i));
                let traj = simulate_direct(&inst, None, t_final, &mut stream).unwrap();
                // The fluid path is monotone here, so the sup over each
                // constant piece is attained at its endpoints.
                let mut sup: f64 = 0.0;
                let mut state = traj.initial_state().to_vec();
                let mut check = |t: f64, x1: f64| {
                    let fluid = iso_mean(1.0, 1.0, 0.3, 0.2, t).0;
                    sup = sup.max((x1 / n as f64 - fluid).abs());
                };
                check(0.0, state[0] as f64);
                for e in traj.events() {
                    check(e.time, state[0] as f64); // pre-jump
                    let nu = inst.network().reactions[e.channel as usize].net_change();
                    for (s, d) in state.iter_mut().zip(nu) {
                        *s += d;
                    }
                    check(e.time, state[0] as f64); // post-jump
                }
                check(t_final, state[0] as f64);
                sup
            })
            .collect();
        sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("  N = {n:>6}: {:.5}  (sqrt(N) * err = {:.2})", sups[15], sups[15] * (n as f64).sqrt());
    }
}
