//! Simulate the birth-death network exactly and check the sample mean and
//! variance at the final time against the closed forms.
//!
//! ```text
//! cargo run --release --example simulate_birth_death
//! ```

use stochsens::model::{parse_network, SystemInstance};
use stochsens::oracles::{bd_mean, bd_var_x, BirthDeathParams};
use stochsens::paths::simulate_direct;
use stochsens::streams::{open_stream, StreamKey};

fn main() {
    let net = parse_network("init S = 1\n0 -> S @ 1.0\nS -> 0 @ 1.0").unwrap();
    let inst = SystemInstance::new(net, 10).unwrap();
    let (t_final, n_paths, seed) = (2.0, 50_000u64, 7u64);

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut events = 0usize;
    for i in 0..n_paths {
        let mut stream = open_stream(StreamKey::direct(seed, i));
        let traj = simulate_direct(&inst, None, t_final, &mut stream).unwrap();
        let x = traj.final_state()[0] as f64;
        sum += x;
        sumsq += x * x;
        events += traj.n_events();
    }
    let n = n_paths as f64;
    let mean = sum / n;
    let var = (sumsq - sum * sum / n) / (n - 1.0);

    let p = BirthDeathParams { c1: 1.0, c2: 1.0, x0: 1.0, n: 10, t: t_final };
    println!("paths               : {n_paths} (avg {:.1} events each)", events as f64 / n);
    println!("sample mean  X(T)   : {mean:.4}");
    println!("exact mean   E X(T) : {:.4}", bd_mean(&p));
    println!("sample var   X(T)   : {var:.4}");
    println!("exact var  Var X(T) : {:.4}", bd_var_x(&p));
    let se = (var / n).sqrt();
    println!("|mean error| / SE   : {:.2}", (mean - bd_mean(&p)).abs() / se);
}
