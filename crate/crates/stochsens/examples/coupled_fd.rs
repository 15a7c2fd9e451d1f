//! Compare the three finite-difference couplings at the same perturbation:
//! independent streams (IRN), a common uniform stream (CRN), and common
//! per-channel Poisson clocks (CRP). The coupled variants cut the estimator
//! variance by orders of magnitude.
//!
//! ```text
//! cargo run --release --example coupled_fd
//! ```

use stochsens::estimators::fd_summary_from_quotients;
use stochsens::model::{parse_network, SystemInstance};
use stochsens::oracles::iso_sens_c1;
use stochsens::paths::{simulate_coupled, Coupling, FdOrder};

fn main() {
    let n: u64 = 100;
    let (t_final, h, n_pairs, seed) = (10.0, 0.01, 5_000u64, 3u64);
    let net = parse_network("init S1 = 1\ninit S2 = 1\nS1 -> S2 @ 0.3\nS2 -> S1 @ 0.2").unwrap();
    let inst = SystemInstance::new(net, n).unwrap();

    println!("exact sensitivity : {:.4}", iso_sens_c1(n as f64, n as f64, 0.3, 0.2, t_final));
    println!("one-sided FD, h = {h}, {n_pairs} pairs per coupling\n");
    for coupling in [Coupling::Irn, Coupling::Crn, Coupling::Crp] {
        let quotients: Vec<f64> = (0..n_pairs)
            .map(|i| {
                simulate_coupled(&inst, 0, h, coupling, FdOrder::OneSided, t_final, seed, i)
                    .unwrap()
                    .quotient(|state| state[0] as f64)
            })
            .collect();
        let s = fd_summary_from_quotients(&quotients, coupling, FdOrder::OneSided, h).unwrap();
        println!(
            "{:<8} point {:>9.3}  std_error {:>8.3}  variance {:>14.1}",
            s.method.label(),
            s.point,
            s.std_error,
            s.sample_variance
        );
    }
}
