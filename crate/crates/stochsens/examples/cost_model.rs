//! Asymptotic cost calculators: how many trajectories each method needs for
//! a target relative error, and the variance-bias optimal FD perturbation.
//! All values are proportionalities (unit constants), meant for comparing
//! methods, not for absolute budgeting.
//!
//! ```text
//! cargo run --release --example cost_model
//! ```

use stochsens::estimators::Method;
use stochsens::study::{ns_required, optimal_h};

fn main() {
    let delta = 0.01;
    println!("relative trajectory counts for RE = {delta} (unit constants):");
    println!("{:>8} {:>12} {:>12} {:>14} {:>14}", "N", "GT", "CGT", "FD2_CRN", "FD1_CRN");
    for &n in &[10u64, 50, 100, 1_000, 10_000] {
        let gt = ns_required(Method::Gt, delta, n, 1.0, 1.0).unwrap();
        let cgt = ns_required(Method::Cgt, delta, n, 1.0, 1.0).unwrap();
        // two-sided CRN: gamma1 = 2, gamma2 = 1; one-sided CRN: gamma1 = gamma2 = 1
        let fd2 = ns_required(Method::Fd2Crn, delta, n, 2.0, 1.0).unwrap();
        let fd1 = ns_required(Method::Fd1Crn, delta, n, 1.0, 1.0).unwrap();
        println!("{n:>8} {gt:>12.2e} {cgt:>12.2e} {fd2:>14.2e} {fd1:>14.2e}");
    }

    println!("\noptimal FD perturbation h ~ (N Ns)^(-1/(2 g1 + g2)):");
    for &(g1, g2, label) in &[(2.0, 1.0, "two-sided CRN"), (1.0, 1.0, "one-sided CRN"), (1.0, 2.0, "one-sided IRN")] {
        let h = optimal_h(100, 100_000, g1, g2).unwrap();
        println!("  {label:<14} exponent -1/{:.0}, h(N=100, Ns=1e5) = {h:.4}", 2.0 * g1 + g2);
    }
}
