//! Desk-scale system-size sweep on reversible isomerization: the relative
//! standard deviations of GT, CGT, and CRN FD scale as N^(1/2), N^0, and
//! N^(-1/2), read off as log-log slopes.
//!
//! Runs a reduced sample budget so it finishes in seconds; the shipped
//! configs (`configs/table1.cfg`) use the full budget.
//!
//! ```text
//! cargo run --release --example scaling_slopes
//! ```

use stochsens::estimators::Method;
use stochsens::model::parse_network;
use stochsens::study::{run_scaling_study, OutputFn, ScalingConfig};

fn main() {
    let net = parse_network("init S1 = 1\ninit S2 = 1\nS1 -> S2 @ 0.3\nS2 -> S1 @ 0.2").unwrap();
    let config = ScalingConfig {
        output: OutputFn::Component(0),
        param_index: 0,
        t_final: 10.0,
        h: 0.01,
        seed: 42,
        n_grid: vec![10, 20, 50, 100, 200],
        n_samples: 4_000,
        methods: vec![Method::Gt, Method::Cgt, Method::Fd1Crn],
        slope_window: 0.6,
    };
    let report = run_scaling_study(&net, &config).unwrap();

    println!("      N   method      point       rsd");
    for r in &report.rows {
        println!("{:>7}   {:<8} {:>9.2} {:>9.4}", r.n, r.method.label(), r.point, r.rsd.unwrap());
    }
    println!("\nfitted log-log RSD slopes (expected ~ 0.5, 0.0, -0.5):");
    for s in &report.slopes {
        println!("{:<8} {:>7.3}  ({} points)", s.method.label(), s.slope, s.n_points);
    }
}
