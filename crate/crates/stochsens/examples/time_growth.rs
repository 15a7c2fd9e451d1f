//! Estimator variance as a function of the horizon T at fixed system size:
//! GT and CGT variances grow linearly in T (the weight is a compensated
//! count whose second moment is the expected number of firings).
//!
//! ```text
//! cargo run --release --example time_growth
//! ```

use stochsens::estimators::Method;
use stochsens::model::parse_network;
use stochsens::study::{run_time_study, OutputFn, TimeStudyConfig};

fn main() {
    let net = parse_network("init S1 = 1\ninit S2 = 1\nS1 -> S2 @ 0.3\nS2 -> S1 @ 0.2").unwrap();
    let config = TimeStudyConfig {
        output: OutputFn::Component(0),
        param_index: 0,
        system_size: 10,
        t_grid: (1..=10).map(|t| t as f64).collect(),
        h: 0.01,
        seed: 5,
        n_samples: 20_000,
        methods: vec![Method::Gt, Method::Cgt],
    };
    let rows = run_time_study(&net, &config).unwrap();

    println!("   T    Var(GT)    Var(CGT)");
    for t in config.t_grid.iter() {
        let var = |m: Method| rows.iter().find(|r| r.t == *t && r.method == m).unwrap().variance;
        println!("{:>4} {:>10.2} {:>10.2}", t, var(Method::Gt), var(Method::Cgt));
    }
    let gt: Vec<(f64, f64)> = rows.iter().filter(|r| r.method == Method::Gt).map(|r| (r.t, r.variance)).collect();
    let (r2, slope) = linear_r2(&gt);
    println!("\nGT variance vs T: slope {slope:.2} per unit T, R^2 = {r2:.4}");
}

fn linear_r2(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    ((sxy * sxy) / (sxx * syy), sxy / sxx)
}
