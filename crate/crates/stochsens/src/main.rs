//! Thin command-line front end; all behavior lives in `stochsens::cli`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stochsens::cli::{self, CliError};
use stochsens::estimators::Method;
use stochsens::study::OutputFn;

#[derive(Parser)]
#[command(name = "stochsens", version, about = "Exact SSA simulation and sensitivity scaling studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master 64-bit seed.
    #[arg(long, default_value_t = 20240 )]
    seed: u64,
    /// Worker threads (0 = library default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate exact paths and print per-species summary statistics.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "system-size", short = 'N')]
        system_size: u64,
        #[arg(long = "t-final")]
        t_final: f64,
        #[arg(long = "paths")]
        n_paths: usize,
        /// Dump one CSV per trajectory into the output directory.
        #[arg(long = "dump-paths")]
        dump_paths: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate one parametric sensitivity at a single design point.
    Sensitivity {
        #[arg(long)]
        model: PathBuf,
        /// component:i | square:i | sin_scaled:i | indicator_leq:i:k (1-based)
        #[arg(long)]
        output: String,
        /// Reaction whose rate is perturbed (1-based).
        #[arg(long)]
        param: usize,
        /// GT | CGT | FD1_IRN | FD1_CRN | FD1_CRP | FD2_IRN | FD2_CRN | FD2_CRP
        #[arg(long)]
        method: String,
        #[arg(long = "system-size", short = 'N')]
        system_size: u64,
        #[arg(long = "t-final")]
        t_final: f64,
        #[arg(long = "samples")]
        n_samples: usize,
        /// FD perturbation (required for FD methods, forbidden otherwise).
        #[arg(long)]
        h: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a system-size scaling study from a config file.
    ScalingStudy {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed in the config file.
        #[arg(long)]
        seed_override: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a fixed-N time sweep from a config file.
    TimeStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

fn run() -> Result<(), CliError> {
    let cli = Cli::try_parse().map_err(|e| {
        // clap's rendered message includes usage; route through exit code 1
        CliError::Usage(e.render().to_string())
    })?;
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Simulate { model, system_size, t_final, n_paths, dump_paths, common } => {
            let out = cli::out_dir_or_default(common.out_dir);
            cli::with_worker_pool(common.workers, move || {
                cli::cmd_simulate(&model, system_size, t_final, n_paths, common.seed, dump_paths, &out, &mut stdout)
            })??
        }
        Command::Sensitivity {
            model,
            output,
            param,
            method,
            system_size,
            t_final,
            n_samples,
            h,
            common,
        } => {
            let output = OutputFn::parse(&output)
                .ok_or_else(|| CliError::Usage(format!("cannot parse output `{output}`")))?;
            let method = Method::parse(&method)
                .ok_or_else(|| CliError::Usage(format!("unknown method `{method}`")))?;
            let out = cli::out_dir_or_default(common.out_dir);
            cli::with_worker_pool(common.workers, move || {
                cli::cmd_sensitivity(
                    &model, output, param, method, system_size, t_final, n_samples, h, common.seed, &out,
                    &mut stdout,
                )
            })??
        }
        Command::ScalingStudy { config, seed_override, common } => {
            let out = cli::out_dir_or_default(common.out_dir);
            let seed = seed_override.or(if common.seed != 20240 { Some(common.seed) } else { None });
            cli::with_worker_pool(common.workers, move || {
                cli::cmd_scaling_study(&config, seed, &out, &mut stdout)
            })??
        }
        Command::TimeStudy { config, seed_override, common } => {
            let out = cli::out_dir_or_default(common.out_dir);
            let seed = seed_override.or(if common.seed != 20240 { Some(common.seed) } else { None });
            cli::with_worker_pool(common.workers, move || cli::cmd_time_study(&config, seed, &out, &mut stdout))??
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
