//! `ofbmlab`: experiment driver for OFBM simulation, partial-sum
//! approximations and their convergence diagnostics.
//!
//! Exit status: 0 when every requested check passes, 1 when a check fails
//! (a JSON report is printed), 2 on configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::{ConfigError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "ofbmlab", version, about = "Operator fractional Brownian motion experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment configuration; fields not given take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "OFBMLAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample OFBM paths by spectral synthesis.
    SimulateOfbm,
    /// Sample normalized partial-sum paths of `G(X_i)`.
    SimulateApprox {
        /// `full`, `head_m` or `tail_m`.
        #[arg(long, default_value = "full")]
        band: String,
    },
    /// Print the Hermite rank of `g`, then its coefficient table.
    HermiteRank,
    /// Condition H diagnostics of the correlation model.
    CheckCondition,
    /// Fit the increment-moment exponent.
    Tightness,
    /// Sweep over `n_list`: covariance error, tail ratio and energy test.
    Converge {
        /// Fill the wall_seconds column; otherwise it is left empty.
        #[arg(long)]
        timing: bool,
    },
    /// Run the acceptance suite.
    Verify {
        /// Use small sample sizes.
        #[arg(long)]
        quick: bool,
    },
}

fn resolve(common: &Common) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(r) = common.replicates {
        cfg.replicates = r;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.common.threads {
        if t == 0 {
            eprintln!("config error: --threads must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .expect("global pool is configured once");
    }
    let cfg = match resolve(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::SimulateOfbm => commands::simulate_ofbm(&cfg),
        Command::SimulateApprox { band } => commands::simulate_approx(&cfg, band),
        Command::HermiteRank => commands::hermite_rank(&cfg),
        Command::CheckCondition => commands::check_condition(&cfg),
        Command::Tightness => commands::tightness(&cfg),
        Command::Converge { timing } => commands::converge(&cfg, *timing),
        Command::Verify { quick } => commands::verify(&cfg, *quick),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(commands::Failure::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(e)) => {
            println!("{}", serde_json::json!({ "status": "error", "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
