//! Command line driver for the cone-flow solver.

mod config;
mod run;
mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{default_snapshots, ExperimentConfig};

#[derive(Parser)]
#[command(name = "coneflow", version, about = "Entropic generalized flows on the cone")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an experiment config and write plans, marginals, pressure and
    /// a run manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Message representation: auto | on | off.
        #[arg(long)]
        log_domain: Option<String>,
        /// Seed recorded in the manifest and used by any randomized
        /// post-processing.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a verification suite: geometry | sandbox | oracle | smooth.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print version, presets and defaults.
    Info,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run { config, out, log_domain, seed } => {
            let config = ExperimentConfig::from_path(&config)?;
            let mode = log_domain.as_deref().map(config::parse_log_domain).transpose()?;
            let out_dir = run::resolve_out_dir(&config, out);
            run::run_experiment(&config, &out_dir, mode, seed)
        }
        Command::Verify { suite, seed } => verify::run_suite(&suite, seed),
        Command::Info => {
            print_info();
            Ok(0)
        }
    }
}

fn print_info() {
    println!("coneflow {}", env!("CARGO_PKG_VERSION"));
    println!();
    println!("Boundary map presets:");
    println!("  peakon      h(x) = 1.4x for x <= 0.5, 0.6x + 0.4 above (Jacobian jump at 0.5)");
    println!("  reflection  h(x) = 1 - x (measure preserving, non-deterministic plan)");
    println!("  identity    h(x) = x");
    println!();
    println!("Reference experiment parameters (full scale):");
    println!("  peakon:     n_x=40 n_r=41 r=[0.55,1.45] k_levels=35 alpha=40 epsilon=5e-4");
    println!("  reflection: n_x=40 n_r=41 r=[0.60,1.40] k_levels=35 alpha=40 epsilon=5e-4");
    println!("  default snapshots at k_levels=35: {:?}", default_snapshots(35));
    println!();
    println!("Exit codes: 0 ok, 1 error, {} non-convergence, {} starved nodes",
        run::EXIT_NON_CONVERGENCE, run::EXIT_STARVED);
}
