use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfg_cli::config::ExperimentConfig;
use mfg_cli::experiment::{compare_smfe, run_experiment, Experiment, RunError};

#[derive(Parser)]
#[command(
    name = "mfg",
    version,
    about = "Day-to-day mean field game experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the finite-horizon equilibrium and write traces and diagnostics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `outputs`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Days whose policy matrix is written, e.g. `0,15,29`.
        #[arg(long, value_delimiter = ',')]
        policy_days: Option<Vec<usize>>,
    },
    /// Solve for the stationary equilibrium and write `smfe.json`.
    Smfe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and its scenario file without solving.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run {
            config,
            out,
            policy_days,
        } => {
            let exp = Experiment::load(&config)?;
            let out = out.unwrap_or_else(|| exp.cfg.outputs.clone());
            let days = policy_days.unwrap_or_else(|| exp.cfg.policy_days());
            run_experiment(&exp, &out, &days)?;
            println!("wrote {}", out.display());
        }
        Command::Smfe { config, out } => {
            let exp = Experiment::load(&config)?;
            let out = out.unwrap_or_else(|| exp.cfg.outputs.clone());
            let result = compare_smfe(&exp, &out);
            println!("wrote {}", out.join("smfe.json").display());
            result?;
        }
        Command::Validate { config } => {
            let exp = Experiment::load(&config)?;
            let cfg: &ExperimentConfig = &exp.cfg;
            println!(
                "{}: {:?} scenario, {} states, horizon {}, theta {}, epsilon {}",
                config.display(),
                cfg.scenario,
                exp.mu0.len(),
                cfg.horizon,
                cfg.theta,
                cfg.epsilon
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MFG_LOG", "off")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
