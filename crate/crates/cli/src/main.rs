use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smc2_cli::{run, simulate_data, CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "smc2", version, about = "Sequential Bayesian inference for state-space models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic series from the configured model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the configured algorithm.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, seed } => {
            let mut cfg = load(&config, seed)?;
            if cfg.t_len.is_none() {
                return Err(CliError::Config("simulate needs t_len".into()));
            }
            cfg.algorithm = smc2_cli::Algorithm::Simulate;
            cfg.validate()?;
            let path = simulate_data(&cfg)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Run { config, seed, threads } => {
            let cfg = load(&config, seed)?;
            if let Some(n) = threads {
                if n == 0 {
                    return Err(CliError::Config("--threads must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            }
            run(&cfg)?;
            println!("{}", cfg.output.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
