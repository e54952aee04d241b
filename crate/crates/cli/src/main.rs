use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oed_cli::{bench, load_problem, run, CliError};

#[derive(Parser)]
#[command(name = "oed", version, about = "Locally optimal experimental designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the problem in a config file and write the report.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config file and print it with defaults filled.
    Check { config: PathBuf },
    /// Run a benchmark suite: quadratic, flash, yeast or all.
    Bench {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "oed-bench")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, seed, out } => {
            let mut cfg = load_problem(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let report = run(&cfg)?;
            println!(
                "{} on {}: objective {}, {} support points, {} iterations, {} Jacobians; report in {}",
                report.algorithm,
                cfg.model.id(),
                report.reported_objective()?,
                report.design.len(),
                report.iterations,
                report.jacobian_evaluations,
                cfg.output_dir.display()
            );
        }
        Command::Check { config } => println!("{}", load_problem(&config)?.to_json()),
        Command::Bench { suite, seed, out } => {
            let results = bench::run_suite(&suite, seed, &out)?;
            print!("{}", bench::results_csv(&results)?);
        }
    }
    Ok(())
}
