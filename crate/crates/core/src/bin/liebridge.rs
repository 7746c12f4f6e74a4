use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use liebridge::config::ExperimentConfig;
use liebridge::runner::{run, EXIT_ERROR};
use liebridge::validation::invariant_suite;

#[derive(Parser)]
#[command(name = "liebridge", version, about = "Schrödinger bridges on SO(2) and SO(3)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, recover the bridge and write artifacts.
    Run {
        /// TOML experiment file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.directory`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Monte Carlo seed (overrides `simulate.seed`; ignored without a `[simulate]` table).
        #[arg(long)]
        seed: Option<u64>,
        /// Run the invariant suite only; no solve.
        #[arg(long)]
        validate_only: bool,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("LIEBRIDGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("LIEBRIDGE_THREADS must be a nonnegative integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR as u8);
    }
    let Command::Run {
        config,
        out,
        seed,
        validate_only,
    } = cli.command;

    let mut cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    if let Some(dir) = out {
        cfg.output.directory = dir.to_string_lossy().into_owned();
    }
    if let (Some(seed), Some(sim)) = (seed, cfg.simulate.as_mut()) {
        sim.seed = seed;
    }

    if validate_only {
        return match invariant_suite(&cfg, seed.unwrap_or(0)) {
            Ok(checks) => {
                for c in &checks {
                    println!("{c}");
                }
                if checks.iter().all(|c| c.passed) {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_ERROR as u8)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_ERROR as u8)
            }
        };
    }

    match run(&cfg) {
        Ok(outcome) => {
            let r = &outcome.report;
            println!(
                "{} after {} iterations (dH {:.3e}); marginal residuals {:.3e}, {:.3e}",
                if r.converged { "converged" } else { "NOT converged" },
                r.iterations,
                r.terminal_residual,
                r.marginal_residual_rho0,
                r.marginal_residual_rho1
            );
            if let Some(sim) = &r.simulation {
                for e in &sim.tv {
                    println!("TV(t = {:.3}) = {:.4}", e.t, e.tv);
                }
            }
            println!("artifacts in {}", outcome.out_dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
