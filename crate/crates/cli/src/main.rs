use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use helmholtz_minimax_cli::{exit_code, run::core_error, run_file, Overrides};

/// Guaranteed estimation of exterior Helmholtz functionals.
#[derive(Parser)]
#[command(name = "hmx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario as configured and write report.json (plus trials.csv
    /// for Monte Carlo scenarios).
    Run(Common),
    /// Monte Carlo validation of the worst-case error in the scenario's
    /// estimation regime.
    MonteCarlo(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Multiply every discretization size by this factor.
    #[arg(long)]
    grid: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, monte_carlo) = match cli.command {
        Command::Run(a) => (a, false),
        Command::MonteCarlo(a) => (a, true),
    };
    let ov = Overrides { seed: args.seed, trials: args.trials, grid: args.grid, monte_carlo };
    let result = run_file(&args.config, &ov).and_then(|report| {
        report.write(&args.out)?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            if let Some(s) = report.sigma {
                println!("sigma = {s:.12e}");
            }
            if let Some(mc) = &report.monte_carlo {
                println!("monte carlo: {} trials, mean ratio {:.4}", mc.trials, mc.mean_ratio);
            }
            println!("wrote {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let name = core_error(&e).map_or("ConfigError", |c| c.name());
            eprintln!("error [{name}]: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
