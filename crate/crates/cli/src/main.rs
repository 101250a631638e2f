use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delaycomp_cli::commands::{self, CliResult};
use delaycomp_cli::config::{self, parse_config_with, ScenarioConfig};

/// Delay-compensated simulations and verification checks.
#[derive(Parser)]
#[command(name = "delaycomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed loop with the predictor feedback; writes trajectory.csv.
    SimulateInputDelay(RunArgs),
    /// Plant with a delayed sensor and the delay-compensating observer; writes errors.csv.
    SimulateOutputDelay(RunArgs),
    /// Sylvester residuals at three grid levels with observed orders; writes residuals.csv.
    VerifySylvester(RunArgs),
    /// Wave benchmark with series predictor and observer; writes wave.csv.
    WaveDemo(RunArgs),
    /// Acceptance criteria in parallel (capped by DELAYCOMP_THREADS); writes acceptance.csv.
    VerifyAll(VerifyAllArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct VerifyAllArgs {
    /// also check the Sylvester residuals of this scenario
    #[arg(long)]
    config: Option<PathBuf>,
    /// comma-separated criterion ids, e.g. P1,P3
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// replaces `grid_steps` from the config
    #[arg(long)]
    grid_steps: Option<usize>,
    /// replaces `horizon` from the config
    #[arg(long)]
    horizon: Option<f64>,
}

impl Overrides {
    fn load(&self, path: &PathBuf) -> CliResult<ScenarioConfig> {
        let o = config::Overrides {
            grid_steps: self.grid_steps,
            horizon: self.horizon,
        };
        Ok(parse_config_with(path, o)?)
    }
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::SimulateInputDelay(a) => commands::simulate_input_delay(&a.overrides.load(&a.config)?, &a.overrides.out_dir),
        Command::SimulateOutputDelay(a) => commands::simulate_output_delay(&a.overrides.load(&a.config)?, &a.overrides.out_dir),
        Command::VerifySylvester(a) => commands::verify_sylvester(&a.overrides.load(&a.config)?, &a.overrides.out_dir),
        Command::WaveDemo(a) => commands::wave_demo(&a.overrides.load(&a.config)?, &a.overrides.out_dir),
        Command::VerifyAll(a) => {
            let threads = commands::thread_cap(std::env::var("DELAYCOMP_THREADS").ok())?;
            let cfg = a.config.as_ref().map(|p| a.overrides.load(p)).transpose()?;
            commands::verify_all(cfg.as_ref(), &a.only, threads, &a.overrides.out_dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

