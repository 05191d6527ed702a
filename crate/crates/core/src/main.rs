use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use beancrit::config::ScenarioConfig;
use beancrit::scenario::{exit_code, output_dir, run_scenario, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subcommand {
    /// Distance fields d, d⁻ and the ray fan
    Distance,
    /// One quasistatic step: u, v, labels and residuals
    Step,
    /// Field, dissipation and E time series with penetration fronts
    Evolve,
    /// Loop CSV, snapshots and terminal field
    Hysteresis,
    /// Power-law convergence report
    Gamma,
}

impl From<Subcommand> for Command {
    fn from(s: Subcommand) -> Self {
        match s {
            Subcommand::Distance => Command::Distance,
            Subcommand::Step => Command::Step,
            Subcommand::Evolve => Command::Evolve,
            Subcommand::Hysteresis => Command::Hysteresis,
            Subcommand::Gamma => Command::Gamma,
        }
    }
}

/// Anisotropic Bean critical-state simulator.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// Scenario TOML file
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cfg = match ScenarioConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let base = cli.config.parent().unwrap_or(Path::new("."));
    let out = output_dir(cli.out.as_deref(), &cfg, base);
    let seed = cli.seed.unwrap_or(cfg.seed);
    match run_scenario(cli.command.into(), &cfg, base, &out, seed) {
        Ok(()) => {
            log::info!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {} failed: {e}", Command::from(cli.command).name());
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
