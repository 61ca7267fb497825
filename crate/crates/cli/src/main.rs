use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qfc_link_cli::commands::{self, Outcome};
use qfc_link_cli::{CliError, CliResult, Scenario};

#[derive(Parser)]
#[command(name = "qfc-link", version, about = "Trapped-ion photon link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Efficiency budget and per-stage conversion table.
    Budget(Common),
    /// Simulate the configured experiment and write timestamp records.
    Simulate(Common),
    /// Analyze records written by `simulate`.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Directory holding the records (defaults to the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit the pump-power conversion curve.
    FitConversion {
        /// Scenario JSON with `conversion_points`.
        #[arg(long, required_unless_present = "data")]
        config: Option<PathBuf>,
        /// CSV of `pump_mw,conversion` rows (overrides the config points).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> CliResult<(Scenario, PathBuf)> {
    let mut scenario = Scenario::load(&common.config)?;
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    let out = commands::output_dir(common.out.clone(), Some(&scenario));
    Ok((scenario, out))
}

fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Budget(c) => {
            let (s, out) = load(&c)?;
            commands::budget(&s, &out)
        }
        Command::Simulate(c) => {
            let (s, out) = load(&c)?;
            commands::simulate(&s, &out)
        }
        Command::Analyze { common, input } => {
            let (s, out) = load(&common)?;
            let input = input.unwrap_or_else(|| out.clone());
            commands::analyze(&s, &input, &out)
        }
        Command::FitConversion { config, data, out } => {
            let scenario = config.as_deref().map(Scenario::load).transpose()?;
            let points = match &data {
                Some(path) => commands::read_conversion_csv(path)?,
                None => scenario.as_ref().map(Scenario::conversion_pairs).unwrap_or_default(),
            };
            let out = commands::output_dir(out, scenario.as_ref());
            commands::fit_conversion(scenario.as_ref(), &points, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
