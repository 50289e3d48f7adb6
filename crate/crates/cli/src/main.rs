//! `purcellkit` command-line front end.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use purcellkit::units::FrequencyUnit;
use purcellkit::DrivePort;

use commands::{CliError, Context, Unfiltered};

#[derive(Parser, Debug)]
#[command(
    name = "purcellkit",
    version,
    about = "Qubit readout through a Purcell filter"
)]
struct Cli {
    /// Configuration document (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in parameter set, used when no --config is given.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Override a configuration key, e.g. `--set omega_q_ghz=5.5` or
    /// `--set driven.trunc_margin=6`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Frequency unit of the parameter echo and of frequency columns.
    #[arg(long, global = true, default_value = "ghz", value_parser = parse_units)]
    units: FrequencyUnit,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, env = "PURCELLKIT_JOBS", default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Purcell rates and effective resonator parameters.
    Rates,
    /// Field transients for both qubit states after a step drive.
    Transient {
        #[arg(long, value_enum, default_value = "readout")]
        port: Port,
    },
    /// Filter transmission for both qubit states.
    Spectrum,
    /// Purcell rate against readout photon number from Lindblad runs.
    DrivenSweep {
        /// Remove the filter; the readout decays directly with this lifetime.
        #[arg(long, value_name = "NS")]
        unfiltered_kappa_inv_ns: Option<f64>,
        /// Qubit coupling for the unfiltered setup.
        #[arg(long, value_name = "MHZ", requires = "unfiltered_kappa_inv_ns")]
        unfiltered_g_mhz: Option<f64>,
    },
    /// Photon-number dependent shifts and rates against exact diagonalization.
    Dispersive,
    /// Measurement error budget of the unfiltered setup.
    ErrorBudget,
    /// Rate report over the values of one configuration key.
    Sweep {
        /// Key to vary; defaults to `sweep.key`.
        #[arg(long)]
        key: Option<String>,
        /// Comma-separated values; defaults to `sweep.values`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Option<Vec<f64>>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Port {
    Readout,
    Filter,
}

fn parse_units(s: &str) -> Result<FrequencyUnit, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let resolved = config::resolve(cli.config.as_deref(), cli.preset.as_deref(), &cli.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Core(purcellkit::Error::InvalidInput(e.to_string())))?;
    let ctx = Context {
        resolved,
        units: cli.units,
        out: cli.out,
        pool,
    };
    match cli.command {
        Command::Rates => commands::rates(&ctx),
        Command::Transient { port } => {
            let port = match port {
                Port::Readout => DrivePort::Readout,
                Port::Filter => DrivePort::Filter,
            };
            commands::transient(&ctx, port)
        }
        Command::Spectrum => commands::spectrum(&ctx),
        Command::DrivenSweep {
            unfiltered_kappa_inv_ns,
            unfiltered_g_mhz,
        } => {
            let unfiltered = unfiltered_kappa_inv_ns.map(|kappa_inv_ns| Unfiltered {
                kappa_inv_ns,
                g_mhz: unfiltered_g_mhz,
            });
            commands::driven_sweep(&ctx, unfiltered)
        }
        Command::Dispersive => commands::dispersive(&ctx),
        Command::ErrorBudget => commands::budget(&ctx),
        Command::Sweep { key, values } => commands::sweep(&ctx, key, values),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
