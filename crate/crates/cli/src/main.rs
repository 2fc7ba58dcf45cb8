use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dualtype::freqplan::SpeciesLabel;
use dualtype::protocol::Level;

mod commands;
mod config;
mod output;

use commands::{CliError, Run};
use config::ExperimentConfig;
use output::{write_outputs, RunManifest};

/// Frequency planning and gate simulation for dual-type trapped-ion qubits.
///
/// Every subcommand reads one experiment document (built-in defaults unless
/// --config is given), writes CSV curves and JSON reports into the output
/// directory, and records their checksums in `<command>.manifest.json`.
///
/// Exit codes: 0 success, 1 configuration error, 2 domain error, 3 convergence error.
#[derive(Parser)]
#[command(name = "dualtype", version, about, long_about)]
struct Cli {
    /// Experiment document (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed of the experiment document.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the output directory of the experiment document.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpeciesArg {
    #[value(name = "S", alias = "s")]
    S,
    #[value(name = "F", alias = "f")]
    F,
}

#[derive(Subcommand)]
enum Command {
    /// AWG and PLL tones for carrier and sideband selections of both qubit
    /// types, plus comb bandwidth coverage (plans.json).
    Plan {
        /// Plan only this qubit type.
        #[arg(long, value_enum)]
        species: Option<SpeciesArg>,
        /// Single requested detuning in Hz instead of the carrier/sideband set.
        #[arg(long, allow_hyphen_values = true)]
        detuning: Option<f64>,
        /// Repetition-rate drift in Hz; adds the PLL correction to each plan.
        #[arg(long, allow_hyphen_values = true)]
        rep_drift: Option<f64>,
    },
    /// Damped carrier Rabi oscillations of both qubit types (rabi_s.csv, rabi_f.csv, rabi.json).
    Rabi,
    /// Carrier and sideband spectrum with sideband thermometry (spectrum.csv, thermometry.json).
    Spectrum,
    /// Entangling gate design and simulation.
    Gate {
        #[command(subcommand)]
        action: GateCommand,
    },
    /// Readout error correction and Bell-state fidelity.
    Readout {
        #[command(subcommand)]
        action: ReadoutCommand,
    },
    /// Preparation and detection pulse sequences.
    Protocol {
        #[command(subcommand)]
        action: ProtocolCommand,
    },
    /// Equilibrium positions of a two-ion chain with mixed charges (chain.json).
    Chain {
        /// Comma-separated ion charges, e.g. 1,2.
        #[arg(long, value_delimiter = ',')]
        charges: Option<Vec<u32>>,
    },
}

#[derive(Subcommand)]
enum GateCommand {
    /// Segment timing, calibrated amplitudes, sequence and phase-space
    /// trajectories (gate_design.json, sequence.json, trajectory_*.csv).
    Design,
    /// Bell-state populations, parity scan and fidelity under dephasing
    /// (gate_outcome.json, gate_parity.csv).
    Simulate,
}

#[derive(Subcommand)]
enum ReadoutCommand {
    /// Maximum-likelihood correction of observed counts (correction.json).
    Correct {
        /// CSV with `state,count` rows.
        #[arg(long)]
        counts: PathBuf,
        /// Confusion matrix CSV; defaults to the bundled published matrix.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Bell fidelity from population and parity data (fidelity.json,
    /// readout_parity.csv); synthesizes data when --data is absent.
    Fidelity {
        /// Bell dataset JSON.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Confusion matrix CSV; defaults to the bundled published matrix.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ProtocolCommand {
    /// Preparation success, detection infidelities and the synthesized
    /// confusion matrix (protocol.json, confusion_*.csv).
    Detect {
        /// Refit the pulse errors to the published observables first (calibration.json).
        #[arg(long)]
        calibrate: bool,
        /// Additional sequence file to run (sequence_run.json).
        #[arg(long)]
        sequence: Option<PathBuf>,
        /// Initial levels for --sequence, comma-separated (e.g. S0,S0).
        #[arg(long, value_delimiter = ',', default_value = "S0,S0")]
        initial: Vec<String>,
    },
}

fn parse_level(s: &str) -> Result<Level, CliError> {
    serde_json::from_value(serde_json::Value::String(s.trim().into()))
        .map_err(|_| CliError::Config(format!("unknown level {s:?}")))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Plan { .. } => "plan",
        Command::Rabi => "rabi",
        Command::Spectrum => "spectrum",
        Command::Gate { action: GateCommand::Design } => "gate design",
        Command::Gate { action: GateCommand::Simulate } => "gate simulate",
        Command::Readout { action: ReadoutCommand::Correct { .. } } => "readout correct",
        Command::Readout { action: ReadoutCommand::Fidelity { .. } } => "readout fidelity",
        Command::Protocol { .. } => "protocol detect",
        Command::Chain { .. } => "chain",
    }
}

fn dispatch(cli: &Cli, cfg: &ExperimentConfig, seed: u64) -> Result<Run, CliError> {
    match &cli.command {
        Command::Plan {
            species,
            detuning,
            rep_drift,
        } => {
            let only = species.map(|s| match s {
                SpeciesArg::S => SpeciesLabel::S,
                SpeciesArg::F => SpeciesLabel::F,
            });
            commands::plan(cfg, only, *detuning, *rep_drift)
        }
        Command::Rabi => commands::rabi(cfg),
        Command::Spectrum => commands::spectrum(cfg),
        Command::Gate { action } => match action {
            GateCommand::Design => commands::gate_design(cfg),
            GateCommand::Simulate => commands::gate_simulate(cfg, seed),
        },
        Command::Readout { action } => match action {
            ReadoutCommand::Correct { counts, matrix } => commands::readout_correct(cfg, counts, matrix.as_deref(), seed),
            ReadoutCommand::Fidelity { data, matrix } => {
                commands::readout_fidelity(cfg, data.as_deref(), matrix.as_deref(), seed)
            }
        },
        Command::Protocol {
            action: ProtocolCommand::Detect {
                calibrate,
                sequence,
                initial,
            },
        } => {
            let levels = initial.iter().map(|s| parse_level(s)).collect::<Result<Vec<_>, _>>()?;
            let seq = sequence.as_deref().map(|p| (p, levels.as_slice()));
            commands::protocol_detect(cfg, seed, *calibrate, seq)
        }
        Command::Chain { charges } => commands::chain(cfg, charges.clone()),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::published(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let name = command_name(&cli.command);
    let result = dispatch(cli, &cfg, seed)?;
    let manifest = RunManifest::new(name, cfg.hash(), seed, &result.artifacts);
    write_outputs(Path::new(&out_dir), &result.artifacts, &manifest)
        .map_err(|e| CliError::Config(format!("writing to {}: {e}", out_dir.display())))?;
    // a closed stdout must not turn a successful run into a failure
    let mut stdout = std::io::stdout().lock();
    let _ = write!(stdout, "{}", result.summary);
    let _ = writeln!(
        stdout,
        "wrote {} file(s) and {} to {}",
        result.artifacts.len(),
        RunManifest::file_name(name),
        out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
