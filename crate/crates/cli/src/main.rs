use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod fock_verify;
mod output;

use config::{CommonArgs, FileConfig};

/// Measurement-device-independent entanglement detection for CV states.
#[derive(Debug, Parser)]
#[command(name = "cvmdi", version, about)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic Duan and MDI scores of a lossy squeezed source or a state file
    WitnessEval(WitnessEvalArgs),
    /// Monte Carlo rounds of the MDI protocol
    MdiSimulate(SimulateArgs),
    /// Expected MDI score over (r, η) and certification boundaries
    Contour(ContourArgs),
    /// Fock-space verification suite for the POVM construction
    FockVerify(FockVerifyArgs),
    /// Prior Fisher information and the separable bound
    PriorFim(PriorArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct WitnessEvalArgs {
    /// Gaussian state JSON (`{mean, cov}`) instead of a lossy squeezed source
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PriorArgs {
    /// Smooth-box prior half-width `l` (replaces the Gaussian prior)
    #[arg(long = "box-l")]
    pub box_l: Option<f64>,
    /// Smooth-box edge width `δ`
    #[arg(long = "box-delta")]
    pub box_delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Play the optimal separable heterodyne strategy instead
    #[arg(long)]
    pub adversary: bool,
    /// Sample CSV path; defaults to `<out stem>.samples.csv` next to `--out`
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[command(flatten)]
    pub prior: PriorArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ContourArgs {
    #[arg(long = "r-max")]
    pub r_max: Option<f64>,
    #[arg(long = "r-points")]
    pub r_points: Option<usize>,
    #[arg(long = "eta-points")]
    pub eta_points: Option<usize>,
    /// Prior widths for the boundary curves, comma separated; empty for none
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub sigmas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FockVerifyArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub instances: Option<usize>,
    /// Energy scale `N` of a damped witness; λ must lie in (e^{-1/N}, 1)
    #[arg(long = "energy-scale")]
    pub energy_scale: Option<f64>,
    /// Also run the detector tomography round trip
    #[arg(long)]
    pub tomography: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Compute(String),
    Io(String),
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Compute(_) | Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Verification(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "invalid configuration: {m}"),
            Self::Compute(m) => write!(f, "computation failed: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<cvmdi_core::Error> for CliError {
    fn from(e: cvmdi_core::Error) -> Self {
        Self::Compute(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.common.config.as_deref())?;
    let c = &cli.common;
    match cli.command {
        Command::WitnessEval(a) => commands::witness_eval(c, &file, &a),
        Command::MdiSimulate(a) => commands::mdi_simulate(c, &file, &a),
        Command::Contour(a) => commands::contour(c, &file, &a),
        Command::FockVerify(a) => fock_verify::run(c, &file, &a),
        Command::PriorFim(a) => commands::prior_fim(c, &file, &a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvmdi: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
