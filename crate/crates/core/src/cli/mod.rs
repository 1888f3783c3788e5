//! Command-line interface: `gen`, `train`, `eval` and `export`.
//!
//! Exit codes: 0 on success, 2 for usage or input errors, 3 for numerical
//! failures during training.

mod commands;
mod config;

pub use config::{apply as config_from_entries, parse_config, CONFIG_KEYS};

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::data::SurfaceKind;
use crate::losses::PRESET_NAMES;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{message}")]
    Numerical {
        message: String,
        diagnostics: Option<PathBuf>,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

/// Generic conversion for errors on user-provided inputs.
pub(crate) fn usage<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Usage(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "diffatlas",
    version,
    about = "Fit, evaluate and export multi-patch surface decoders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic target cloud with normals, curvatures and area.
    Gen(GenArgs),
    /// Train patch decoders on one or more target clouds.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a target cloud.
    Eval(EvalArgs),
    /// Decode a checkpoint on a UV lattice and write a labelled PLY.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Surface type.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SurfaceKind::NAMES))]
    pub kind: String,
    /// Number of points.
    #[arg(long, default_value_t = 8000)]
    pub n: usize,
    /// Sampling and noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of isotropic Gaussian noise added to positions.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Wavy-cloth amplitude.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Wavy-cloth frequency.
    #[arg(long)]
    pub frequency: Option<f64>,
    /// Output directory; receives `cloud.ply` and `area.txt`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (with `cloud.ply`, optional `area.txt`) or a PLY/OBJ
    /// file. Repeat to train one codeword per shape.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named loss configuration.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    pub preset: Option<String>,
    /// Number of patches K.
    #[arg(long)]
    pub patches: Option<usize>,
    /// UV samples per patch and step.
    #[arg(long)]
    pub points: Option<usize>,
    /// Step budget.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seed for initialization and UV sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Codeword length.
    #[arg(long)]
    pub code_dim: Option<usize>,
    /// Number of hidden layers per decoder.
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    /// Hidden layer width.
    #[arg(long)]
    pub width: Option<usize>,
    /// Weight of the deformation (conformal) term.
    #[arg(long)]
    pub alpha_def: Option<f64>,
    /// Weight of the overlap term.
    #[arg(long)]
    pub alpha_ol: Option<f64>,
    /// Conformal sub-weight on E.
    #[arg(long)]
    pub alpha_e: Option<f64>,
    /// Conformal sub-weight on G.
    #[arg(long)]
    pub alpha_g: Option<f64>,
    /// Conformal sub-weight on the skew term.
    #[arg(long)]
    pub alpha_sk: Option<f64>,
    /// Conformal sub-weight on the stretch term.
    #[arg(long)]
    pub alpha_str: Option<f64>,
    /// Target surface area per `--data`, in order; overrides `area.txt`.
    #[arg(long)]
    pub area: Vec<f64>,
    /// Run the full step budget instead of stopping at convergence.
    #[arg(long)]
    pub no_convergence: bool,
    /// Print a progress line every this many steps (0 disables).
    #[arg(long, default_value_t = 100)]
    pub progress: usize,
    /// Continue from `<out>/model.ckpt` if it exists.
    #[arg(long)]
    pub resume: bool,
    /// Output directory for the checkpoint, log and metrics.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory or PLY/OBJ file.
    #[arg(long)]
    pub data: PathBuf,
    /// Codeword index to evaluate.
    #[arg(long, default_value_t = 0)]
    pub shape: usize,
    /// Comma-separated overlap radii.
    #[arg(long, value_delimiter = ',', default_values_t = crate::metrics::DEFAULT_OLAP_THRESHOLDS)]
    pub olap_t: Vec<f64>,
    /// Grid points per patch.
    #[arg(long, default_value_t = 2500)]
    pub points: usize,
    /// Write the metrics CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-patch distortion grids into this directory.
    #[arg(long)]
    pub distortion_maps: Option<PathBuf>,
    /// Cells per side of the distortion grids.
    #[arg(long, default_value_t = 32)]
    pub map_resolution: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Lattice intervals per side; each patch yields (r+1)² points.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Codeword index to decode.
    #[arg(long, default_value_t = 0)]
    pub shape: usize,
    /// Add mean and Gaussian curvature columns.
    #[arg(long)]
    pub curvature: bool,
    /// Output PLY file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Export(a) => commands::export(&a),
    }
}

/// Parses the process arguments, runs the command and maps errors to exit
/// codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Numerical {
                diagnostics: Some(p),
                ..
            } = &e
            {
                eprintln!("diagnostics written to {}", p.display());
            }
            ExitCode::from(e.exit_code())
        }
    }
}
