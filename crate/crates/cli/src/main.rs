//! `vfnet`: train, evaluate and use variational folding networks on
//! point-cloud directories.

mod artifacts;
mod commands;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "vfnet", version, about = "Variational folding network for disk-topology point clouds")]
struct Cli {
    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model from a config file.
    Train(TrainArgs),
    /// MMD / COV / 1-NNA between generated and reference clouds.
    Evaluate(EvaluateArgs),
    /// Autoencode every cloud in a directory and report CD / EMD.
    Reconstruct(ReconstructArgs),
    /// Draw new clouds from the prior.
    Sample(SampleArgs),
    /// Decode a lattice into a triangle mesh.
    Mesh(MeshArgs),
    /// Fill a hole in a partial cloud.
    Complete(CompleteArgs),
    /// Meshes along the latent line between two clouds.
    Interpolate(InterpolateArgs),
    /// Linear classifier on latent codes of a labelled directory.
    Probe(ProbeArgs),
    /// Write a synthetic dataset of bump patches.
    Synth(SynthArgs),
    /// Gradient and invariant self-tests.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Directory for the checkpoint, training log and resolved config.
    #[arg(long)]
    pub out: PathBuf,
    /// `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum MetricArg {
    Chamfer,
    Emd,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory of generated clouds.
    #[arg(long, conflicts_with = "sample")]
    pub gen_dir: Option<PathBuf>,
    /// Draw this many clouds from the checkpoint instead of reading a directory.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub ref_dir: PathBuf,
    #[arg(long, value_enum, default_value = "chamfer")]
    pub metric: MetricArg,
    /// Subsample every cloud to this many points.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Repeat with seeds `seed..seed+k` and report mean and standard deviation.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value = "uniform-grid")]
    pub source: SourceArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Largest cloud for which exact EMD is computed.
    #[arg(long, default_value_t = vfnet_core::metrics::DEFAULT_EMD_CAP)]
    pub emd_cap: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum SourceArg {
    UniformGrid,
    GridPredictor,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 2048)]
    pub points: usize,
    #[arg(long, value_enum, default_value = "uniform-grid")]
    pub source: SourceArg,
    /// Add Student-t noise scaled by the variance network.
    #[arg(long)]
    pub noise: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MeshArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    /// Encode this cloud (posterior mean) instead of sampling the prior.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompleteArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Remove this many nearest neighbours of a random seed point first and
    /// score the completion against them.
    #[arg(long)]
    pub hole_size: Option<usize>,
    #[arg(long, default_value_t = 3.0)]
    pub factor: f64,
    #[arg(long, default_value_t = 32)]
    pub occupancy: usize,
    /// Fail instead of using the least occupied cells when none is empty.
    #[arg(long)]
    pub no_fallback: bool,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub to: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory with clouds and a `labels.csv` (`file,label`).
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Lattice side; each patch has `resolution^2` points.
    #[arg(long, default_value_t = 48)]
    pub resolution: usize,
    /// Also write a flattened-top copy of every patch into `<out>/worn`.
    #[arg(long)]
    pub worn: bool,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn run(cli: Cli) -> Result<(), error::CliError> {
    if let Some(t) = cli.threads {
        commands::set_threads(t)?;
    }
    match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Sample(a) => commands::sample(a),
        Command::Mesh(a) => commands::mesh(a),
        Command::Complete(a) => commands::complete(a),
        Command::Interpolate(a) => commands::interpolate(a),
        Command::Probe(a) => commands::probe(a),
        Command::Synth(a) => commands::synth(a),
        Command::Check(a) => commands::check(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
