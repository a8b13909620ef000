//! `mibmi`: estimate, train, select channels, quantize and run MI-BMInet
//! models from the command line.
//!
//! Exit codes: 0 success, 2 validation failure, 3 memory budget exceeded,
//! 4 I/O error. Every artifact is written atomically together with a
//! `<artifact>.manifest.json` run manifest.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "mibmi",
    version,
    about = "Compact EEG motor-imagery CNN toolkit",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for training and inference (default: all cores).
    /// Results do not depend on the thread count.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-layer parameters, feature sizes, MACCs and memory of a configuration.
    Estimate(EstimateArgs),
    /// Train a model on a trial file, optionally with quantization-aware training.
    Train(TrainArgs),
    /// Rank channels by spatial-filter norm and write a reduced trial file.
    SelectChannels(SelectArgs),
    /// Calibrate and export a checkpoint to an int8 network.
    Quantize(QuantizeArgs),
    /// Run the int8 engine on a trial file.
    Infer(InferArgs),
    /// Compare float and int8 logits trial by trial.
    Verify(VerifyArgs),
    /// Generate a synthetic motor-imagery trial file.
    SynthData(SynthArgs),
}

/// Model dimensions; with `--preset` any flag given overrides the preset.
#[derive(Args, Debug, Clone, Default)]
pub struct DimArgs {
    /// EEG channels N_ch.
    #[arg(long)]
    pub nch: Option<usize>,
    /// Samples per trial N_s.
    #[arg(long)]
    pub ns: Option<usize>,
    /// Spatial filters N_k.
    #[arg(long)]
    pub nk: Option<usize>,
    /// Temporal kernel length N_f.
    #[arg(long)]
    pub nf: Option<usize>,
    /// Classes N_cl.
    #[arg(long)]
    pub ncl: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub dims: DimArgs,
    /// Start from a built-in configuration: bci-iv2a or physionet-mmmi.
    #[arg(long)]
    pub preset: Option<String>,
    /// Bits per stored value: 8 or 32.
    #[arg(long, default_value_t = 8)]
    pub precision: u32,
    /// Memory budget in bytes; exit status 3 if the model does not fit.
    #[arg(long, value_name = "BYTES")]
    pub budget: Option<u64>,
    /// Print a JSON report instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training trial file (MIBT).
    #[arg(long)]
    pub data: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Architecture and hyperparameters of bci-iv2a or physionet-mmmi. N_ch,
    /// N_s and N_cl always come from the data.
    #[arg(long)]
    pub preset: Option<String>,
    /// Spatial filters N_k (required without --preset).
    #[arg(long)]
    pub nk: Option<usize>,
    /// Temporal kernel length N_f (required without --preset).
    #[arg(long)]
    pub nf: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Constant learning rate (replaces the preset schedule).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for shuffling and partition relaxation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed for weight initialization (default: --seed).
    #[arg(long)]
    pub init_seed: Option<u64>,
    /// Quantization-aware training schedule `t_a,t_w,t_end`; without a value,
    /// the preset's schedule. Training then runs for t_end epochs.
    #[arg(long, value_name = "TA,TW,TEND", num_args = 0..=1, default_missing_value = "preset")]
    pub qat: Option<String>,
    /// Grow the frozen weight set monotonically during relaxation.
    #[arg(long)]
    pub rpr_monotone: bool,
    /// Held-out trial file to evaluate the trained model on.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Training-curve output (default: <out>.curves.txt).
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Trial file to reduce (MIBT).
    #[arg(long)]
    pub data: PathBuf,
    /// Output reduced trial file.
    #[arg(long)]
    pub out: PathBuf,
    /// Trained checkpoint(s); several are ranked by their averaged norms.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// Keep the N̄ highest-ranked channels (needs --checkpoint).
    #[arg(long, value_name = "K", conflicts_with_all = ["preset", "preset_file"])]
    pub n_bar: Option<usize>,
    /// Keep the electrodes of a headset preset, e.g. Central-3.
    #[arg(long, conflicts_with = "preset_file")]
    pub preset: Option<String>,
    /// Keep the electrodes listed in a file (comma or whitespace separated).
    #[arg(long)]
    pub preset_file: Option<PathBuf>,
    /// Ranking output (default: <out>.ranking.json when a checkpoint is given).
    #[arg(long)]
    pub ranking: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QuantizeArgs {
    /// Trained checkpoint (MIBC).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Calibration trial file (MIBT), typically the training set.
    #[arg(long)]
    pub calib: PathBuf,
    /// Output int8 network (MIBQ).
    #[arg(long)]
    pub out: PathBuf,
    /// Print the export report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Int8 network (MIBQ).
    #[arg(long)]
    pub qnet: PathBuf,
    /// Trial file (MIBT).
    #[arg(long)]
    pub data: PathBuf,
    /// JSON report with predictions, metrics and the execution trace.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Int8 network (MIBQ).
    #[arg(long)]
    pub qnet: PathBuf,
    /// The float checkpoint it was exported from (MIBC).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Trial file (MIBT).
    #[arg(long)]
    pub data: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output trial file (MIBT).
    #[arg(long)]
    pub out: PathBuf,
    /// Trials per class.
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    /// Seed for noise, phases and burst onsets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON SynthSpec file; replaces the spec flags below.
    #[arg(long, conflicts_with_all = ["nch", "ns", "rate", "informative", "freqs", "amplitude", "noise", "mixing_seed"])]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub nch: usize,
    #[arg(long, default_value_t = 256)]
    pub ns: usize,
    /// Sample rate in Hz.
    #[arg(long, default_value_t = 128.0)]
    pub rate: f32,
    /// Informative channel indices shared by all classes.
    #[arg(long, value_delimiter = ',', default_value = "2,5")]
    pub informative: Vec<usize>,
    /// Burst centre frequency per class (one class per value).
    #[arg(long, value_delimiter = ',', default_value = "10,22")]
    pub freqs: Vec<f32>,
    /// Burst amplitude (noise sigma units).
    #[arg(long, default_value_t = 2.0)]
    pub amplitude: f32,
    /// White-noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f32,
    /// Seed of the per-class orthonormal mixing matrices.
    #[arg(long, default_value_t = 0)]
    pub mixing_seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        if n == 0 || pool.is_err() {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(error::ExitCode::Validation as u8);
        }
    }
    let result = match cli.command {
        Command::Estimate(a) => commands::estimate::run(a),
        Command::Train(a) => commands::train::run(a, cli.workers),
        Command::SelectChannels(a) => commands::select::run(a),
        Command::Quantize(a) => commands::quantize::run(a),
        Command::Infer(a) => commands::infer::run(a),
        Command::Verify(a) => commands::verify::run(a),
        Command::SynthData(a) => commands::synth::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
