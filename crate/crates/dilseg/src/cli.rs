//! Command-line definitions and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dilseg_core::arch::ModelKind;

use crate::commands;

/// Segmentation with dilated UNet variants: data, training, evaluation and
/// receptive-field analysis.
#[derive(Debug, Parser)]
#[command(name = "dilseg", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom dataset directory.
    Phantom(PhantomArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate one checkpoint, or compare two, on a dataset split.
    Eval(EvalArgs),
    /// Segment one image file.
    Predict(PredictArgs),
    /// Receptive-field report of a network.
    Rf(RfArgs),
    /// Gridding coverage of a stack of stride-1 dilated convolutions.
    Grid(GridArgs),
}

pub fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown model {:?} (expected one of: {})", s, names.join(", "))
    })
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',').map(|p| p.trim().parse::<T>().map_err(|_| format!("invalid list entry {:?}", p))).collect()
}

fn parse_ratios(s: &str) -> Result<[u64; 3], String> {
    let v: Vec<u64> = parse_list(s)?;
    <[u64; 3]>::try_from(v).map_err(|_| "expected three comma-separated ratios train,val,test".to_string())
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` file with phantom settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train/val/test proportions, scaled to `count`.
    #[arg(long, value_parser = parse_ratios)]
    pub ratios: Option<[u64; 3]>,
    /// Maximum tumors per sample (0 disables tumors).
    #[arg(long)]
    pub max_tumors: Option<usize>,
    /// Also write PGM previews.
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for checkpoints and the training log.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    /// `key = value` file with run settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Total number of epochs (a resumed run continues up to this count).
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Channels of the first encoder block.
    #[arg(long)]
    pub base_width: Option<usize>,
    #[arg(long)]
    pub patience: Option<u32>,
    #[arg(long)]
    pub factor: Option<f64>,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Only print the final summary.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Second checkpoint; enables the paired Wilcoxon comparison.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Per-sample rows `patient_id,class,dsc,assd_mm`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Score the ground truth against itself instead of running the model.
    #[arg(long)]
    pub truth_as_prediction: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Image container, `(H, W)` or `(1, 1, H, W)`.
    #[arg(long)]
    pub image: PathBuf,
    /// Output prefix: writes `<prefix>_lbl.dls` and `<prefix>_prob_<class>.dls`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a PGM of the label map.
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AccountingArg {
    Encoder,
    Bridge,
    Full,
}

#[derive(Debug, Args)]
pub struct RfArgs {
    #[arg(value_parser = parse_model)]
    pub model: ModelKind,
    /// Layer set for the per-layer table (default: the headline accounting).
    #[arg(long, value_enum)]
    pub accounting: Option<AccountingArg>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Comma-separated dilation rates, shallow to deep.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub dilations: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    /// Draw the contributing positions.
    #[arg(long)]
    pub map: bool,
}

/// Exit codes: 0 success, 1 runtime error, 2 usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{}", text) } else { write!(err, "{}", text) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Phantom(a) => commands::phantom(&a, out),
        Command::Train(a) => commands::train(&a, out),
        Command::Eval(a) => commands::eval(&a, out),
        Command::Predict(a) => commands::predict(&a, out),
        Command::Rf(a) => commands::rf(&a, out),
        Command::Grid(a) => commands::grid(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {:#}", e);
            if e.downcast_ref::<commands::UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
