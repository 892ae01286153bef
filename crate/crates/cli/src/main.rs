//! `seqpix` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Errors that are the caller's fault; they exit with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "seqpix", version, about = "Lossless bilevel digit compression with a sequential pixel predictor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and binarize a dataset, writing the binary images as IDX files.
    Ingest(IngestArgs),
    /// Fit the neural predictor or one of the baseline coders.
    Train(TrainArgs),
    /// Mean code length of a model or table on a split.
    Eval(EvalArgs),
    /// Compress a split (or an IDX file) into a container.
    Compress(CompressArgs),
    /// Decode a container back into an IDX image file.
    Decompress(DecompressArgs),
    /// Draw digits from a trained model into a PGM grid.
    Sample(SampleArgs),
    /// Render learned weights as a PGM grid.
    Filters(FiltersArgs),
    /// Regenerate the method comparison table.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetName {
    Mnist,
    Usps,
}

impl DatasetName {
    pub fn name(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Usps => "usps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Test,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetName,
    /// Directory holding the MNIST IDX files and/or usps.txt.
    #[arg(long, env = "SEQPIX_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Neural,
    Constant,
    Pixel,
    Centers,
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    #[value(name = "r_only")]
    ROnly,
    #[value(name = "uv_only")]
    UvOnly,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PermArg {
    #[value(name = "per_iter")]
    PerIter,
    Fixed,
    Raster,
}

/// Training hyperparameters; flags override `--config`.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// `key=value` lines of training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    pub perm: Option<PermArg>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Wall-clock training budget in seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, value_enum, default_value = "neural")]
    pub method: Method,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Probability clamp for the baseline tables.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Number of centers; cross-validated when omitted.
    #[arg(long)]
    pub centers: Option<usize>,
    #[arg(long, default_value = "model.sppm")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetName>,
    #[arg(long, env = "SEQPIX_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Compress an IDX image file (binarized at 128) instead of a dataset split.
    #[arg(long, conflicts_with = "dataset")]
    pub images: Option<PathBuf>,
    /// Only the first N images.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// IDX image file with pixels 0/255.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Grid columns; defaults to a near-square layout.
    #[arg(long)]
    pub cols: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value = "samples.pgm")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    U,
    V,
    R,
}

#[derive(Debug, Args)]
pub struct FiltersArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "u")]
    pub kind: FilterArg,
    /// At most this many filters.
    #[arg(long, default_value_t = 100)]
    pub limit: usize,
    #[arg(long, default_value = "filters.pgm")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMethod {
    Constant,
    Pixel,
    Centers,
    Context,
    #[value(name = "r_only")]
    ROnly,
    #[value(name = "uv_only")]
    UvOnly,
    Full,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, required = true, num_args = 1.., value_delimiter = ',')]
    pub dataset: Vec<DatasetName>,
    #[arg(long, env = "SEQPIX_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "constant,pixel,centers,context,r_only,uv_only,full")]
    pub methods: Vec<BenchMethod>,
    /// Pretrained model for a neural row, as `dataset:label=path`
    /// (e.g. `mnist:full=full.sppm`).
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Train neural rows that have no pretrained model, with this many
    /// seconds per model.
    #[arg(long)]
    pub train_budget: Option<f64>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Fixed center count; cross-validated when omitted.
    #[arg(long)]
    pub centers: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
