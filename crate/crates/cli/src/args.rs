use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdr_cir::{Dataset, Mode};

#[derive(Debug, Parser)]
#[command(
    name = "sdr-cir",
    version,
    about = "Training-free composed image retrieval with selective descriptions and debiased ranking"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an SDRE embedding file and print its shape.
    Ingest(IngestArgs),
    /// Convert a native CIRR, CIRCO or FashionIQ annotation file to query JSON lines.
    Convert(ConvertArgs),
    /// Generate target descriptions for every query into the description cache.
    Generate(GenerateArgs),
    /// Write ranked candidate lists with per-candidate score breakdowns.
    Rank(RankArgs),
    /// Score queries and write a metric report.
    Eval(EvalArgs),
    /// Evaluate an alpha x beta grid and write a grid report.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// SDRE file to validate.
    pub file: PathBuf,
    /// Also write the normalized, id-sorted store here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetArg {
    Cirr,
    Circo,
    Fashioniq,
}

impl From<DatasetArg> for Dataset {
    fn from(d: DatasetArg) -> Self {
        match d {
            DatasetArg::Cirr => Dataset::Cirr,
            DatasetArg::Circo => Dataset::Circo,
            DatasetArg::Fashioniq => Dataset::FashionIq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    DescriptionOnly,
    AnchorOnly,
    DebiasOnly,
    FullSdr,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::DescriptionOnly => Mode::DescriptionOnly,
            ModeArg::AnchorOnly => Mode::AnchorOnly,
            ModeArg::DebiasOnly => Mode::DebiasOnly,
            ModeArg::FullSdr => Mode::FullSdr,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Layout of the input annotation file.
    #[arg(long, value_enum)]
    pub format: DatasetArg,
    /// FashionIQ category used to prefix query ids (dress, shirt, toptee).
    #[arg(long)]
    pub category: Option<String>,
    /// Native annotation JSON.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Query JSON-lines output.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Chat endpoint settings. The API key is read from SDR_API_KEY only.
#[derive(Debug, Args)]
pub struct ClientArgs {
    /// Chat-completions base URL [env: SDR_BASE_URL, default: OpenAI].
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Maximum concurrent requests.
    #[arg(long, default_value_t = sdr_cir::cot::DEFAULT_CONCURRENCY, value_parser = positive)]
    pub concurrency: usize,
    #[arg(long, default_value_t = sdr_cir::cot::DEFAULT_MAX_TOKENS)]
    pub max_tokens: u32,
    /// Attempts per request for 429 and 5xx responses.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_attempts: u32,
    /// First retry delay in milliseconds; doubles on each retry.
    #[arg(long, default_value_t = 1000)]
    pub retry_base_ms: u64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Query JSON lines.
    #[arg(long, value_name = "FILE")]
    pub queries: PathBuf,
    /// Directory holding reference images named <reference_id>.<jpg|jpeg|png|webp|gif>.
    #[arg(long, value_name = "DIR")]
    pub images: PathBuf,
    /// Description cache (JSON lines, appended to).
    #[arg(long, value_name = "FILE")]
    pub cache: PathBuf,
    /// Multimodal chat model name.
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub client: ClientArgs,
    /// Worker threads (default: all cores).
    #[arg(long, value_parser = positive)]
    pub threads: Option<usize>,
}

/// Where queries and their embeddings come from.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Query JSON lines.
    #[arg(long, value_name = "FILE")]
    pub queries: PathBuf,
    /// Candidate image embeddings (SDRE).
    #[arg(long, value_name = "FILE")]
    pub candidates: PathBuf,
    /// Reference image embeddings (SDRE); defaults to the candidate store.
    #[arg(long, value_name = "FILE")]
    pub references: Option<PathBuf>,
    /// Precomputed description embeddings keyed by query id (SDRE).
    #[arg(long, value_name = "FILE")]
    pub description_embeddings: Option<PathBuf>,
    /// Precomputed modification-text embeddings keyed by query id (SDRE).
    #[arg(long, value_name = "FILE")]
    pub modification_embeddings: Option<PathBuf>,
    /// External description set (JSON lines with query_id and description).
    #[arg(long, value_name = "FILE", conflicts_with = "description_embeddings")]
    pub descriptions_from: Option<PathBuf>,
    /// Description cache to take description text from.
    #[arg(long, value_name = "FILE")]
    pub cache: Option<PathBuf>,
    /// Only use cached descriptions made by this model.
    #[arg(long)]
    pub model: Option<String>,
    /// Text embedder command, run as `CMD embed-texts --model TAG --in JSONL --out FILE`.
    #[arg(long, value_name = "CMD")]
    pub embedder: Option<String>,
    /// Checkpoint tag passed to the embedder.
    #[arg(long, value_name = "TAG", requires = "embedder")]
    pub embed_model: Option<String>,
    /// Benchmark preset: selects alpha/beta defaults; cirr also excludes each reference image.
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetArg>,
    /// Drop each query's reference image from its candidate pool.
    #[arg(long, conflicts_with = "keep_reference")]
    pub exclude_reference: bool,
    /// Keep the reference image in the pool even under --dataset cirr.
    #[arg(long)]
    pub keep_reference: bool,
    /// Worker threads (default: all cores).
    #[arg(long, value_parser = positive)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Anchor weight in [0, 1]; overrides the dataset preset.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Debias weight (>= 0); overrides the dataset preset.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum, default_value = "full-sdr")]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Cutoffs for Recall@k and mAP@k.
    #[arg(long = "k", value_delimiter = ',', default_values_t = [1usize, 5, 10, 50])]
    pub k_values: Vec<usize>,
    /// Cutoffs for subset Recall@k.
    #[arg(long = "subset-k", value_delimiter = ',', default_values_t = [1usize, 2, 3])]
    pub subset_k_values: Vec<usize>,
    /// Leave per-query timing out of reports so reruns are byte-identical.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Candidates kept per query.
    #[arg(long, default_value_t = 50, value_parser = positive)]
    pub top_k: usize,
    /// Ranked lists, one JSON object per query.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateOnTheFly {
    /// Generate missing descriptions into --cache before scoring.
    #[arg(long, requires_all = ["images", "cache", "model"])]
    pub generate: bool,
    /// Reference image directory, for --generate.
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    #[command(flatten)]
    pub client: ClientArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub metrics: MetricArgs,
    /// Report all four ablation modes instead of --mode alone.
    #[arg(long, conflicts_with = "sweep")]
    pub ablate: bool,
    /// Grid axes, e.g. `alpha=0:0.3:0.05 beta=0:0.5:0.05`.
    #[arg(long, num_args = 1..=2, value_name = "AXIS=START:STOP:STEP")]
    pub sweep: Vec<String>,
    /// With --sweep, also draw an SVG heatmap of this metric.
    #[arg(long, value_name = "METRIC", num_args = 0..=1, default_missing_value = "recall@1")]
    pub heatmap: Option<String>,
    #[command(flatten)]
    pub generation: GenerateOnTheFly,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub metrics: MetricArgs,
    /// Grid axes, e.g. `alpha=0:0.3:0.05 beta=0:0.5:0.05`. A missing axis
    /// stays at the resolved alpha or beta.
    #[arg(long, required = true, num_args = 1..=2, value_name = "AXIS=START:STOP:STEP")]
    pub sweep: Vec<String>,
    /// Also draw an SVG heatmap of this metric.
    #[arg(long, value_name = "METRIC", num_args = 0..=1, default_missing_value = "recall@1")]
    pub heatmap: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}
