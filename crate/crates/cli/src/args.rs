use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sceneset", version, about = "Scene-text corpus and benchmark pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline config (TOML).
    #[arg(long, global = true, env = "SCENESET_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true, env = "SCENESET_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "SCENESET_WORKERS")]
    pub workers: Option<usize>,
    /// Read and validate inputs, report what would be written, write nothing.
    #[arg(long, global = true, env = "SCENESET_DRY_RUN")]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert annotations (ICDAR text, COCO JSON or instance JSONL) into one corpus file.
    Ingest(IngestArgs),
    /// Cut every instance out of its scene image.
    Crop(CropArgs),
    /// Drop ignored instances and labels outside the charset.
    Filter(FilterArgs),
    /// Remove exact duplicates and instances whose source image is already known.
    Dedup(DedupArgs),
    /// List corpus instances sharing a label with the benchmark, as a review queue.
    Collisions(CollisionArgs),
    /// Keep regions found by all detectors with pairwise IoU above the threshold.
    Vote(VoteArgs),
    /// Assign difficulty levels from recognizer predictions.
    Difficulty(DifficultyArgs),
    /// Word accuracy per subset and model.
    Evaluate(EvaluateArgs),
    /// Build benchmark subsets and the training split from a spec file.
    Assemble(AssembleArgs),
    /// Remove the first or last character of each word image.
    MutateIncomplete(MutateArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
    /// Serve review queues over HTTP.
    ReviewServe(ReviewArgs),
    /// Saturation-scope arithmetic for a benchmark error analysis.
    Scope(ScopeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Icdar,
    Coco,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub format: InputFormat,
    /// Annotation files, or directories of them.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Dataset name recorded on each instance.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Image extension for ICDAR files (`gt_img_1.txt` refers to `img_1.<ext>`).
    #[arg(long, default_value = "jpg")]
    pub image_ext: String,
    /// Image root; when given, image digests are computed.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CropMethod {
    Axis,
    Rotated,
}

#[derive(Debug, Args)]
pub struct CropArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "axis")]
    pub method: CropMethod,
    /// Directory for the word images; later stages use it as `--images`.
    #[arg(long)]
    pub crop_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// `ascii95` or `strict91`.
    #[arg(long)]
    pub charset: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop reasons (default: `<out>.drops.jsonl`).
    #[arg(long)]
    pub drops: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Used to fill missing digests.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Source image ids already present elsewhere, one per line.
    #[arg(long)]
    pub reference_ids: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Removed ids (default: `<out>.removed.jsonl`).
    #[arg(long)]
    pub removed: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CollisionArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Benchmark instances (JSONL).
    #[arg(long)]
    pub benchmark: PathBuf,
    /// Label comparison (default waic).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VoteArgs {
    /// One file per detector; at least two.
    #[arg(long = "detections", required = true)]
    pub detections: Vec<PathBuf>,
    #[arg(long)]
    pub iou: Option<f64>,
    /// Accept agreement among any two or more detectors instead of all.
    #[arg(long)]
    pub any_subset: bool,
    #[arg(long, default_value = "pseudo")]
    pub dataset: String,
    /// Image root; when given, image digests are computed.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DifficultyArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Prediction files (`{model_id, sample_id, text}` lines).
    #[arg(long = "predictions", required = true)]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-sample vote bits (default: `<out>.votes.jsonl`).
    #[arg(long)]
    pub votes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth corpora; may be repeated.
    #[arg(long = "corpus")]
    pub corpora: Vec<PathBuf>,
    #[arg(long = "predictions", required = true)]
    pub predictions: Vec<PathBuf>,
    /// Subset manifests; without any, the whole corpus is one subset.
    #[arg(long = "subset")]
    pub subsets: Vec<PathBuf>,
    /// Mutation pairs; adds the incomplete-text margin per model.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also print the table.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct MutateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Restrict to the ids of this subset manifest.
    #[arg(long)]
    pub subset: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Accept instances of any difficulty level.
    #[arg(long)]
    pub any_level: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    /// Directory of queue files (`<queue_id>.jsonl`).
    #[arg(long)]
    pub queues: PathBuf,
    /// Decision log (default: `<queues>/decisions.jsonl`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Static browser client to serve at `/`.
    #[arg(long)]
    pub ui: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080, env = "SCENESET_PORT")]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct ScopeArgs {
    #[arg(long)]
    pub total: u64,
    #[arg(long)]
    pub errors: u64,
    #[arg(long)]
    pub mislabeled: u64,
    #[arg(long)]
    pub unrecognizable: u64,
    #[arg(long)]
    pub json: bool,
}
