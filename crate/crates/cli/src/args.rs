use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use trackagg::{AggregatorVariant, MetricKind, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "trackagg", version, about = "Learned temporal aggregation of per-frame features for track re-identification")]
pub struct Cli {
    /// Raise log verbosity (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an aggregator and metric; writes checkpoint.trkc and loss.csv.
    Train(TrainArgs),
    /// Embed every manifest track; writes embeddings.jsonl.
    Embed(ModelRunArgs),
    /// Score retrieval on the manifest; writes report.json and cmc.csv.
    Eval(ModelRunArgs),
    /// List the k nearest tracks to a query from an embedding table.
    Search(SearchArgs),
    /// Generate a synthetic corpus (manifest.jsonl and features/).
    Synth(SynthArgs),
    /// Attention-weight and metric diagnostics; writes diagnostics.json.
    Diag(DiagArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with a [train] table of defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate; defaults depend on the metric.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Frames sampled per track.
    #[arg(long)]
    pub time_samples: Option<usize>,
    /// Projection width M.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// euclidean | weighted_euclidean | mahalanobis
    #[arg(long)]
    pub metric: Option<MetricKind>,
    /// full | avg | project_only | attention_only
    #[arg(long)]
    pub variant: Option<AggregatorVariant>,
    /// Mahalanobis orthogonality penalty weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Hard negatives mined per positive pair.
    #[arg(long)]
    pub hard_negatives: Option<usize>,
    /// Seed for initialization, sampling and shuffling (default 20180927).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default 1; results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut cfg.epochs, &self.epochs);
        set(&mut cfg.batch_size, &self.batch_size);
        if self.lr.is_some() {
            cfg.learning_rate = self.lr;
        }
        set(&mut cfg.margin, &self.margin);
        set(&mut cfg.time_samples, &self.time_samples);
        set(&mut cfg.embedding_dim, &self.embedding_dim);
        set(&mut cfg.metric, &self.metric);
        set(&mut cfg.variant, &self.variant);
        set(&mut cfg.lambda, &self.lambda);
        set(&mut cfg.hard_negatives_per_positive, &self.hard_negatives);
        set(&mut cfg.seed, &self.seed);
        set(&mut cfg.threads, &self.threads);
    }
}

/// Inputs shared by subcommands that apply a checkpoint to a manifest.
#[derive(Debug, Args)]
pub struct ModelRunArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Default, Args)]
pub struct SamplingArgs {
    /// Frames sampled per track (default: the checkpoint's training value).
    #[arg(long)]
    pub time_samples: Option<usize>,
    /// Sampling seed (default: the checkpoint's training seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default 1).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Embedding table written by `embed`.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Query track id; must be present in the table.
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Checkpoint whose learned metric ranks the gallery (default Euclidean).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Optional run directory for search.tsv and summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with a [synth] table of defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub tracks_per_identity: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Feature dimension N.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Per-component noise std of clean frames.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Probability that a frame is replaced by a distractor.
    #[arg(long)]
    pub corruption: Option<f64>,
    /// Size of the shared distractor pool.
    #[arg(long)]
    pub distractors: Option<usize>,
    /// Norm of distractor vectors.
    #[arg(long)]
    pub distractor_scale: Option<f64>,
    /// Generator seed (default 7).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    #[command(flatten)]
    pub run: ModelRunArgs,
    /// Histogram bins over per-frame mean weights.
    #[arg(long, default_value_t = trackagg::diagnostics::DEFAULT_HISTOGRAM_BINS)]
    pub bins: usize,
}
