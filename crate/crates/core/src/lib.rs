//! Learned aggregation of per-frame features into fixed-size track
//! embeddings for re-identification.
//!
//! A track is a `T×N` matrix of per-frame features. The aggregation network
//! ([`aggregation`]) weights every feature component of every frame with a
//! softmax taken along time, pools, and L2-normalizes. Embeddings are
//! compared with Euclidean, Weighted Euclidean, or factored Mahalanobis
//! distance ([`metrics`]); the network and metric are trained jointly as a
//! Siamese pair with contrastive loss and hard negative mining
//! ([`training`]), and scored with mAP, hit rates and CMC ([`evaluation`]).

pub mod aggregation;
pub mod checkpoint;
pub mod data_io;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod training;

pub use aggregation::{
    aggregate, aggregate_backward, AggregatorGrads, AggregatorParams, AggregatorTape, AggregatorVariant,
    FeatureMatrix, FrameWeightStats, TrackEmbedding,
};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use data_io::{Dataset, ManifestEntry, SynthConfig};
pub use diagnostics::{frame_weight_summary, FrameWeightSummary};
pub use error::{Error, Result};
pub use evaluation::{build_protocol, evaluate, EvalCase, EvalReport};
pub use metrics::{MetricKind, MetricParams};
pub use model::Model;
pub use training::{train, EpochStats, ModelCheckpoint, TrainConfig, TrainOutcome};
