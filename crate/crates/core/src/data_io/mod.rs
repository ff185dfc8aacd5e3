//! On-disk formats and dataset assembly.
//!
//! * [`features`]: the `TRKF` per-track feature file.
//! * [`manifest`]: JSON-lines track manifest.
//! * [`sampling`]: reduction of a track to a fixed number of frames.
//! * [`synth`]: seeded synthetic corpus with simulated occlusions.
//! * [`embeddings`]: JSON-lines table of computed track embeddings.

pub mod dataset;
pub mod embeddings;
pub mod features;
pub mod manifest;
pub mod sampling;
pub mod synth;

pub use dataset::Dataset;
pub use embeddings::{read_embedding_table, write_embedding_table, EmbeddingRow};
pub use features::{decode_features, encode_features, read_features, write_features, FEATURE_HEADER_LEN};
pub use manifest::{load_manifest, parse_manifest, write_manifest, Camera, ManifestEntry};
pub use sampling::{sample_frames, sample_indices, track_seed};
pub use synth::{synth_generate, SynthConfig, SynthCorpus};
