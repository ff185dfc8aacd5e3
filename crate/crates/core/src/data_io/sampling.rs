//! Reduction of a track to a fixed frame count.
//!
//! Longer tracks are sampled on an even stride of `T/T_out` source frames
//! with a seeded phase in `[0, stride)`, computed exactly in integers as
//! `(k·T + r) / T_out` for a seeded `r ∈ [0, T)`. Shorter tracks are repeated
//! cyclically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregation::FeatureMatrix;
use crate::error::{Error, Result};

/// Default number of frames per track.
pub const DEFAULT_TIME_SAMPLES: usize = 16;

pub fn sample_indices(source_frames: usize, t_out: usize, seed: u64) -> Result<Vec<usize>> {
    if source_frames == 0 {
        return Err(Error::Empty("track has no frames"));
    }
    if t_out == 0 {
        return Err(Error::InvalidConfig("time samples must be at least 1".into()));
    }
    if source_frames < t_out {
        return Ok((0..t_out).map(|k| k % source_frames).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.random_range(0..source_frames);
    Ok((0..t_out).map(|k| (k * source_frames + r) / t_out).collect())
}

pub fn sample_frames(matrix: &FeatureMatrix, t_out: usize, seed: u64) -> Result<FeatureMatrix> {
    let indices = sample_indices(matrix.frames(), t_out, seed)?;
    matrix.select_frames(&indices)
}

/// Per-track sampling seed, stable under manifest reordering.
pub fn track_seed(seed: u64, track_id: &str) -> u64 {
    // FNV-1a over the id, folded with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in track_id.bytes().chain(seed.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
