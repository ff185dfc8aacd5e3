use std::path::Path;

use crate::aggregation::FeatureMatrix;
use crate::data_io::features::read_features;
use crate::data_io::manifest::{load_manifest, ManifestEntry};
use crate::data_io::sampling::{sample_indices, track_seed};
use crate::error::{Error, Result};

/// Tracks with their features reduced to a fixed frame count.
///
/// Sampling happens once, at construction, with a per-track seed derived from
/// the run seed and the track id.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub entries: Vec<ManifestEntry>,
    pub features: Vec<FeatureMatrix>,
    /// Source frame index of every sampled row.
    pub frame_indices: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn from_tracks(
        entries: Vec<ManifestEntry>,
        raw: Vec<FeatureMatrix>,
        time_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if entries.len() != raw.len() {
            return Err(Error::mismatch("feature matrices per track", entries.len(), raw.len()));
        }
        let mut dim = None;
        let mut features = Vec::with_capacity(raw.len());
        let mut frame_indices = Vec::with_capacity(raw.len());
        for (entry, matrix) in entries.iter().zip(raw) {
            if matrix.frames() != entry.frames {
                return Err(Error::FrameCountMismatch {
                    track: entry.track_id.clone(),
                    declared: entry.frames,
                    actual: matrix.frames(),
                });
            }
            match dim {
                None => dim = Some(matrix.dim()),
                Some(d) if d != matrix.dim() => {
                    return Err(Error::mismatch("feature dimension across tracks", d, matrix.dim()))
                }
                Some(_) => {}
            }
            let idx = sample_indices(matrix.frames(), time_samples, track_seed(seed, &entry.track_id))?;
            features.push(matrix.select_frames(&idx)?);
            frame_indices.push(idx);
        }
        Ok(Self {
            entries,
            features,
            frame_indices,
        })
    }

    pub fn load(manifest: impl AsRef<Path>, time_samples: usize, seed: u64) -> Result<Self> {
        let entries = load_manifest(manifest)?;
        let raw = entries
            .iter()
            .map(|e| read_features(&e.features))
            .collect::<Result<Vec<_>>>()?;
        Self::from_tracks(entries, raw, time_samples, seed)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.first().map(FeatureMatrix::dim)
    }

    pub fn track_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.track_id.as_str()).collect()
    }

    pub fn position(&self, track_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.track_id == track_id)
    }

    /// Corruption flag of every sampled row, when the manifest carries
    /// ground truth for track `i`.
    pub fn corrupted_mask(&self, i: usize) -> Option<Vec<bool>> {
        let bad = self.entries[i].corrupted_frames.as_ref()?;
        Some(self.frame_indices[i].iter().map(|f| bad.contains(f)).collect())
    }
}
