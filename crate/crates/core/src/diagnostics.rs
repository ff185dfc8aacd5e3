//! Dataset-level summaries of attention weights and learned metrics.

use serde::{Deserialize, Serialize};

use crate::aggregation::frame_weight_stats;
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{diag_dominance, MetricParams};
use crate::model::{map_in_order, Model};

pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub fraction: f64,
}

/// Equal-width bins over `[min, max]` of `values`; the last bin is closed.
/// A constant sample lands in a single zero-width bin.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if values.is_empty() {
        return Err(Error::Empty("histogram input"));
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram input"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total = values.len() as f64;
    if lo == hi {
        return Ok(vec![HistogramBin {
            lo,
            hi,
            count: values.len(),
            fraction: 1.0,
        }]);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lo: lo + k as f64 * width,
            hi: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
            count,
            fraction: count as f64 / total,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSplit {
    pub corrupted_frames: usize,
    pub clean_frames: usize,
    pub corrupted_mean_weight: f64,
    pub clean_mean_weight: f64,
}

impl CorruptionSplit {
    /// `(clean - corrupted) / clean`; positive when attention suppresses
    /// corrupted frames.
    pub fn relative_gap(&self) -> f64 {
        (self.clean_mean_weight - self.corrupted_mean_weight) / self.clean_mean_weight
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameWeightSummary {
    /// Per-track, per-frame mean weights, in dataset order.
    pub mean_weights: Vec<Vec<f64>>,
    /// Relative std averaged over every frame of every track.
    pub mean_relative_std: f64,
    /// Present when the manifest carries corrupted-frame ground truth.
    pub corruption: Option<CorruptionSplit>,
}

impl FrameWeightSummary {
    pub fn flat_weights(&self) -> Vec<f64> {
        self.mean_weights.iter().flatten().copied().collect()
    }
}

pub fn frame_weight_summary(model: &Model, dataset: &Dataset, threads: usize) -> Result<FrameWeightSummary> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let stats = map_in_order(&dataset.features, threads, |x| {
        let (_, tape) = model.embed_with_tape(x)?;
        frame_weight_stats(tape.weights.view())
    })?;

    let frames: usize = stats.iter().map(|s| s.mean_weights.len()).sum();
    let rel_std = stats
        .iter()
        .map(|s| s.mean_relative_std * s.mean_weights.len() as f64)
        .sum::<f64>()
        / frames as f64;

    let (mut bad_sum, mut bad_n, mut good_sum, mut good_n) = (0.0, 0usize, 0.0, 0usize);
    let mut any_truth = false;
    for (i, s) in stats.iter().enumerate() {
        let Some(mask) = dataset.corrupted_mask(i) else { continue };
        any_truth = true;
        for (&w, bad) in s.mean_weights.iter().zip(mask) {
            if bad {
                bad_sum += w;
                bad_n += 1;
            } else {
                good_sum += w;
                good_n += 1;
            }
        }
    }
    let corruption = (any_truth && bad_n > 0 && good_n > 0).then(|| CorruptionSplit {
        corrupted_frames: bad_n,
        clean_frames: good_n,
        corrupted_mean_weight: bad_sum / bad_n as f64,
        clean_mean_weight: good_sum / good_n as f64,
    });

    Ok(FrameWeightSummary {
        mean_weights: stats.into_iter().map(|s| s.mean_weights).collect(),
        mean_relative_std: rel_std,
        corruption,
    })
}

/// `tr(|M|) / Σ|M|` of the full Mahalanobis matrix; `None` for other metrics.
pub fn metric_diag_dominance(metric: &MetricParams) -> Result<Option<f64>> {
    match metric {
        MetricParams::Mahalanobis(w) => {
            let m = metric.full_matrix(w.nrows());
            Ok(Some(diag_dominance(m.view())?.ratio))
        }
        _ => Ok(None),
    }
}
