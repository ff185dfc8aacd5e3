use ndarray::Array1;
use rayon::prelude::*;

use crate::aggregation::{aggregate, AggregatorParams, AggregatorTape, AggregatorVariant, FeatureMatrix, TrackEmbedding};
use crate::error::{Error, Result};
use crate::metrics::MetricParams;

/// Aggregator variant, its weights, and the metric comparing its outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub variant: AggregatorVariant,
    pub aggregator: AggregatorParams,
    pub metric: MetricParams,
    /// Raw feature dimension `N` the model accepts.
    pub input_dim: usize,
}

impl Model {
    pub fn new(
        variant: AggregatorVariant,
        aggregator: AggregatorParams,
        metric: MetricParams,
        input_dim: usize,
    ) -> Result<Self> {
        let d = aggregator.validate(variant, input_dim)?;
        metric.validate(d)?;
        Ok(Self {
            variant,
            aggregator,
            metric,
            input_dim,
        })
    }

    /// Parameter-free average pooling compared with Euclidean distance.
    pub fn average_pooling(input_dim: usize) -> Self {
        Self {
            variant: AggregatorVariant::Avg,
            aggregator: AggregatorParams::zeros(AggregatorVariant::Avg, input_dim, 0),
            metric: MetricParams::Euclidean,
            input_dim,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        if self.variant.projects() {
            self.aggregator.w1.nrows()
        } else {
            self.input_dim
        }
    }

    pub fn embed(&self, x: &FeatureMatrix) -> Result<TrackEmbedding> {
        self.embed_with_tape(x).map(|(f, _)| f)
    }

    pub fn embed_with_tape(&self, x: &FeatureMatrix) -> Result<(TrackEmbedding, AggregatorTape)> {
        if x.dim() != self.input_dim {
            return Err(Error::mismatch("track feature dimension", self.input_dim, x.dim()));
        }
        aggregate(x, &self.aggregator, self.variant)
    }

    /// Embeds every track, fanning out over `threads` workers when more than
    /// one is requested. Output order always follows input order.
    pub fn embed_all(&self, tracks: &[FeatureMatrix], threads: usize) -> Result<Vec<TrackEmbedding>> {
        map_in_order(tracks, threads, |x| self.embed(x))
    }

    pub fn embed_all_values(&self, tracks: &[FeatureMatrix], threads: usize) -> Result<Vec<Array1<f64>>> {
        Ok(self.embed_all(tracks, threads)?.into_iter().map(|e| e.values).collect())
    }
}

/// Applies `f` to every item, in parallel when `threads > 1`, collecting
/// results in input order.
pub(crate) fn map_in_order<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if threads <= 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}
