//! Seeded fixtures shared by the benchmarks.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackagg::{AggregatorParams, AggregatorVariant, FeatureMatrix, MetricKind, MetricParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn features(rng: &mut ChaCha8Rng, frames: usize, dim: usize) -> FeatureMatrix {
    FeatureMatrix::new(Array2::from_shape_fn((frames, dim), |_| rng.random_range(-1.0..1.0))).expect("finite")
}

pub fn embedding(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))
}

pub fn params(rng: &mut ChaCha8Rng, variant: AggregatorVariant, input_dim: usize, embedding_dim: usize) -> AggregatorParams {
    let mut p = AggregatorParams::zeros(variant, input_dim, embedding_dim);
    let s = 1.0 / (input_dim as f64).sqrt();
    p.w1.mapv_inplace(|_| rng.random_range(-s..s));
    p.w2.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    p
}

pub fn metric(rng: &mut ChaCha8Rng, kind: MetricKind, dim: usize) -> MetricParams {
    match kind {
        MetricKind::Euclidean => MetricParams::Euclidean,
        MetricKind::WeightedEuclidean => MetricParams::WeightedEuclidean(embedding(rng, dim).mapv(f64::abs)),
        MetricKind::Mahalanobis => MetricParams::Mahalanobis(Array2::from_shape_fn((dim, dim), |_| rng.random_range(-0.1..0.1))),
    }
}
