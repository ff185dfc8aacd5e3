//! Siamese contrastive training of the aggregator and metric on cached track
//! features.
//!
//! Each epoch re-embeds every track with the parameters frozen at epoch
//! start, pairs every positive case with its hardest negative(s), shuffles the
//! pairs with a generator seeded from `(seed, epoch)`, and takes one Adam step
//! per batch on the batch-mean loss. Both branches of a pair run through the
//! same weights and their gradients are summed.

use std::fs;
use std::path::Path;

use log::{debug, warn};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_backward, AggregatorGrads, AggregatorParams, AggregatorVariant, FeatureMatrix};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{build_protocol, EvalCase};
use crate::metrics::{mahalanobis_regularizer, metric_grad, project_nonnegative_in_place, MetricKind, MetricParamGrad, MetricParams};
use crate::model::Model;

pub const DEFAULT_SEED: u64 = 20180927;

/// Learning rate for Euclidean distance.
pub const LEARNING_RATE_EUCLIDEAN: f64 = 1e-5;
/// Learning rate for the learned metrics, `10^-4.4`.
pub const LEARNING_RATE_LEARNED_METRIC: f64 = 3.981_071_705_534_972e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// `None` selects the default for `metric`, see
    /// [`TrainConfig::effective_learning_rate`].
    pub learning_rate: Option<f64>,
    pub margin: f64,
    pub time_samples: usize,
    pub embedding_dim: usize,
    pub metric: MetricKind,
    pub variant: AggregatorVariant,
    /// Weight of the Mahalanobis orthogonality penalty.
    pub lambda: f64,
    pub seed: u64,
    pub hard_negatives_per_positive: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Workers for per-epoch embedding. Does not affect results.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: None,
            margin: 2.0,
            time_samples: 16,
            embedding_dim: 128,
            metric: MetricKind::Euclidean,
            variant: AggregatorVariant::Full,
            lambda: 0.01,
            seed: DEFAULT_SEED,
            hard_negatives_per_positive: 1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn effective_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.metric {
            MetricKind::Euclidean => LEARNING_RATE_EUCLIDEAN,
            MetricKind::WeightedEuclidean | MetricKind::Mahalanobis => LEARNING_RATE_LEARNED_METRIC,
        })
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.effective_learning_rate(),
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if self.time_samples == 0 {
            return bad("time_samples must be at least 1".into());
        }
        if self.variant.projects() && self.embedding_dim == 0 {
            return bad("embedding_dim must be at least 1".into());
        }
        let lr = self.effective_learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return bad(format!("learning_rate must be positive, got {lr}"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.hard_negatives_per_positive == 0 {
            return bad("hard_negatives_per_positive must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive".into());
        }
        Ok(())
    }
}

/// A training pair; `positive` is the label `y` (same identity).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSample {
    pub query: usize,
    pub gallery: usize,
    pub positive: bool,
}

/// `y·d² + (1−y)·max(m−d, 0)²`.
pub fn contrastive_loss(d: f64, positive: bool, margin: f64) -> Result<f64> {
    check_loss_inputs(d, margin)?;
    Ok(if positive {
        d * d
    } else {
        let h = (margin - d).max(0.0);
        h * h
    })
}

/// `∂L/∂d`; zero at the hinge kink `d = m`.
pub fn contrastive_loss_grad(d: f64, positive: bool, margin: f64) -> Result<f64> {
    check_loss_inputs(d, margin)?;
    Ok(if positive { 2.0 * d } else { -2.0 * (margin - d).max(0.0) })
}

fn check_loss_inputs(d: f64, margin: f64) -> Result<()> {
    if !(d >= 0.0) {
        return Err(Error::NegativeDistance(d));
    }
    if !(margin > 0.0) {
        return Err(Error::NonPositiveMargin(margin));
    }
    Ok(())
}

/// Deterministic initialization. Weight matrices are drawn from
/// `N(0, 1/√fan_in)` (standard deviation), biases start at zero, Weighted
/// Euclidean weights from `N(1, 0.1)` clipped at zero, and the Mahalanobis
/// factor as identity plus `N(0, 0.01)` noise.
pub fn init_params(
    seed: u64,
    input_dim: usize,
    embedding_dim: usize,
    metric: MetricKind,
    variant: AggregatorVariant,
) -> (AggregatorParams, MetricParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = AggregatorParams::zeros(variant, input_dim, embedding_dim);
    let d = variant.embedding_dim(input_dim, embedding_dim);

    let fill = |m: &mut Array2<f64>, rng: &mut ChaCha8Rng| {
        if m.is_empty() {
            return;
        }
        let std = 1.0 / (m.ncols() as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        m.mapv_inplace(|_| normal.sample(rng));
    };
    fill(&mut params.w1, &mut rng);
    fill(&mut params.w2, &mut rng);

    let metric = match metric {
        MetricKind::Euclidean => MetricParams::Euclidean,
        MetricKind::WeightedEuclidean => {
            let normal = Normal::new(1.0, 0.1).expect("finite std");
            let mut w: Array1<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
            project_nonnegative_in_place(&mut w);
            MetricParams::WeightedEuclidean(w)
        }
        MetricKind::Mahalanobis => {
            let normal = Normal::new(0.0, 0.01).expect("finite std");
            let mut w = Array2::eye(d);
            w.mapv_inplace(|v| v + normal.sample(&mut rng));
            MetricParams::Mahalanobis(w)
        }
    };
    (params, metric)
}

pub fn init_model(input_dim: usize, config: &TrainConfig) -> Result<Model> {
    let (aggregator, metric) = init_params(config.seed, input_dim, config.embedding_dim, config.metric, config.variant);
    Model::new(config.variant, aggregator, metric, input_dim)
}

/// For every positive case, the `per_positive` negatives closest to the query
/// (ties to the smaller track id). Cases without negatives are skipped.
pub fn mine_hard_negatives(
    ids: &[&str],
    embeddings: &[Array1<f64>],
    positives: &[EvalCase],
    metric: &MetricParams,
    per_positive: usize,
) -> Result<Vec<PairSample>> {
    let mut out = Vec::with_capacity(positives.len() * per_positive);
    for case in positives {
        if case.negatives.is_empty() {
            warn!(
                "positive pair ({}, {}) has no negatives; skipped for mining",
                ids[case.query], ids[case.positive]
            );
            continue;
        }
        let query = embeddings[case.query].view();
        let mut scored = case
            .negatives
            .iter()
            .map(|&n| Ok((metric.distance(query, embeddings[n].view())?, n)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| ids[a.1].cmp(ids[b.1])));
        out.extend(scored.into_iter().take(per_positive).map(|(_, n)| PairSample {
            query: case.query,
            gallery: n,
            positive: false,
        }));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// First and second moment estimates of one parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamMoments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// One bias-corrected Adam update at step `t` (1-based). Moments are
/// allocated on first use.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut AdamMoments,
    t: u64,
    config: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidConfig("Adam step index starts at 1".into()));
    }
    if params.len() != grads.len() {
        return Err(Error::mismatch("gradient length", params.len(), grads.len()));
    }
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    if moments.first.is_empty() && moments.second.is_empty() {
        moments.first = vec![0.0; params.len()];
        moments.second = vec![0.0; params.len()];
    }
    if moments.first.len() != params.len() || moments.second.len() != params.len() {
        return Err(Error::mismatch("Adam moments", params.len(), moments.first.len()));
    }
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = 1.0 - config.beta1.powi(exp);
    let c2 = 1.0 - config.beta2.powi(exp);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.first.iter_mut())
        .zip(moments.second.iter_mut())
    {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}

/// Adam state for every trainable tensor of a [`Model`], in
/// [`Model::tensors_mut`] order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub moments: Vec<AdamMoments>,
}

/// Gradient of a scalar loss with respect to every model parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub metric: MetricParamGrad,
}

impl ModelGrads {
    pub fn zeros(model: &Model) -> Self {
        Self {
            w1: Array2::zeros(model.aggregator.w1.dim()),
            b1: Array1::zeros(model.aggregator.b1.len()),
            w2: Array2::zeros(model.aggregator.w2.dim()),
            metric: match &model.metric {
                MetricParams::Euclidean => MetricParamGrad::None,
                MetricParams::WeightedEuclidean(w) => MetricParamGrad::Weights(Array1::zeros(w.len())),
                MetricParams::Mahalanobis(w) => MetricParamGrad::Factor(Array2::zeros(w.dim())),
            },
        }
    }

    pub fn add_aggregator(&mut self, g: &AggregatorGrads, scale: f64) {
        self.w1.scaled_add(scale, &g.w1);
        self.b1.scaled_add(scale, &g.b1);
        self.w2.scaled_add(scale, &g.w2);
    }

    pub fn add_metric(&mut self, g: &MetricParamGrad, scale: f64) {
        match (&mut self.metric, g) {
            (MetricParamGrad::Weights(acc), MetricParamGrad::Weights(g)) => acc.scaled_add(scale, g),
            (MetricParamGrad::Factor(acc), MetricParamGrad::Factor(g)) => acc.scaled_add(scale, g),
            _ => {}
        }
    }

    pub fn add(&mut self, other: &ModelGrads, scale: f64) {
        self.w1.scaled_add(scale, &other.w1);
        self.b1.scaled_add(scale, &other.b1);
        self.w2.scaled_add(scale, &other.w2);
        self.add_metric(&other.metric, scale);
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
        ];
        match &self.metric {
            MetricParamGrad::None => {}
            MetricParamGrad::Weights(w) => out.push(w.as_slice().expect("standard layout")),
            MetricParamGrad::Factor(w) => out.push(w.as_slice().expect("standard layout")),
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl Model {
    /// Trainable tensors in a fixed order: `W1`, `b1`, `W2`, then the metric
    /// parameters when the metric has any.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let agg = &mut self.aggregator;
        let mut out = vec![
            agg.w1.as_slice_mut().expect("standard layout"),
            agg.b1.as_slice_mut().expect("standard layout"),
            agg.w2.as_slice_mut().expect("standard layout"),
        ];
        match &mut self.metric {
            MetricParams::Euclidean => {}
            MetricParams::WeightedEuclidean(w) => out.push(w.as_slice_mut().expect("standard layout")),
            MetricParams::Mahalanobis(w) => out.push(w.as_slice_mut().expect("standard layout")),
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairOutcome {
    pub loss: f64,
    pub distance: f64,
    pub grads: ModelGrads,
}

/// Contrastive loss of one pair through both Siamese branches, with its
/// gradient with respect to every shared parameter.
pub fn pair_loss_and_grads(
    model: &Model,
    query: &FeatureMatrix,
    gallery: &FeatureMatrix,
    positive: bool,
    margin: f64,
) -> Result<PairOutcome> {
    let (fu, tape_u) = model.embed_with_tape(query)?;
    let (fv, tape_v) = model.embed_with_tape(gallery)?;
    let distance = model.metric.distance(fu.view(), fv.view())?;
    let loss = contrastive_loss(distance, positive, margin)?;
    let dl_dd = contrastive_loss_grad(distance, positive, margin)?;

    let mut grads = ModelGrads::zeros(model);
    if dl_dd != 0.0 {
        let mg = metric_grad(fu.view(), fv.view(), &model.metric)?;
        let du = &mg.du * dl_dd;
        let dv = &mg.dv * dl_dd;
        let gu = aggregate_backward(&tape_u, query, &model.aggregator, du.view())?;
        let gv = aggregate_backward(&tape_v, gallery, &model.aggregator, dv.view())?;
        grads.add_aggregator(&gu, 1.0);
        grads.add_aggregator(&gv, 1.0);
        grads.add_metric(&mg.dparams, dl_dd);
    }
    Ok(PairOutcome { loss, distance, grads })
}

/// Per-epoch training summary, one CSV row each.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean contrastive loss over all pairs of the epoch.
    pub mean_loss: f64,
    pub mean_pos_d: f64,
    pub mean_neg_d: f64,
    /// Mean Mahalanobis penalty per optimizer step (zero for other metrics).
    pub mean_regularizer: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub optimizer: OptimizerState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochStats>,
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    // splitmix64 finalizer over seed and epoch.
    let mut z = seed ^ (epoch as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `config.epochs` epochs of Siamese training on `dataset`.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let input_dim = dataset.feature_dim().ok_or(Error::Empty("training dataset"))?;
    let positives = build_protocol(&dataset.entries)?;
    if positives.is_empty() {
        return Err(Error::Empty("no positive pairs in training dataset"));
    }
    let model = init_model(input_dim, config)?;
    train_from(model, dataset, &positives, config)
}

/// Training loop starting from an explicit model and positive set.
pub fn train_from(
    model: Model,
    dataset: &Dataset,
    positives: &[EvalCase],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_observed(model, dataset, positives, config, &mut |_, _, _| {})
}

/// [`train_from`], calling `on_step(epoch, step, model)` after every
/// optimizer step (and after the non-negativity projection).
pub fn train_observed(
    mut model: Model,
    dataset: &Dataset,
    positives: &[EvalCase],
    config: &TrainConfig,
    on_step: &mut dyn FnMut(usize, u64, &Model),
) -> Result<TrainOutcome> {
    config.validate()?;
    let adam = config.adam();
    let ids = dataset.track_ids();
    let mut optimizer = OptimizerState::default();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let embeddings = model.embed_all_values(&dataset.features, config.threads)?;
        let mut pairs: Vec<PairSample> = positives
            .iter()
            .map(|c| PairSample {
                query: c.query,
                gallery: c.positive,
                positive: true,
            })
            .collect();
        pairs.extend(mine_hard_negatives(
            &ids,
            &embeddings,
            positives,
            &model.metric,
            config.hard_negatives_per_positive,
        )?);
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch));
        pairs.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let (mut pos_d, mut pos_n, mut neg_d, mut neg_n) = (0.0, 0usize, 0.0, 0usize);
        let mut reg_sum = 0.0;
        let mut steps = 0usize;

        for (batch_index, batch) in pairs.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = ModelGrads::zeros(&model);
            for pair in batch {
                let out = pair_loss_and_grads(
                    &model,
                    &dataset.features[pair.query],
                    &dataset.features[pair.gallery],
                    pair.positive,
                    config.margin,
                )?;
                grads.add(&out.grads, scale);
                loss_sum += out.loss;
                if pair.positive {
                    pos_d += out.distance;
                    pos_n += 1;
                } else {
                    neg_d += out.distance;
                    neg_n += 1;
                }
            }
            if let MetricParams::Mahalanobis(w) = &model.metric {
                let (penalty, g) = mahalanobis_regularizer(w.view(), config.lambda)?;
                grads.add_metric(&MetricParamGrad::Factor(g), 1.0);
                reg_sum += penalty;
            }
            if !grads.is_finite() {
                return Err(Error::NonFiniteGradient {
                    epoch,
                    batch: batch_index,
                });
            }

            optimizer.step += 1;
            let grad_tensors = grads.tensors();
            let mut params = model.tensors_mut();
            optimizer.moments.resize_with(params.len(), AdamMoments::default);
            for ((p, g), m) in params.iter_mut().zip(&grad_tensors).zip(optimizer.moments.iter_mut()) {
                adam_step(p, g, m, optimizer.step, &adam)?;
            }
            if let MetricParams::WeightedEuclidean(w) = &mut model.metric {
                project_nonnegative_in_place(w);
            }
            on_step(epoch, optimizer.step, &model);
            steps += 1;
        }

        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / pairs.len() as f64,
            mean_pos_d: if pos_n > 0 { pos_d / pos_n as f64 } else { 0.0 },
            mean_neg_d: if neg_n > 0 { neg_d / neg_n as f64 } else { 0.0 },
            mean_regularizer: if steps > 0 { reg_sum / steps as f64 } else { 0.0 },
        };
        debug!(
            "epoch {epoch}: loss {:.6} pos_d {:.4} neg_d {:.4}",
            stats.mean_loss, stats.mean_pos_d, stats.mean_neg_d
        );
        history.push(stats);
    }

    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint {
            model,
            config: config.clone(),
            epoch: config.epochs,
            optimizer,
        },
        history,
    })
}

/// Writes `epoch,mean_loss,mean_pos_d,mean_neg_d,mean_regularizer` rows.
pub fn write_loss_csv(path: impl AsRef<Path>, history: &[EpochStats]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if history.is_empty() {
        w.write_record(["epoch", "mean_loss", "mean_pos_d", "mean_neg_d", "mean_regularizer"])?;
    }
    // Struct serialization emits the header row on the first record.
    for s in history {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
