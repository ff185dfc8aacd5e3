//! Temporal aggregation network: maps a `T×N` feature matrix of one track to a
//! single unit-norm embedding.
//!
//! The full network projects every frame with `tanh(W1·x + b1)`, appends the
//! track mean to each projected frame, turns those rows into per-component
//! logits with `W2`, normalizes the logits along time (one softmax per output
//! column), and pools the projected frames with the resulting weights before
//! L2 normalization. The ablation variants drop the projection, the attention
//! weights, or both.
//!
//! All arithmetic is `f64`. Dot products accumulate sequentially along the
//! row, and sums over frames accumulate in frame order, so results are
//! reproducible bit-for-bit on a single thread.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-frame features of one track, `T` rows of dimension `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Empty("feature matrix has no frames"));
        }
        if data.ncols() == 0 {
            return Err(Error::Empty("feature matrix has zero feature dimension"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        // Row views are sliced as contiguous memory throughout.
        let data = data.as_standard_layout().into_owned();
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        if t == 0 {
            return Err(Error::Empty("feature matrix has no frames"));
        }
        let n = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::mismatch("feature rows", n, bad.len()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((t, n), flat).expect("shape checked above");
        Self::new(data)
    }

    /// Number of frames `T`.
    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    /// Feature dimension `N`.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// New matrix made of the given source rows, in the given order.
    pub fn select_frames(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("frame selection"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.frames()) {
            return Err(Error::mismatch(
                "frame selection",
                format!("index < {}", self.frames()),
                bad,
            ));
        }
        Ok(Self {
            data: self.data.select(Axis(0), indices),
        })
    }
}

/// Which parts of the network are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorVariant {
    /// Projection, mean augmentation, column softmax and weighted pooling.
    Full,
    /// Unit-normalized time mean of the raw features. No parameters.
    Avg,
    /// Projection followed by uniform pooling.
    ProjectOnly,
    /// Attention weights computed and applied on raw features (`W2` is `N×2N`).
    AttentionOnly,
}

impl AggregatorVariant {
    pub const ALL: [AggregatorVariant; 4] = [
        AggregatorVariant::Full,
        AggregatorVariant::Avg,
        AggregatorVariant::ProjectOnly,
        AggregatorVariant::AttentionOnly,
    ];

    pub fn projects(self) -> bool {
        matches!(self, Self::Full | Self::ProjectOnly)
    }

    pub fn attends(self) -> bool {
        matches!(self, Self::Full | Self::AttentionOnly)
    }

    /// Dimension of the produced embedding for input dimension `n` and
    /// requested projection size `m`.
    pub fn embedding_dim(self, n: usize, m: usize) -> usize {
        if self.projects() {
            m
        } else {
            n
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Avg => "avg",
            Self::ProjectOnly => "project_only",
            Self::AttentionOnly => "attention_only",
        }
    }
}

impl fmt::Display for AggregatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregatorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown aggregator variant {s:?}")))
    }
}

/// Weights of the aggregation network.
///
/// Parts a variant does not use are stored with zero rows: `w1`/`b1` are
/// `0×N`/`0` for [`AggregatorVariant::Avg`] and
/// [`AggregatorVariant::AttentionOnly`], and `w2` is `0×0` for the variants
/// without attention.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorParams {
    /// `M×N` projection.
    pub w1: Array2<f64>,
    /// Length-`M` projection bias.
    pub b1: Array1<f64>,
    /// `M×2M` attention logits layer (no bias).
    pub w2: Array2<f64>,
}

impl AggregatorParams {
    /// All-zero parameters shaped for `variant` with input dimension `n` and
    /// projection size `m`.
    pub fn zeros(variant: AggregatorVariant, n: usize, m: usize) -> Self {
        let m_proj = if variant.projects() { m } else { 0 };
        let d = variant.embedding_dim(n, m);
        let d_att = if variant.attends() { d } else { 0 };
        Self {
            w1: Array2::zeros((m_proj, n)),
            b1: Array1::zeros(m_proj),
            w2: Array2::zeros((d_att, 2 * d_att)),
        }
    }

    /// Checks shapes and finiteness for `variant` on `n`-dimensional input
    /// and returns the embedding dimension.
    pub fn validate(&self, variant: AggregatorVariant, n: usize) -> Result<usize> {
        let d = if variant.projects() {
            let m = self.w1.nrows();
            if m == 0 {
                return Err(Error::Empty("projection has zero output dimension"));
            }
            if self.w1.ncols() != n {
                return Err(Error::mismatch("W1 columns", n, self.w1.ncols()));
            }
            if self.b1.len() != m {
                return Err(Error::mismatch("b1 length", m, self.b1.len()));
            }
            m
        } else {
            n
        };
        if variant.attends() && self.w2.dim() != (d, 2 * d) {
            return Err(Error::mismatch(
                "W2 shape",
                format!("{}x{}", d, 2 * d),
                format!("{}x{}", self.w2.nrows(), self.w2.ncols()),
            ));
        }
        let finite = self
            .w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("aggregator parameters"));
        }
        Ok(d)
    }
}

/// Unit-norm track embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackEmbedding {
    pub values: Array1<f64>,
    /// Set when the pooled vector was exactly zero; `values` is then all zeros.
    pub degenerate: bool,
}

impl TrackEmbedding {
    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Intermediates of one forward pass, consumed by [`aggregate_backward`].
#[derive(Clone, Debug)]
pub struct AggregatorTape {
    pub variant: AggregatorVariant,
    /// Pooled features: projected frames, or the raw input when the variant
    /// does not project. `T×D`.
    pub y: Array2<f64>,
    /// Mean-augmented features `T×2D` (attention variants only).
    pub y_aug: Option<Array2<f64>>,
    /// Attention logits `T×D` (attention variants only).
    pub logits: Option<Array2<f64>>,
    /// Per-element temporal weights `T×D`; uniform `1/T` without attention.
    pub weights: Array2<f64>,
    /// `y ∘ weights`.
    pub weighted: Array2<f64>,
    /// Sum of `weighted` over frames, before normalization.
    pub pooled: Array1<f64>,
    /// `‖pooled‖₂`.
    pub norm: f64,
}

/// Gradients of `df · f` with respect to every input of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub x: Array2<f64>,
}

fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `Y[τ] = tanh(W1·x_τ + b1)`.
pub fn project_frames(x: &FeatureMatrix, params: &AggregatorParams) -> Result<Array2<f64>> {
    let (m, n) = params.w1.dim();
    if m == 0 {
        return Err(Error::Empty("projection has zero output dimension"));
    }
    if n != x.dim() {
        return Err(Error::mismatch("W1 columns", x.dim(), n));
    }
    if params.b1.len() != m {
        return Err(Error::mismatch("b1 length", m, params.b1.len()));
    }
    if !params.w1.iter().chain(params.b1.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("projection parameters"));
    }
    let mut y = x.view().dot(&params.w1.t());
    y += &params.b1;
    y.mapv_inplace(f64::tanh);
    Ok(y)
}

/// Appends the time mean of `y` to every row: `T×D → T×2D`.
pub fn augment_with_mean(y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (t, d) = y.dim();
    if t == 0 || d == 0 {
        return Err(Error::Empty("matrix to augment"));
    }
    let mean = column_mean(y);
    let mut out = Array2::zeros((t, 2 * d));
    out.slice_mut(s![.., ..d]).assign(&y);
    for mut row in out.axis_iter_mut(Axis(0)) {
        row.slice_mut(s![d..]).assign(&mean);
    }
    Ok(out)
}

/// `A[τ] = W2·y'_τ`, no bias.
pub fn attention_logits(y_aug: ArrayView2<'_, f64>, w2: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let width = y_aug.ncols();
    let (d, w2_cols) = w2.dim();
    if w2_cols != width {
        return Err(Error::mismatch("W2 columns", width, w2_cols));
    }
    if width != 2 * d {
        return Err(Error::mismatch("augmented width", 2 * d, width));
    }
    Ok(y_aug.dot(&w2.t()))
}

/// Softmax along time, independently for every column.
pub fn column_softmax(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.nrows() == 0 {
        return Err(Error::Empty("softmax input"));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let mut e = a.to_owned();
    for mut col in e.axis_iter_mut(Axis(1)) {
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        col.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = col.iter().sum();
        col.mapv_inplace(|v| v / sum);
    }
    Ok(e)
}

/// `f = s/‖s‖₂` with `s = Σ_τ y_τ ∘ e_τ`.
pub fn pool_and_normalize(y: ArrayView2<'_, f64>, e: ArrayView2<'_, f64>) -> Result<TrackEmbedding> {
    let (weighted, pooled) = pool(y, e)?;
    drop(weighted);
    Ok(normalize(pooled).0)
}

fn pool(y: ArrayView2<'_, f64>, e: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    if y.dim() != e.dim() {
        return Err(Error::mismatch(
            "pooling weights",
            format!("{:?}", y.dim()),
            format!("{:?}", e.dim()),
        ));
    }
    if y.nrows() == 0 {
        return Err(Error::Empty("pooling input"));
    }
    let weighted = &y * &e;
    let mut pooled = Array1::zeros(y.ncols());
    for row in weighted.axis_iter(Axis(0)) {
        pooled += &row;
    }
    Ok((weighted, pooled))
}

fn normalize(pooled: Array1<f64>) -> (TrackEmbedding, f64) {
    let norm = pooled.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let dim = pooled.len();
        return (
            TrackEmbedding {
                values: Array1::zeros(dim),
                degenerate: true,
            },
            0.0,
        );
    }
    (
        TrackEmbedding {
            values: pooled / norm,
            degenerate: false,
        },
        norm,
    )
}

fn column_mean(y: ArrayView2<'_, f64>) -> Array1<f64> {
    let mut sum = Array1::zeros(y.ncols());
    for row in y.axis_iter(Axis(0)) {
        sum += &row;
    }
    sum / y.nrows() as f64
}

/// Forward pass of the selected variant.
pub fn aggregate(
    x: &FeatureMatrix,
    params: &AggregatorParams,
    variant: AggregatorVariant,
) -> Result<(TrackEmbedding, AggregatorTape)> {
    params.validate(variant, x.dim())?;
    let t = x.frames();

    let y = if variant.projects() {
        project_frames(x, params)?
    } else {
        x.view().to_owned()
    };

    let (y_aug, logits, weights) = if variant.attends() {
        let y_aug = augment_with_mean(y.view())?;
        let logits = attention_logits(y_aug.view(), params.w2.view())?;
        let weights = column_softmax(logits.view())?;
        (Some(y_aug), Some(logits), weights)
    } else {
        (None, None, Array2::from_elem(y.dim(), 1.0 / t as f64))
    };

    let (weighted, pooled) = pool(y.view(), weights.view())?;
    let (embedding, norm) = normalize(pooled.clone());
    let tape = AggregatorTape {
        variant,
        y,
        y_aug,
        logits,
        weights,
        weighted,
        pooled,
        norm,
    };
    Ok((embedding, tape))
}

/// Reverse pass: given `df = ∂L/∂f`, returns `∂L/∂W1`, `∂L/∂b1`, `∂L/∂W2`
/// and `∂L/∂X`. A degenerate (zero) embedding yields zero gradients.
pub fn aggregate_backward(
    tape: &AggregatorTape,
    x: &FeatureMatrix,
    params: &AggregatorParams,
    df: ArrayView1<'_, f64>,
) -> Result<AggregatorGrads> {
    let variant = tape.variant;
    let d = params.validate(variant, x.dim())?;
    let (t, n) = (x.frames(), x.dim());
    if tape.y.dim() != (t, d) || tape.weights.dim() != (t, d) {
        return Err(Error::mismatch(
            "tape shape",
            format!("({t}, {d})"),
            format!("{:?}", tape.y.dim()),
        ));
    }
    if df.len() != d {
        return Err(Error::mismatch("embedding gradient length", d, df.len()));
    }

    let mut grads = AggregatorGrads {
        w1: Array2::zeros(params.w1.dim()),
        b1: Array1::zeros(params.b1.len()),
        w2: Array2::zeros(params.w2.dim()),
        x: Array2::zeros((t, n)),
    };
    if tape.norm == 0.0 {
        return Ok(grads);
    }

    // f = s/‖s‖  ⇒  ds = (df − f (f·df)) / ‖s‖
    let f = &tape.pooled / tape.norm;
    let f_dot_df = dot(f.view(), df);
    let d_pooled = (&df - &(&f * f_dot_df)) / tape.norm;

    // s_j = Σ_τ y_τj e_τj
    let mut dy = &tape.weights * &d_pooled;

    if variant.attends() {
        let y_aug = tape.y_aug.as_ref().expect("attention tape carries y_aug");
        let de = &tape.y * &d_pooled;

        // Column softmax Jacobian: da_τj = e_τj (de_τj − Σ_i e_ij de_ij)
        let mut da = Array2::zeros((t, d));
        for j in 0..d {
            let e_col = tape.weights.column(j);
            let de_col = de.column(j);
            let inner = dot(e_col, de_col);
            for tau in 0..t {
                da[[tau, j]] = e_col[tau] * (de_col[tau] - inner);
            }
        }

        // a_τ = W2 y'_τ
        grads.w2 = da.t().dot(y_aug);
        let dy_aug = da.dot(&params.w2);

        // y'_τ = [y_τ ; mean(y)]
        let mut d_mean = Array1::<f64>::zeros(d);
        for row in dy_aug.axis_iter(Axis(0)) {
            d_mean += &row.slice(s![d..]);
        }
        d_mean /= t as f64;
        dy += &dy_aug.slice(s![.., ..d]);
        for mut row in dy.axis_iter_mut(Axis(0)) {
            row += &d_mean;
        }
    }

    if variant.projects() {
        // y = tanh(u), u = W1 x + b1
        let du = &dy * &tape.y.mapv(|v| 1.0 - v * v);
        grads.b1 = du.sum_axis(Axis(0));
        grads.w1 = du.t().dot(&x.view());
        grads.x = du.dot(&params.w1);
    } else {
        grads.x = dy;
    }
    Ok(grads)
}

/// Per-frame weight summary of a weight matrix `E` (`T×M`, columns summing
/// to one).
#[derive(Clone, Debug, PartialEq)]
pub struct FrameWeightStats {
    /// `(1/M) Σ_j e_τj` for every frame; sums to one.
    pub mean_weights: Vec<f64>,
    /// Mean over frames of `std(e_τ) / mean(e_τ)` (population std). Frames
    /// whose weights are all zero contribute zero.
    pub mean_relative_std: f64,
}

pub fn frame_weight_stats(e: ArrayView2<'_, f64>) -> Result<FrameWeightStats> {
    let (t, m) = e.dim();
    if t == 0 || m == 0 {
        return Err(Error::Empty("weight matrix"));
    }
    let mut mean_weights = Vec::with_capacity(t);
    let mut rel_std_sum = 0.0;
    for row in e.axis_iter(Axis(0)) {
        let mean = row.sum() / m as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        if mean != 0.0 {
            rel_std_sum += var.sqrt() / mean;
        }
        mean_weights.push(mean);
    }
    Ok(FrameWeightStats {
        mean_weights,
        mean_relative_std: rel_std_sum / t as f64,
    })
}
