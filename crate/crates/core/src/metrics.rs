//! Distances between track embeddings: plain Euclidean, Weighted Euclidean
//! with a learned non-negative weight per dimension, and Mahalanobis with a
//! learned factor `W` (`M = WWᵀ`).

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distances at or below this value have zero gradient.
pub const ZERO_DISTANCE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    WeightedEuclidean,
    Mahalanobis,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [
        MetricKind::Euclidean,
        MetricKind::WeightedEuclidean,
        MetricKind::Mahalanobis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Euclidean => "euclidean",
            Self::WeightedEuclidean => "weighted_euclidean",
            Self::Mahalanobis => "mahalanobis",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric {s:?}")))
    }
}

/// Learned state of a metric.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricParams {
    Euclidean,
    /// Per-dimension weights, all `≥ 0`.
    WeightedEuclidean(Array1<f64>),
    /// Factor `W` of `M = WWᵀ`, `D×K`.
    Mahalanobis(Array2<f64>),
}

/// Gradient of a distance with respect to the metric's own parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricParamGrad {
    None,
    Weights(Array1<f64>),
    Factor(Array2<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricGrad {
    pub du: Array1<f64>,
    pub dv: Array1<f64>,
    pub dparams: MetricParamGrad,
}

impl MetricParams {
    pub fn kind(&self) -> MetricKind {
        match self {
            Self::Euclidean => MetricKind::Euclidean,
            Self::WeightedEuclidean(_) => MetricKind::WeightedEuclidean,
            Self::Mahalanobis(_) => MetricKind::Mahalanobis,
        }
    }

    /// Embedding dimension the parameters are tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Euclidean => None,
            Self::WeightedEuclidean(w) => Some(w.len()),
            Self::Mahalanobis(w) => Some(w.nrows()),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if let Some(own) = self.dim() {
            if own != d {
                return Err(Error::mismatch("metric dimension", d, own));
            }
        }
        match self {
            Self::Euclidean => Ok(()),
            Self::WeightedEuclidean(w) => check_weights(w.view()),
            Self::Mahalanobis(w) => {
                if w.ncols() == 0 {
                    return Err(Error::Empty("Mahalanobis factor has no columns"));
                }
                if w.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::NonFinite("Mahalanobis factor"))
                }
            }
        }
    }

    pub fn distance(&self, u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
        match self {
            Self::Euclidean => euclidean(u, v),
            Self::WeightedEuclidean(w) => weighted_euclidean(u, v, w.view()),
            Self::Mahalanobis(w) => mahalanobis_factored(u, v, w.view()),
        }
    }

    /// Full matrix `M` of the equivalent Mahalanobis form.
    pub fn full_matrix(&self, d: usize) -> Array2<f64> {
        match self {
            Self::Euclidean => Array2::eye(d),
            Self::WeightedEuclidean(w) => Array2::from_diag(w),
            Self::Mahalanobis(w) => w.dot(&w.t()),
        }
    }
}

fn check_pair(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::mismatch("distance operands", u.len(), v.len()));
    }
    Ok(())
}

fn check_weights(w: ArrayView1<'_, f64>) -> Result<()> {
    for (index, &value) in w.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite("metric weights"));
        }
        if value < 0.0 {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    Ok(())
}

pub fn euclidean(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    check_pair(u, v)?;
    Ok(u.iter()
        .zip(v.iter())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

/// `√Σ wᵢ(uᵢ−vᵢ)²`, linear in the dimension.
pub fn weighted_euclidean(
    u: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
    w: ArrayView1<'_, f64>,
) -> Result<f64> {
    check_pair(u, v)?;
    if w.len() != u.len() {
        return Err(Error::mismatch("metric weights", u.len(), w.len()));
    }
    check_weights(w)?;
    Ok(u.iter()
        .zip(v.iter())
        .zip(w.iter())
        .map(|((a, b), wi)| {
            let d = a - b;
            wi * (d * d)
        })
        .sum::<f64>()
        .sqrt())
}

fn factor_projection(delta: &[f64], w: ArrayView2<'_, f64>) -> Array1<f64> {
    // g = Wᵀδ, accumulated along δ in index order.
    let mut g = Array1::zeros(w.ncols());
    for (row, &d) in w.rows().into_iter().zip(delta) {
        g.scaled_add(d, &row);
    }
    g
}

/// `√((u−v)ᵀ WWᵀ (u−v))`, evaluated as `‖Wᵀ(u−v)‖₂` so `WWᵀ` is never formed.
pub fn mahalanobis_factored(
    u: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
    w: ArrayView2<'_, f64>,
) -> Result<f64> {
    check_pair(u, v)?;
    if w.nrows() != u.len() {
        return Err(Error::mismatch("Mahalanobis factor rows", u.len(), w.nrows()));
    }
    let delta: Vec<f64> = u.iter().zip(v.iter()).map(|(a, b)| a - b).collect();
    let g = factor_projection(&delta, w);
    Ok(g.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Gradients of `d(u, v)` with respect to both operands and the metric
/// parameters. All gradients are zero when `d ≤ ZERO_DISTANCE_EPS`.
pub fn metric_grad(
    u: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
    params: &MetricParams,
) -> Result<MetricGrad> {
    let d = params.distance(u, v)?;
    let dim = u.len();
    let delta: Vec<f64> = u.iter().zip(v.iter()).map(|(a, b)| a - b).collect();
    let singular = d <= ZERO_DISTANCE_EPS;

    let (du, dparams) = match params {
        MetricParams::Euclidean => {
            let du = if singular {
                Array1::zeros(dim)
            } else {
                delta.iter().map(|x| x / d).collect()
            };
            (du, MetricParamGrad::None)
        }
        MetricParams::WeightedEuclidean(w) => {
            if singular {
                (Array1::zeros(dim), MetricParamGrad::Weights(Array1::zeros(dim)))
            } else {
                let du = delta.iter().zip(w.iter()).map(|(x, wi)| wi * x / d).collect();
                let dw = delta.iter().map(|x| x * x / (2.0 * d)).collect();
                (du, MetricParamGrad::Weights(dw))
            }
        }
        MetricParams::Mahalanobis(w) => {
            if singular {
                (Array1::zeros(dim), MetricParamGrad::Factor(Array2::zeros(w.dim())))
            } else {
                let g = factor_projection(&delta, w.view());
                let du = w.dot(&g) / d;
                let dw = Array2::from_shape_fn(w.dim(), |(i, k)| delta[i] * g[k] / d);
                (du, MetricParamGrad::Factor(dw))
            }
        }
    };
    let dv = -&du;
    Ok(MetricGrad { du, dv, dparams })
}

/// Clips negative weights to zero.
pub fn project_nonnegative(w: ArrayView1<'_, f64>) -> Array1<f64> {
    w.mapv(|x| x.max(0.0))
}

pub fn project_nonnegative_in_place(w: &mut Array1<f64>) {
    w.mapv_inplace(|x| x.max(0.0));
}

/// Orthogonality penalty `0.5λ‖WWᵀ − I‖²_F` and its gradient `2λ(WWᵀ − I)W`.
pub fn mahalanobis_regularizer(w: ArrayView2<'_, f64>, lambda: f64) -> Result<(f64, Array2<f64>)> {
    let (rows, cols) = w.dim();
    if rows != cols {
        return Err(Error::mismatch(
            "regularizer factor",
            "square matrix",
            format!("{rows}x{cols}"),
        ));
    }
    let mut residual = w.dot(&w.t());
    for i in 0..rows {
        residual[[i, i]] -= 1.0;
    }
    let penalty = 0.5 * lambda * residual.iter().map(|r| r * r).sum::<f64>();
    let grad = residual.dot(&w) * (2.0 * lambda);
    Ok((penalty, grad))
}

/// Share of absolute mass on the diagonal of a square matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagDominance {
    /// `tr(|M|) / Σ|M|`, in `[0, 1]`.
    pub ratio: f64,
    /// The matrix was entirely zero; `ratio` is reported as 0.
    pub all_zero: bool,
}

pub fn diag_dominance(m: ArrayView2<'_, f64>) -> Result<DiagDominance> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::mismatch("diag dominance", "square matrix", format!("{rows}x{cols}")));
    }
    let total: f64 = m.iter().map(|x| x.abs()).sum();
    if total == 0.0 {
        return Ok(DiagDominance {
            ratio: 0.0,
            all_zero: true,
        });
    }
    let diag: f64 = m.diag().iter().map(|x| x.abs()).sum();
    Ok(DiagDominance {
        ratio: diag / total,
        all_zero: false,
    })
}
