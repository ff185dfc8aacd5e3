//! `TRKC` checkpoint container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TRKC"
//! 4       2     format version, u16 LE (currently 1)
//! 6       4     header length H, u32 LE
//! 10      H     UTF-8 JSON header (see below)
//! 10+H    ...   tensors, f32 LE, row-major, in header order
//! ```
//!
//! The header records the aggregator variant, metric kind, input dimension,
//! completed epochs, optimizer step, the training configuration, and a
//! `tensors` list of `{"name", "shape"}` entries. Tensor names are `w1`,
//! `b1`, `w2`, `metric` (when the metric has parameters), and
//! `adam.m.<name>` / `adam.v.<name>` for optimizer moments.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregatorParams, AggregatorVariant};
use crate::error::{Error, Result};
use crate::metrics::{MetricKind, MetricParams};
use crate::model::Model;
use crate::training::{AdamMoments, ModelCheckpoint, OptimizerState, TrainConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TRKC";
pub const CHECKPOINT_VERSION: u16 = 1;

const TENSOR_NAMES: [&str; 4] = ["w1", "b1", "w2", "metric"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub variant: AggregatorVariant,
    pub metric: MetricKind,
    pub input_dim: usize,
    pub epoch: usize,
    pub optimizer_step: u64,
    pub config: TrainConfig,
    pub tensors: Vec<TensorEntry>,
}

struct Tensor<'a> {
    name: String,
    shape: Vec<usize>,
    data: &'a [f64],
}

fn model_tensors(model: &Model) -> Vec<Tensor<'_>> {
    let agg = &model.aggregator;
    let mut out = vec![
        Tensor {
            name: "w1".into(),
            shape: agg.w1.shape().to_vec(),
            data: agg.w1.as_slice().expect("standard layout"),
        },
        Tensor {
            name: "b1".into(),
            shape: agg.b1.shape().to_vec(),
            data: agg.b1.as_slice().expect("standard layout"),
        },
        Tensor {
            name: "w2".into(),
            shape: agg.w2.shape().to_vec(),
            data: agg.w2.as_slice().expect("standard layout"),
        },
    ];
    match &model.metric {
        MetricParams::Euclidean => {}
        MetricParams::WeightedEuclidean(w) => out.push(Tensor {
            name: "metric".into(),
            shape: w.shape().to_vec(),
            data: w.as_slice().expect("standard layout"),
        }),
        MetricParams::Mahalanobis(w) => out.push(Tensor {
            name: "metric".into(),
            shape: w.shape().to_vec(),
            data: w.as_slice().expect("standard layout"),
        }),
    }
    out
}

pub fn encode_checkpoint(ckpt: &ModelCheckpoint) -> Result<Vec<u8>> {
    let mut tensors = model_tensors(&ckpt.model);
    let base: Vec<(String, Vec<usize>)> = tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
    for ((name, shape), moments) in base.iter().zip(&ckpt.optimizer.moments) {
        if moments.first.is_empty() {
            continue;
        }
        tensors.push(Tensor {
            name: format!("adam.m.{name}"),
            shape: shape.clone(),
            data: &moments.first,
        });
        tensors.push(Tensor {
            name: format!("adam.v.{name}"),
            shape: shape.clone(),
            data: &moments.second,
        });
    }

    let header = CheckpointHeader {
        variant: ckpt.model.variant,
        metric: ckpt.model.metric.kind(),
        input_dim: ckpt.model.input_dim,
        epoch: ckpt.epoch,
        optimizer_step: ckpt.optimizer.step,
        // Thread count never changes results; keep it out so checkpoints
        // compare equal across machines.
        config: TrainConfig {
            threads: TrainConfig::default().threads,
            ..ckpt.config.clone()
        },
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(header_bytes.len())
        .map_err(|_| Error::InvalidConfig("checkpoint header too large".into()))?;

    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for t in &tensors {
        for &v in t.data {
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(Error::NonFinite("checkpoint tensor outside f32 range"));
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelCheckpoint> {
    let truncated = |expected: usize| Error::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    let malformed = |message: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 10 {
        return Err(truncated(10));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().expect("length checked")) as usize;
    let payload_start = 10 + header_len;
    if bytes.len() < payload_start {
        return Err(truncated(payload_start));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[10..payload_start]).map_err(|e| malformed(e.to_string()))?;

    let expected: usize = payload_start + header.tensors.iter().map(|t| 4 * t.shape.iter().product::<usize>()).sum::<usize>();
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes {
            path: path.to_path_buf(),
            found: bytes.len() - expected,
        });
    }

    let mut offset = payload_start;
    let mut loaded: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let count: usize = t.shape.iter().product();
        let data = bytes[offset..offset + 4 * count]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect();
        offset += 4 * count;
        loaded.push((t.name.clone(), t.shape.clone(), data));
    }
    let take = |name: &str| loaded.iter().find(|(n, _, _)| n == name);

    let matrix = |name: &str| -> Result<Array2<f64>> {
        let (_, shape, data) = take(name).ok_or_else(|| malformed(format!("missing tensor {name}")))?;
        match shape.as_slice() {
            [r, c] => Ok(Array2::from_shape_vec((*r, *c), data.clone()).expect("length checked")),
            _ => Err(malformed(format!("tensor {name} must be 2-D, got {shape:?}"))),
        }
    };
    let vector = |name: &str| -> Result<Array1<f64>> {
        let (_, shape, data) = take(name).ok_or_else(|| malformed(format!("missing tensor {name}")))?;
        match shape.as_slice() {
            [_] => Ok(Array1::from(data.clone())),
            _ => Err(malformed(format!("tensor {name} must be 1-D, got {shape:?}"))),
        }
    };

    let aggregator = AggregatorParams {
        w1: matrix("w1")?,
        b1: vector("b1")?,
        w2: matrix("w2")?,
    };
    let metric = match header.metric {
        MetricKind::Euclidean => MetricParams::Euclidean,
        MetricKind::WeightedEuclidean => MetricParams::WeightedEuclidean(vector("metric")?),
        MetricKind::Mahalanobis => MetricParams::Mahalanobis(matrix("metric")?),
    };
    let model = Model::new(header.variant, aggregator, metric, header.input_dim)?;

    let n_params = if header.metric == MetricKind::Euclidean { 3 } else { 4 };
    let mut moments = Vec::new();
    for name in &TENSOR_NAMES[..n_params] {
        let first = take(&format!("adam.m.{name}")).map(|(_, _, d)| d.clone());
        let second = take(&format!("adam.v.{name}")).map(|(_, _, d)| d.clone());
        moments.push(AdamMoments {
            first: first.unwrap_or_default(),
            second: second.unwrap_or_default(),
        });
    }
    if moments.iter().all(|m| m.first.is_empty()) {
        moments.clear();
    }

    Ok(ModelCheckpoint {
        model,
        config: header.config,
        epoch: header.epoch,
        optimizer: OptimizerState {
            step: header.optimizer_step,
            moments,
        },
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &ModelCheckpoint) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(ckpt)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
