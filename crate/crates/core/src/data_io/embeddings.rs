//! Embedding table: JSON lines of `{"track_id", "embedding", "degenerate"}`.
//! Values are written in shortest round-trip form, so a table reloads
//! bit-exactly.

use std::fs;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub track_id: String,
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub degenerate: bool,
}

impl EmbeddingRow {
    pub fn to_array(&self) -> Array1<f64> {
        Array1::from(self.embedding.clone())
    }
}

pub fn write_embedding_table(path: impl AsRef<Path>, rows: &[EmbeddingRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_embedding_table(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<EmbeddingRow> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow = serde_json::from_str(line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = rows.first() {
            if first.embedding.len() != row.embedding.len() {
                return Err(Error::mismatch("embedding length", first.embedding.len(), row.embedding.len()));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
