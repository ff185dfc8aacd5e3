//! `TRKF` feature file.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TRKF"
//! 4       2     format version, u16 LE (currently 1)
//! 6       4     T (frames), u32 LE
//! 10      4     N (feature dimension), u32 LE
//! 14      4·T·N payload, f32 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::aggregation::FeatureMatrix;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"TRKF";
pub const FEATURE_VERSION: u16 = 1;
pub const FEATURE_HEADER_LEN: usize = 14;

/// Serializes at 32-bit precision. Values outside the `f32` range are
/// rejected rather than written as infinities.
pub fn encode_features(matrix: &FeatureMatrix) -> Result<Vec<u8>> {
    let (t, n) = (matrix.frames(), matrix.dim());
    let (t32, n32) = match (u32::try_from(t), u32::try_from(n)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(Error::InvalidConfig(format!("feature matrix {t}x{n} too large"))),
    };
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * t * n);
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&t32.to_le_bytes());
    out.extend_from_slice(&n32.to_le_bytes());
    for &v in matrix.view().iter() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::NonFinite("feature value outside f32 range"));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

/// Parses a feature file image; `path` is only used in error messages.
pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let truncated = |expected: usize| Error::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(FEATURE_HEADER_LEN));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if magic != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: FEATURE_MAGIC,
            found: magic,
        });
    }
    if bytes.len() < 6 {
        return Err(truncated(FEATURE_HEADER_LEN));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
            supported: FEATURE_VERSION,
        });
    }
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(truncated(FEATURE_HEADER_LEN));
    }
    let t = u32::from_le_bytes(bytes[6..10].try_into().expect("length checked")) as usize;
    let n = u32::from_le_bytes(bytes[10..14].try_into().expect("length checked")) as usize;
    if t == 0 || n == 0 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            message: format!("empty shape {t}x{n}"),
        });
    }
    let expected = t
        .checked_mul(n)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(FEATURE_HEADER_LEN))
        .ok_or_else(|| Error::MalformedHeader {
            path: path.to_path_buf(),
            message: format!("shape {t}x{n} overflows"),
        })?;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes {
            path: path.to_path_buf(),
            found: bytes.len() - expected,
        });
    }
    let values: Vec<f64> = bytes[FEATURE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect();
    let data = Array2::from_shape_vec((t, n), values).expect("length checked");
    FeatureMatrix::new(data)
}

pub fn write_features(path: impl AsRef<Path>, matrix: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_features(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}
