//! JSON-lines track manifest, one [`ManifestEntry`] object per line.
//!
//! ```json
//! {"track_id":"id0001_t0","identity":"id0001","session":"s0","camera":"left","video":"v0","features":"features/id0001_t0.trkf","frames":32}
//! ```
//!
//! Relative feature paths are resolved against the manifest's directory.
//! Blank lines are ignored.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Camera {
    Left,
    Center,
    Right,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub track_id: String,
    pub identity: String,
    pub session: String,
    pub camera: Camera,
    pub video: String,
    pub features: PathBuf,
    pub frames: usize,
    /// Source frame indices known to be corrupted. Only synthetic corpora
    /// carry this ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupted_frames: Option<Vec<usize>>,
}

/// Parses manifest text. Feature paths are resolved against `base_dir` but
/// their existence is not checked.
pub fn parse_manifest(text: &str, base_dir: &Path, path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: index + 1,
            message: e.to_string(),
        })?;
        if entry.track_id.is_empty() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                line: index + 1,
                message: "empty track_id".into(),
            });
        }
        if !seen.insert(entry.track_id.clone()) {
            return Err(Error::DuplicateTrackId(entry.track_id));
        }
        if entry.features.is_relative() {
            entry.features = base_dir.join(&entry.features);
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Reads and validates a manifest; every referenced feature file must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let entries = parse_manifest(&text, base, path)?;
    for entry in &entries {
        if !entry.features.is_file() {
            return Err(Error::MissingFeatureFile {
                track: entry.track_id.clone(),
                path: entry.features.clone(),
            });
        }
    }
    Ok(entries)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for entry in entries {
        serde_json::to_writer(&mut out, entry)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, features: PathBuf) -> ManifestEntry {
        ManifestEntry {
            track_id: id.into(),
            identity: "car7".into(),
            session: "s1".into(),
            camera: Camera::Right,
            video: "v3".into(),
            features,
            frames: 12,
            corrupted_frames: None,
        }
    }

    #[test]
    fn empty_manifest_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(&path, "").unwrap();
        assert!(load_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = [
            r#"{"track_id":"a","identity":"x","session":"s","camera":"left","video":"v","features":"f","frames":1}"#,
            r#"{"track_id":"a","identity":"y","session":"s","camera":"left","video":"v","features":"g","frames":1}"#,
        ]
        .join("\n");
        let err = parse_manifest(&text, Path::new("."), Path::new("m")).unwrap_err();
        assert!(matches!(&err, Error::DuplicateTrackId(id) if id == "a"));
        assert!(err.to_string().contains("\"a\""));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!(
            "{}\n\n{{not json\n",
            r#"{"track_id":"a","identity":"x","session":"s","camera":"left","video":"v","features":"f","frames":1}"#
        );
        let err = parse_manifest(&text, Path::new("."), Path::new("m")).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 3, .. }));
    }

    #[test]
    fn unknown_camera_is_rejected() {
        let text = r#"{"track_id":"a","identity":"x","session":"s","camera":"roof","video":"v","features":"f","frames":1}"#;
        assert!(parse_manifest(text, Path::new("."), Path::new("m")).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let text = r#"{"track_id":"a","identity":"x","session":"s","camera":"other","video":"v","features":"feat/a.trkf","frames":1}"#;
        let entries = parse_manifest(text, Path::new("/data/run"), Path::new("m")).unwrap();
        assert_eq!(entries[0].features, Path::new("/data/run/feat/a.trkf"));
    }

    #[test]
    fn missing_feature_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &[entry("a", dir.path().join("nope.trkf"))]).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::MissingFeatureFile { .. })));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let f1 = dir.path().join("a.trkf");
        let f2 = dir.path().join("b.trkf");
        fs::write(&f1, b"").unwrap();
        fs::write(&f2, b"").unwrap();
        let mut second = entry("b", f2);
        second.corrupted_frames = Some(vec![0, 4]);
        let entries = vec![entry("a", f1), second];
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &entries).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), entries);
    }
}
