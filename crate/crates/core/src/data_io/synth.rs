//! Seeded synthetic track corpus.
//!
//! Every identity owns a random unit prototype. A clean frame is the
//! prototype plus isotropic Gaussian noise, renormalized to unit length. With
//! probability `corruption_prob` a frame is instead replaced by one vector of
//! a shared distractor pool (a simulated occluder), scaled to
//! `distractor_scale`. Track `k` of every identity is placed in video `k`, so
//! same-identity tracks always come from different videos and every video
//! holds one track per identity.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aggregation::FeatureMatrix;
use crate::data_io::features::write_features;
use crate::data_io::manifest::{write_manifest, Camera, ManifestEntry};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub identities: usize,
    pub tracks_per_identity: usize,
    pub frames_per_track: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub corruption_prob: f64,
    pub distractor_pool: usize,
    /// Norm of every distractor vector (clean frames have unit norm).
    pub distractor_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            identities: 50,
            tracks_per_identity: 4,
            frames_per_track: 32,
            dim: 64,
            noise_sigma: 0.1,
            corruption_prob: 0.3,
            distractor_pool: 16,
            distractor_scale: 3.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("identities", self.identities),
            ("tracks_per_identity", self.tracks_per_identity),
            ("frames_per_track", self.frames_per_track),
            ("dim", self.dim),
            ("distractor_pool", self.distractor_pool),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if !(0.0..=1.0).contains(&self.corruption_prob) {
            return Err(Error::InvalidConfig(format!(
                "corruption_prob must lie in [0, 1], got {}",
                self.corruption_prob
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        if !(self.distractor_scale > 0.0 && self.distractor_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "distractor_scale must be positive, got {}",
                self.distractor_scale
            )));
        }
        Ok(())
    }
}

/// Generated corpus held in memory. `entries[i].features` is the path
/// relative to the corpus directory that [`SynthCorpus::write`] uses.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub entries: Vec<ManifestEntry>,
    pub features: Vec<FeatureMatrix>,
}

impl SynthCorpus {
    /// Writes `manifest.jsonl` and `features/*.trkf` under `dir` and returns
    /// the manifest path.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let feature_dir = dir.join("features");
        fs::create_dir_all(&feature_dir).map_err(|e| Error::io(&feature_dir, e))?;
        for (entry, matrix) in self.entries.iter().zip(&self.features) {
            write_features(dir.join(&entry.features), matrix)?;
        }
        let manifest = dir.join("manifest.jsonl");
        write_manifest(&manifest, &self.entries)?;
        Ok(manifest)
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

const CAMERAS: [Camera; 3] = [Camera::Left, Camera::Center, Camera::Right];

pub fn synth_generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.dim;

    let prototypes: Vec<Array1<f64>> = (0..config.identities).map(|_| unit_gaussian(&mut rng, n)).collect();
    let pool: Vec<Array1<f64>> = (0..config.distractor_pool)
        .map(|_| unit_gaussian(&mut rng, n) * config.distractor_scale)
        .collect();

    let mut entries = Vec::with_capacity(config.identities * config.tracks_per_identity);
    let mut features = Vec::with_capacity(entries.capacity());
    for (i, proto) in prototypes.iter().enumerate() {
        let identity = format!("id{i:04}");
        for k in 0..config.tracks_per_identity {
            let track_id = format!("{identity}_t{k}");
            let mut data = Array2::zeros((config.frames_per_track, n));
            let mut corrupted = Vec::new();
            for (frame, mut row) in data.rows_mut().into_iter().enumerate() {
                if rng.random::<f64>() < config.corruption_prob {
                    let d = rng.random_range(0..pool.len());
                    row.assign(&pool[d]);
                    corrupted.push(frame);
                } else {
                    let noisy: Array1<f64> = proto
                        .iter()
                        .map(|&p| p + config.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let norm = noisy.dot(&noisy).sqrt();
                    if norm > 0.0 {
                        row.assign(&(noisy / norm));
                    } else {
                        row.assign(proto);
                    }
                }
            }
            entries.push(ManifestEntry {
                features: PathBuf::from("features").join(format!("{track_id}.trkf")),
                track_id,
                identity: identity.clone(),
                session: "s0".into(),
                camera: CAMERAS[k % CAMERAS.len()],
                video: format!("v{k}"),
                frames: config.frames_per_track,
                corrupted_frames: Some(corrupted),
            });
            features.push(FeatureMatrix::new(data)?);
        }
    }
    Ok(SynthCorpus { entries, features })
}
