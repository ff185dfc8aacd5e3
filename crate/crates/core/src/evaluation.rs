//! Retrieval protocol and scores.
//!
//! Every ordered pair of same-identity tracks recorded in different videos is
//! one case: the first track is the query, the second the positive. The
//! gallery for a case is the positive plus every track in the positive's
//! video whose identity differs from the positive's. Ranking is by ascending
//! distance with ties going to the smaller track id, which makes results
//! independent of gallery input order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data_io::{Dataset, ManifestEntry};
use crate::error::{Error, Result};
use crate::metrics::MetricParams;
use crate::model::{map_in_order, Model};

/// Ranks reported as hit rates.
pub const HIT_RANKS: [usize; 4] = [1, 5, 10, 20];
/// Length of the reported matching curve.
pub const CMC_MAX_RANK: usize = 20;

/// One query with its single positive and the negatives it competes with.
/// Track references are indices into the manifest the protocol was built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalCase {
    pub query: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

pub fn build_protocol(entries: &[ManifestEntry]) -> Result<Vec<EvalCase>> {
    if entries.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    // Index tracks by video so each case's negatives are a filtered scan of
    // one video rather than of the whole manifest.
    let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        by_video.entry(e.video.as_str()).or_default().push(i);
    }
    let mut by_identity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        by_identity.entry(e.identity.as_str()).or_default().push(i);
    }

    let mut cases = Vec::new();
    for (q, query) in entries.iter().enumerate() {
        for &p in &by_identity[query.identity.as_str()] {
            let positive = &entries[p];
            if p == q || positive.video == query.video {
                continue;
            }
            let negatives = by_video[positive.video.as_str()]
                .iter()
                .copied()
                .filter(|&r| entries[r].identity != positive.identity)
                .collect();
            cases.push(EvalCase {
                query: q,
                positive: p,
                negatives,
            });
        }
    }
    Ok(cases)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ranked<K> {
    pub id: K,
    pub distance: f64,
}

/// Gallery ids sorted by ascending distance to `query`; equal distances are
/// ordered by id.
pub fn rank_gallery<K: Ord + Clone>(
    query: ArrayView1<'_, f64>,
    gallery: &[(K, ArrayView1<'_, f64>)],
    metric: &MetricParams,
) -> Result<Vec<Ranked<K>>> {
    if gallery.is_empty() {
        return Err(Error::Empty("gallery"));
    }
    let mut ranked = gallery
        .iter()
        .map(|(id, emb)| {
            Ok(Ranked {
                id: id.clone(),
                distance: metric.distance(query, *emb)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    Ok(ranked)
}

/// 1-based position of `positive` in a ranking.
pub fn positive_rank<K: PartialEq>(ranking: &[Ranked<K>], positive: &K) -> Result<usize> {
    ranking
        .iter()
        .position(|r| &r.id == positive)
        .map(|i| i + 1)
        .ok_or(Error::PositiveNotInGallery)
}

/// Average precision of a ranking with exactly one relevant item at `rank`.
pub fn average_precision(rank: usize) -> Result<f64> {
    if rank == 0 {
        return Err(Error::ZeroRank);
    }
    Ok(1.0 / rank as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmcSummary {
    /// `cmc[R-1]` = fraction of cases with rank ≤ R.
    pub cmc: Vec<f64>,
    pub hit_at: BTreeMap<usize, f64>,
}

pub fn cmc_and_hits(ranks: &[usize], max_rank: usize) -> Result<CmcSummary> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    if ranks.contains(&0) {
        return Err(Error::ZeroRank);
    }
    let mut counts = vec![0usize; max_rank];
    for &r in ranks {
        if r <= max_rank {
            counts[r - 1] += 1;
        }
    }
    let total = ranks.len() as f64;
    let mut running = 0;
    let cmc: Vec<f64> = counts
        .iter()
        .map(|c| {
            running += c;
            running as f64 / total
        })
        .collect();
    let hit_at = HIT_RANKS
        .iter()
        .filter(|&&r| r <= max_rank)
        .map(|&r| (r, cmc[r - 1]))
        .collect();
    Ok(CmcSummary { cmc, hit_at })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub query: String,
    pub positive: String,
    pub gallery_size: usize,
    pub rank: usize,
}

/// Report schema, serialized as JSON:
///
/// ```json
/// {"map":0.83,"hit_at":{"1":0.75,"5":0.93,"10":0.97,"20":1.0},
///  "cmc":[0.75, ... 20 values],"cases":[{"query":"a","positive":"b","gallery_size":50,"rank":1}]}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub hit_at: BTreeMap<usize, f64>,
    pub cmc: Vec<f64>,
    pub cases: Vec<CaseResult>,
}

impl EvalReport {
    pub fn hit(&self, rank: usize) -> f64 {
        self.hit_at.get(&rank).copied().unwrap_or(f64::NAN)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// `rank,fraction` rows, one per CMC rank.
    pub fn write_cmc_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["rank", "fraction"])?;
        for (i, v) in self.cmc.iter().enumerate() {
            w.write_record([(i + 1).to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Scores every case against a precomputed embedding table.
pub fn evaluate_embeddings(
    ids: &[&str],
    embeddings: &[Array1<f64>],
    cases: &[EvalCase],
    metric: &MetricParams,
    threads: usize,
) -> Result<EvalReport> {
    if ids.len() != embeddings.len() {
        return Err(Error::mismatch("embedding table", ids.len(), embeddings.len()));
    }
    if cases.is_empty() {
        return Err(Error::Empty("evaluation protocol"));
    }
    let results = map_in_order(cases, threads, |case| {
        let mut gallery = Vec::with_capacity(case.negatives.len() + 1);
        gallery.push((ids[case.positive], embeddings[case.positive].view()));
        gallery.extend(case.negatives.iter().map(|&n| (ids[n], embeddings[n].view())));
        let ranking = rank_gallery(embeddings[case.query].view(), &gallery, metric)?;
        Ok(CaseResult {
            query: ids[case.query].to_string(),
            positive: ids[case.positive].to_string(),
            gallery_size: gallery.len(),
            rank: positive_rank(&ranking, &ids[case.positive])?,
        })
    })?;

    let ranks: Vec<usize> = results.iter().map(|c| c.rank).collect();
    let map = ranks
        .iter()
        .map(|&r| average_precision(r))
        .sum::<Result<f64>>()?
        / ranks.len() as f64;
    let summary = cmc_and_hits(&ranks, CMC_MAX_RANK)?;
    Ok(EvalReport {
        map,
        hit_at: summary.hit_at,
        cmc: summary.cmc,
        cases: results,
    })
}

/// Embeds every track of `dataset` once and scores `protocol`.
pub fn evaluate(model: &Model, dataset: &Dataset, protocol: &[EvalCase], threads: usize) -> Result<EvalReport> {
    let embeddings = model.embed_all_values(&dataset.features, threads)?;
    evaluate_embeddings(&dataset.track_ids(), &embeddings, protocol, &model.metric, threads)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopK<K> {
    pub hits: Vec<Ranked<K>>,
    /// `k` exceeded the gallery size and the whole gallery was returned.
    pub truncated: bool,
}

pub fn search_topk<K: Ord + Clone>(
    query: ArrayView1<'_, f64>,
    gallery: &[(K, ArrayView1<'_, f64>)],
    metric: &MetricParams,
    k: usize,
) -> Result<TopK<K>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut hits = rank_gallery(query, gallery, metric)?;
    let truncated = k > hits.len();
    hits.truncate(k);
    Ok(TopK { hits, truncated })
}
