use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ndarray::{Array1, ArrayView1};
use serde::Serialize;
use serde_json::json;
use trackagg::checkpoint::{read_checkpoint, write_checkpoint};
use trackagg::data_io::{read_embedding_table, synth_generate, write_embedding_table, EmbeddingRow};
use trackagg::diagnostics::{frame_weight_summary, histogram, metric_diag_dominance, CorruptionSplit, HistogramBin};
use trackagg::evaluation::search_topk;
use trackagg::training::write_loss_csv;
use trackagg::{build_protocol, evaluate, train, Dataset, MetricParams, Model, ModelCheckpoint, SynthConfig, TrainConfig};

use crate::args::{Command, DiagArgs, ModelRunArgs, SamplingArgs, SearchArgs, SynthArgs, TrainArgs};
use crate::config::{self, prepare_out, require_file, write_json, write_toml};
use crate::error::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.trkc";
pub const LOSS_FILE: &str = "loss.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CMC_FILE: &str = "cmc.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const SEARCH_FILE: &str = "search.tsv";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Search(a) => cmd_search(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Diag(a) => cmd_diag(a),
    }
}

/// Contents of `summary.json`. Holds no timestamps so reruns compare equal.
#[derive(Debug, Serialize)]
struct RunSummary {
    command: &'static str,
    inputs: BTreeMap<&'static str, String>,
    outputs: Vec<&'static str>,
    results: serde_json::Value,
}

impl RunSummary {
    fn write(&self, out: &Path) -> Result<(), CliError> {
        write_json(&out.join(SUMMARY_FILE), self)
    }
}

fn shown(p: &Path) -> String {
    p.display().to_string()
}

fn threads_or_default(threads: Option<usize>) -> Result<usize, CliError> {
    match threads {
        Some(0) => Err(CliError::usage(anyhow!("--threads must be at least 1"))),
        Some(t) => Ok(t),
        None => Ok(1),
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let file = config::load(a.config.as_deref())?;
    let mut cfg = file.train;
    a.overrides.apply(&mut cfg);
    threads_or_default(Some(cfg.threads))?;
    cfg.validate()?;
    require_file(&a.manifest, "manifest")?;
    let dataset = Dataset::load(&a.manifest, cfg.time_samples, cfg.seed)?;
    let out = prepare_out(&a.out)?;

    log::info!("training {} / {} on {} tracks", cfg.variant, cfg.metric.as_str(), dataset.len());
    let outcome = train(&dataset, &cfg)?;
    write_checkpoint(out.join(CHECKPOINT_FILE), &outcome.checkpoint)?;
    write_loss_csv(out.join(LOSS_FILE), &outcome.history)?;

    let mut effective = cfg.clone();
    effective.learning_rate = Some(cfg.effective_learning_rate());
    write_toml(&out.join(CONFIG_FILE), &json!({ "train": effective }))?;

    let last = outcome.history.last();
    RunSummary {
        command: "train",
        inputs: BTreeMap::from([("manifest", shown(&a.manifest))]),
        outputs: vec![CHECKPOINT_FILE, LOSS_FILE, CONFIG_FILE],
        results: json!({
            "tracks": dataset.len(),
            "epochs": outcome.checkpoint.epoch,
            "optimizer_steps": outcome.checkpoint.optimizer.step,
            "first_epoch_loss": outcome.history.first().map(|s| s.mean_loss),
            "final_epoch_loss": last.map(|s| s.mean_loss),
        }),
    }
    .write(&out)
}

/// Checkpoint, manifest sampled as at training time unless overridden, and
/// the run directory.
struct ModelRun {
    checkpoint: ModelCheckpoint,
    dataset: Dataset,
    time_samples: usize,
    seed: u64,
    threads: usize,
    out: PathBuf,
}

fn sampling_settings(s: &SamplingArgs, trained: &TrainConfig) -> Result<(usize, u64, usize), CliError> {
    let t = s.time_samples.unwrap_or(trained.time_samples);
    if t == 0 {
        return Err(CliError::usage(anyhow!("--time-samples must be at least 1")));
    }
    Ok((t, s.seed.unwrap_or(trained.seed), threads_or_default(s.threads)?))
}

fn open_model_run(a: &ModelRunArgs) -> Result<ModelRun, CliError> {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.manifest, "manifest")?;
    let checkpoint = read_checkpoint(&a.checkpoint)?;
    let (time_samples, seed, threads) = sampling_settings(&a.sampling, &checkpoint.config)?;
    let dataset = Dataset::load(&a.manifest, time_samples, seed)?;
    if let Some(n) = dataset.feature_dim() {
        if n != checkpoint.model.input_dim {
            return Err(CliError::usage(anyhow!(
                "feature dimension {n} in {} does not match checkpoint input dimension {}",
                a.manifest.display(),
                checkpoint.model.input_dim
            )));
        }
    }
    let out = prepare_out(&a.out)?;
    Ok(ModelRun {
        checkpoint,
        dataset,
        time_samples,
        seed,
        threads,
        out,
    })
}

impl ModelRun {
    fn model(&self) -> &Model {
        &self.checkpoint.model
    }

    fn write_config(&self, section: &str, extra: serde_json::Value) -> Result<(), CliError> {
        let mut table = json!({
            "time_samples": self.time_samples,
            "seed": self.seed,
            "threads": self.threads,
        });
        if let (Some(t), serde_json::Value::Object(extra)) = (table.as_object_mut(), extra) {
            t.extend(extra);
        }
        write_toml(&self.out.join(CONFIG_FILE), &json!({ section: table }))
    }
}

fn run_inputs(a: &ModelRunArgs) -> BTreeMap<&'static str, String> {
    BTreeMap::from([("checkpoint", shown(&a.checkpoint)), ("manifest", shown(&a.manifest))])
}

pub fn cmd_embed(a: &ModelRunArgs) -> Result<(), CliError> {
    let run = open_model_run(a)?;
    let embeddings = run.model().embed_all(&run.dataset.features, run.threads)?;
    let rows: Vec<EmbeddingRow> = run
        .dataset
        .entries
        .iter()
        .zip(embeddings)
        .map(|(e, f)| EmbeddingRow {
            track_id: e.track_id.clone(),
            embedding: f.values.to_vec(),
            degenerate: f.degenerate,
        })
        .collect();
    let degenerate = rows.iter().filter(|r| r.degenerate).count();
    if degenerate > 0 {
        log::warn!("{degenerate} track(s) pooled to a zero vector; their embeddings are all zeros");
    }
    write_embedding_table(run.out.join(EMBEDDINGS_FILE), &rows)?;
    run.write_config("embed", json!({}))?;
    RunSummary {
        command: "embed",
        inputs: run_inputs(a),
        outputs: vec![EMBEDDINGS_FILE, CONFIG_FILE],
        results: json!({
            "tracks": rows.len(),
            "embedding_dim": run.model().embedding_dim(),
            "degenerate": degenerate,
        }),
    }
    .write(&run.out)
}

pub fn cmd_eval(a: &ModelRunArgs) -> Result<(), CliError> {
    let run = open_model_run(a)?;
    let protocol = build_protocol(&run.dataset.entries)?;
    if protocol.is_empty() {
        return Err(CliError::usage(anyhow!(
            "no evaluation cases in {}: the protocol needs an identity with tracks in at least two videos",
            a.manifest.display()
        )));
    }
    let report = evaluate(run.model(), &run.dataset, &protocol, run.threads)?;
    report.write_json(run.out.join(REPORT_FILE))?;
    report.write_cmc_csv(run.out.join(CMC_FILE))?;
    run.write_config("eval", json!({}))?;

    let mut line = format!("mAP {:.4}", report.map);
    for (r, h) in &report.hit_at {
        let _ = write!(line, "  Hit@{r} {:.4}", h);
    }
    println!("{line}");

    RunSummary {
        command: "eval",
        inputs: run_inputs(a),
        outputs: vec![REPORT_FILE, CMC_FILE, CONFIG_FILE],
        results: json!({
            "cases": report.cases.len(),
            "map": report.map,
            "hit_at": report.hit_at,
        }),
    }
    .write(&run.out)
}

pub fn cmd_search(a: &SearchArgs) -> Result<(), CliError> {
    require_file(&a.embeddings, "embedding table")?;
    if a.k == 0 {
        return Err(CliError::usage(anyhow!("--k must be at least 1")));
    }
    let rows = read_embedding_table(&a.embeddings)?;
    let metric = match &a.checkpoint {
        Some(p) => {
            require_file(p, "checkpoint")?;
            read_checkpoint(p)?.model.metric
        }
        None => MetricParams::Euclidean,
    };
    let query = rows
        .iter()
        .find(|r| r.track_id == a.query)
        .ok_or_else(|| CliError::usage(anyhow!("unknown query track id {:?} in {}", a.query, a.embeddings.display())))?;
    metric.validate(query.embedding.len())?;

    let vectors: Vec<Array1<f64>> = rows.iter().map(EmbeddingRow::to_array).collect();
    let gallery: Vec<(&str, ArrayView1<'_, f64>)> =
        rows.iter().zip(&vectors).map(|(r, v)| (r.track_id.as_str(), v.view())).collect();
    let top = search_topk(query.to_array().view(), &gallery, &metric, a.k)?;
    if top.truncated {
        eprintln!(
            "warning: k = {} exceeds the gallery size {}; listing every track",
            a.k,
            gallery.len()
        );
    }

    let mut listing = String::new();
    for (i, hit) in top.hits.iter().enumerate() {
        let _ = writeln!(listing, "{}\t{}\t{}", i + 1, hit.id, hit.distance);
    }
    print!("{listing}");

    if let Some(dir) = &a.out {
        let out = prepare_out(dir)?;
        fs::write(out.join(SEARCH_FILE), &listing)
            .with_context(|| format!("writing {}", out.join(SEARCH_FILE).display()))
            .map_err(CliError::runtime)?;
        write_toml(
            &out.join(CONFIG_FILE),
            &json!({ "search": { "query": a.query, "k": a.k, "metric": metric.kind() } }),
        )?;
        let mut inputs = BTreeMap::from([("embeddings", shown(&a.embeddings))]);
        if let Some(p) = &a.checkpoint {
            inputs.insert("checkpoint", shown(p));
        }
        RunSummary {
            command: "search",
            inputs,
            outputs: vec![SEARCH_FILE, CONFIG_FILE],
            results: json!({ "listed": top.hits.len(), "truncated": top.truncated }),
        }
        .write(&out)?;
    }
    Ok(())
}

fn synth_config(a: &SynthArgs) -> Result<SynthConfig, CliError> {
    let mut cfg = config::load(a.config.as_deref())?.synth;
    let pairs: [(&mut usize, Option<usize>); 4] = [
        (&mut cfg.identities, a.identities),
        (&mut cfg.tracks_per_identity, a.tracks_per_identity),
        (&mut cfg.frames_per_track, a.frames),
        (&mut cfg.dim, a.dim),
    ];
    for (slot, v) in pairs {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(v) = a.distractors {
        cfg.distractor_pool = v;
    }
    if let Some(v) = a.sigma {
        cfg.noise_sigma = v;
    }
    if let Some(v) = a.corruption {
        cfg.corruption_prob = v;
    }
    if let Some(v) = a.distractor_scale {
        cfg.distractor_scale = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let cfg = synth_config(a)?;
    let corpus = synth_generate(&cfg)?;
    let out = prepare_out(&a.out)?;
    let manifest = corpus.write(&out)?;
    write_toml(&out.join(CONFIG_FILE), &json!({ "synth": cfg }))?;
    let corrupted: usize = corpus
        .entries
        .iter()
        .map(|e| e.corrupted_frames.as_ref().map_or(0, Vec::len))
        .sum();
    RunSummary {
        command: "synth",
        inputs: BTreeMap::new(),
        outputs: vec!["manifest.jsonl", "features/", CONFIG_FILE],
        results: json!({
            "manifest": shown(&manifest),
            "tracks": corpus.entries.len(),
            "corrupted_frames": corrupted,
        }),
    }
    .write(&out)
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    variant: String,
    metric: String,
    tracks: usize,
    frames_per_track: usize,
    /// Bins over per-frame mean weights pooled across all tracks.
    histogram: Vec<HistogramBin>,
    mean_relative_std: f64,
    min_mean_weight: f64,
    max_mean_weight: f64,
    corruption: Option<CorruptionReport>,
    diag_dominance: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CorruptionReport {
    #[serde(flatten)]
    split: CorruptionSplit,
    relative_gap: f64,
}

pub fn cmd_diag(a: &DiagArgs) -> Result<(), CliError> {
    if a.bins == 0 {
        return Err(CliError::usage(anyhow!("--bins must be at least 1")));
    }
    let run = open_model_run(&a.run)?;
    let summary = frame_weight_summary(run.model(), &run.dataset, run.threads)?;
    let flat = summary.flat_weights();
    let diag = Diagnostics {
        variant: run.model().variant.to_string(),
        metric: run.model().metric.kind().as_str().to_string(),
        tracks: run.dataset.len(),
        frames_per_track: run.time_samples,
        histogram: histogram(&flat, a.bins)?,
        mean_relative_std: summary.mean_relative_std,
        min_mean_weight: flat.iter().copied().fold(f64::INFINITY, f64::min),
        max_mean_weight: flat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        corruption: summary.corruption.map(|split| CorruptionReport {
            relative_gap: split.relative_gap(),
            split,
        }),
        diag_dominance: metric_diag_dominance(&run.model().metric)?,
    };
    write_json(&run.out.join(DIAGNOSTICS_FILE), &diag)?;
    run.write_config("diag", json!({ "bins": a.bins }))?;
    RunSummary {
        command: "diag",
        inputs: run_inputs(&a.run),
        outputs: vec![DIAGNOSTICS_FILE, CONFIG_FILE],
        results: json!({
            "mean_relative_std": diag.mean_relative_std,
            "diag_dominance": diag.diag_dominance,
            "corruption_relative_gap": diag.corruption.as_ref().map(|c| c.relative_gap),
        }),
    }
    .write(&run.out)
}
