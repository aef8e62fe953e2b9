//! Subcommand implementations. Each returns the files it wrote, relative to
//! the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CvMode, ExperimentConfig};
use super::run::{baseline_metrics, cross_validate, make_plan, summarize, system_name};
use crate::corpus::io::{load_manifest, load_recording};
use crate::corpus::synth::{generate_synthetic_corpus, SynthSpec};
use crate::corpus::{
    apply_holdout, build_frame_table, make_folds_within, FoldPlan, Property, Recording,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_property, MetricsReport, PropertyMetrics};
use crate::net::gradcheck::{all_checks, GradReport};
use crate::net::{checkpoint, Model, Real};
use crate::prosody::ProsodyTrack;
use crate::textfeat::{fill_text_window, load_embeddings, EmbeddingTable, SLOTS};
use crate::training::dataset::recording_prosody;
use crate::training::trainer::{predict_frames, prediction_table};
use crate::training::{random_search, Dataset, Modality, Precision, RunRecord, Task};
use crate::util::{fmt_sig9, write_atomic};

fn prosody_file(id: u32) -> String {
    format!("rec{id:03}.prosody.csv")
}

fn text_file(id: u32) -> String {
    format!("rec{id:03}.text.f32")
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    write_atomic(path, (text + "\n").as_bytes())
}

/// Every recording listed by the configured manifests, minus the holdout.
pub fn load_recordings(cfg: &ExperimentConfig) -> Result<Vec<Recording>> {
    let mut recs = Vec::new();
    for m in &cfg.manifests {
        recs.extend(crate::corpus::io::load_corpus(m)?);
    }
    let mut ids: Vec<u32> = recs.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!(
            "recording id {} appears twice",
            w[0]
        )));
    }
    let (work, held) = apply_holdout(recs, &cfg.holdout);
    if !held.is_empty() {
        log::info!("holding out {} recording(s)", held.len());
    }
    Ok(work)
}

fn embeddings_for(cfg: &ExperimentConfig) -> Result<EmbeddingTable> {
    match &cfg.embeddings {
        Some(p) => load_embeddings(p),
        None => Ok(EmbeddingTable::new(1)),
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let recs = load_recordings(cfg)?;
    let emb = embeddings_for(cfg)?;
    match &cfg.features {
        Some(dir) => {
            let tracks = recs
                .iter()
                .map(|r| ProsodyTrack::read_csv(&dir.join(prosody_file(r.id))))
                .collect::<Result<Vec<_>>>()?;
            Dataset::from_tracks(&recs, &tracks, &emb)
        }
        None => Dataset::build(&recs, &emb),
    }
}

/// Adds `files` under `command` to `<out>/index.json`.
pub fn record_outputs(out: &Path, command: &str, files: &[PathBuf]) -> Result<()> {
    let path = out.join("index.json");
    let mut index: BTreeMap<String, Vec<String>> = if path.is_file() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?
    } else {
        BTreeMap::new()
    };
    let mut names: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
    names.sort();
    index.insert(command.to_string(), names);
    write_json(&path, &index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub id: u32,
    pub speaker: String,
    pub frames: usize,
    pub prosody: String,
    /// Raw little-endian f32, `frames x 7 x (dim + 1)`.
    pub text: Option<String>,
    pub text_width: Option<usize>,
}

fn features_for(rec: &Recording, emb: Option<&EmbeddingTable>, dir: &Path) -> Result<FeatureEntry> {
    let track = recording_prosody(rec)?;
    let prosody = prosody_file(rec.id);
    track.write_csv(&dir.join(&prosody))?;
    let table = build_frame_table(rec)?;
    let (text, text_width) = match emb {
        Some(emb) => {
            let width = emb.dim() + 1;
            let mut row = vec![0.0f32; SLOTS * width];
            let mut bytes = Vec::with_capacity(table.n_frames * row.len() * 4);
            for f in 0..table.n_frames {
                fill_text_window(emb, &table.words, table.time(f), &mut row);
                for v in &row {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
            let name = text_file(rec.id);
            write_atomic(&dir.join(&name), &bytes)?;
            (Some(name), Some(width))
        }
        None => (None, None),
    };
    Ok(FeatureEntry {
        id: rec.id,
        speaker: rec.speaker.clone(),
        frames: table.n_frames,
        prosody,
        text,
        text_width,
    })
}

/// Prosody CSV and text-window cache per recording under `<out>/features`.
/// Recordings that fail are listed in the returned error after the others
/// have been written.
pub fn cmd_features(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    if cfg.manifests.is_empty() {
        return Err(Error::Config("no corpus manifest given".into()));
    }
    let emb = cfg.embeddings.as_deref().map(load_embeddings).transpose()?;
    let dir = cfg.out.join("features");
    let mut jobs = Vec::new();
    for m in &cfg.manifests {
        let base = m.parent().unwrap_or(Path::new(".")).to_path_buf();
        for e in load_manifest(m)? {
            if !cfg.holdout.contains(&e.id) {
                jobs.push((e, base.clone()));
            }
        }
    }
    let results: Vec<std::result::Result<FeatureEntry, String>> = jobs
        .par_iter()
        .map(|(e, base)| {
            load_recording(e, base)
                .and_then(|rec| features_for(&rec, emb.as_ref(), &dir))
                .map_err(|err| format!("recording {}: {err}", e.id))
        })
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(msg) => failures.push(msg),
        }
    }
    write_json(&dir.join("index.json"), &entries)?;
    if !failures.is_empty() {
        return Err(Error::Features(failures));
    }
    let mut files = vec![PathBuf::from("features/index.json")];
    for e in &entries {
        files.push(Path::new("features").join(&e.prosody));
        if let Some(t) = &e.text {
            files.push(Path::new("features").join(t));
        }
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub property: Property,
    pub fold: usize,
    pub modality: Modality,
    pub speaker_input: bool,
    pub speakers: Vec<String>,
    pub embedding_dim: usize,
}

impl CheckpointMeta {
    pub fn task(&self) -> Task {
        Task {
            property: self.property,
            modality: self.modality,
            speaker_input: self.speaker_input,
        }
    }
}

fn checkpoint_rel(property: Property, fold: usize) -> PathBuf {
    PathBuf::from(format!("checkpoints/{property}/fold_{fold:02}.ckpt"))
}

pub fn load_model<T: Real>(path: &Path) -> Result<(Model<T>, CheckpointMeta)> {
    let (model, meta) = checkpoint::load::<T>(path)?;
    let meta: CheckpointMeta =
        serde_json::from_value(meta).map_err(|e| Error::json(path.display().to_string(), e))?;
    Ok((model, meta))
}

/// Checks that a checkpoint can read inputs built from `data`.
fn check_compatible(meta: &CheckpointMeta, data: &Dataset, path: &Path) -> Result<()> {
    let problem = if meta.speaker_input && meta.speakers != data.speakers {
        Some("speaker set differs from the corpus")
    } else if meta.modality.uses_text() && meta.embedding_dim != data.dim {
        Some("embedding dimension differs from the embedding file")
    } else {
        None
    };
    match problem {
        Some(message) => Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: message.into(),
        }),
        None => Ok(()),
    }
}

fn curves_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("run,fold,step,val_macro_f1,train_loss\n");
    for r in records {
        for p in &r.curve {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.run,
                r.fold,
                p.step,
                fmt_sig9(p.val_score),
                fmt_sig9(p.train_loss)
            ));
        }
    }
    out
}

fn train_property<T: Real>(
    cfg: &ExperimentConfig,
    data: &Dataset,
    plan: &FoldPlan,
    property: Property,
    files: &mut Vec<PathBuf>,
) -> Result<Vec<PropertyMetrics>> {
    let task = Task {
        property,
        modality: cfg.modality,
        speaker_input: cfg.speaker_input(),
    };
    let cv = cross_validate::<T>(data, plan, &task, &cfg.train)?;
    for (i, model) in cv.models.iter().enumerate() {
        let meta = CheckpointMeta {
            property,
            fold: i,
            modality: cfg.modality,
            speaker_input: task.speaker_input,
            speakers: data.speakers.clone(),
            embedding_dim: data.dim,
        };
        let meta =
            serde_json::to_value(&meta).map_err(|e| Error::json("checkpoint metadata", e))?;
        let rel = checkpoint_rel(property, i);
        checkpoint::save(&cfg.out.join(&rel), model, &meta)?;
        files.push(rel);
    }
    let rel = PathBuf::from(format!("train/{property}_curves.csv"));
    write_atomic(&cfg.out.join(&rel), curves_csv(&cv.records).as_bytes())?;
    files.push(rel);
    Ok(cv.metrics)
}

fn eval_property<T: Real>(
    cfg: &ExperimentConfig,
    data: &Dataset,
    plan: &FoldPlan,
    property: Property,
    checkpoints: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<Vec<PropertyMetrics>> {
    let mut metrics = Vec::new();
    for (i, fold) in plan.folds.iter().enumerate() {
        let path = checkpoints.join(checkpoint_rel(property, i));
        let (model, meta) = load_model::<T>(&path)?;
        if meta.property != property || meta.fold != i || meta.modality != cfg.modality {
            return Err(Error::Checkpoint {
                path,
                message: format!(
                    "trained for {} fold {} with {} input, config asks for {property} fold {i} with {} input",
                    meta.property,
                    meta.fold,
                    meta.modality.name(),
                    cfg.modality.name()
                ),
            });
        }
        check_compatible(&meta, data, &path)?;
        let frames = data.filter(property, fold.validation_frames());
        let table = prediction_table(&model, data, &frames, &meta.task(), cfg.train.threshold)?;
        let rel = PathBuf::from(format!("eval/predictions/{property}_fold_{i:02}.csv"));
        write_atomic(&cfg.out.join(&rel), table.to_csv().as_bytes())?;
        files.push(rel);
        metrics.push(evaluate_property(&table)?);
    }
    Ok(metrics)
}

/// Builds the report (system plus baselines on the same folds) and writes
/// `<sub>/report.json` and `<sub>/report.csv`.
fn write_reports(
    cfg: &ExperimentConfig,
    data: &Dataset,
    plan: &FoldPlan,
    results: &[(Property, Vec<PropertyMetrics>)],
    sub: &str,
    files: &mut Vec<PathBuf>,
) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        system: system_name(cfg.modality, cfg.speaker_input()),
        seed: cfg.seed,
        folds: plan.len(),
        config: cfg.to_json(),
        properties: BTreeMap::new(),
        beats_baselines: BTreeMap::new(),
    };
    for (property, metrics) in results {
        let baselines = baseline_metrics(data, plan, *property, cfg.seed)?;
        let summary = summarize(*property, metrics, &baselines)?;
        report
            .properties
            .insert(property.to_string(), summary.system);
        report
            .beats_baselines
            .insert(property.to_string(), summary.beats);
    }
    let json = PathBuf::from(format!("{sub}/report.json"));
    report.write_json(&cfg.out.join(&json))?;
    let csv = PathBuf::from(format!("{sub}/report.csv"));
    write_atomic(&cfg.out.join(&csv), report.to_csv().as_bytes())?;
    files.extend([json, csv]);
    Ok(report)
}

fn prepare(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, Dataset, FoldPlan)> {
    cfg.validate()?;
    let cfg = cfg.clone().resolved();
    let data = load_dataset(&cfg)?;
    let plan = make_plan(&data, cfg.cv, cfg.folds, &cfg.fold_options)?;
    Ok((cfg, data, plan))
}

/// Cross-validated training of one model per property and fold.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(MetricsReport, Vec<PathBuf>)> {
    let (cfg, data, plan) = prepare(cfg)?;
    let mut files = Vec::new();
    write_json(&cfg.out.join("folds.json"), &plan)?;
    files.push(PathBuf::from("folds.json"));
    let mut results = Vec::new();
    for &property in &cfg.properties {
        log::info!("training {property} on {} folds", plan.len());
        let metrics = match cfg.train.precision {
            Precision::F32 => train_property::<f32>(&cfg, &data, &plan, property, &mut files)?,
            Precision::F64 => train_property::<f64>(&cfg, &data, &plan, property, &mut files)?,
        };
        results.push((property, metrics));
    }
    let report = write_reports(&cfg, &data, &plan, &results, "train", &mut files)?;
    Ok((report, files))
}

/// Scores saved checkpoints on the validation frames of their folds.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoints: Option<&Path>,
) -> Result<(MetricsReport, Vec<PathBuf>)> {
    let (cfg, data, plan) = prepare(cfg)?;
    let dir = checkpoints.map_or_else(|| cfg.out.clone(), Path::to_path_buf);
    let mut files = Vec::new();
    let mut results = Vec::new();
    for &property in &cfg.properties {
        let metrics = match cfg.train.precision {
            Precision::F32 => eval_property::<f32>(&cfg, &data, &plan, property, &dir, &mut files)?,
            Precision::F64 => eval_property::<f64>(&cfg, &data, &plan, property, &dir, &mut files)?,
        };
        results.push((property, metrics));
    }
    let report = write_reports(&cfg, &data, &plan, &results, "eval", &mut files)?;
    Ok((report, files))
}

/// All four baselines on the configured folds, one report each.
pub fn cmd_baselines(cfg: &ExperimentConfig) -> Result<(Vec<MetricsReport>, Vec<PathBuf>)> {
    let (cfg, data, plan) = prepare(cfg)?;
    let mut reports: BTreeMap<_, MetricsReport> = BTreeMap::new();
    for &property in &cfg.properties {
        for (kind, metrics) in baseline_metrics(&data, &plan, property, cfg.seed)? {
            let report = reports.entry(kind).or_insert_with(|| MetricsReport {
                system: kind.name().to_string(),
                seed: cfg.seed,
                folds: plan.len(),
                config: cfg.to_json(),
                properties: BTreeMap::new(),
                beats_baselines: BTreeMap::new(),
            });
            report.properties.insert(
                property.to_string(),
                crate::eval::aggregate_folds(&metrics)?,
            );
        }
    }
    let mut files = Vec::new();
    let mut csv = String::new();
    for (kind, report) in &reports {
        let rel = PathBuf::from(format!("baselines/{}.json", kind.name()));
        report.write_json(&cfg.out.join(&rel))?;
        files.push(rel);
        let body = report.to_csv();
        if csv.is_empty() {
            csv.push_str(&body);
        } else {
            csv.extend(body.lines().skip(1).map(|l| format!("{l}\n")));
        }
    }
    let rel = PathBuf::from("baselines/report.csv");
    write_atomic(&cfg.out.join(&rel), csv.as_bytes())?;
    files.push(rel);
    Ok((reports.into_values().collect(), files))
}

/// Random search per property over within-speaker folds.
pub fn cmd_hpsearch(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let cfg = cfg.clone().resolved();
    let data = load_dataset(&cfg)?;
    let plan = make_folds_within(&data.tables, cfg.search.folds, &cfg.fold_options)?;
    let mut files = Vec::new();
    for &property in &cfg.properties {
        let task = Task {
            property,
            modality: cfg.modality,
            speaker_input: cfg.speaker_input(),
        };
        let (train, ranges, n) = (&cfg.train, &cfg.search.ranges, cfg.search.runs);
        log::info!("searching {n} configurations for {property}");
        let result = match cfg.train.precision {
            Precision::F32 => {
                random_search::<f32>(&data, &plan, &task, train, ranges, n, cfg.seed)?
            }
            Precision::F64 => {
                random_search::<f64>(&data, &plan, &task, train, ranges, n, cfg.seed)?
            }
        };
        let dir = PathBuf::from(format!("hpsearch/{property}"));
        write_json(&cfg.out.join(dir.join("search.json")), &result)?;
        write_json(&cfg.out.join(dir.join("best_config.json")), &result.best)?;
        write_atomic(
            &cfg.out.join(dir.join("curves.csv")),
            result.curves_csv().as_bytes(),
        )?;
        files.extend(["search.json", "best_config.json", "curves.csv"].map(|f| dir.join(f)));
    }
    Ok(files)
}

fn predict_with<T: Real>(
    cfg: &ExperimentConfig,
    data: &Dataset,
    checkpoint: &Path,
    presence: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let (model, meta) = load_model::<T>(checkpoint)?;
    check_compatible(&meta, data, checkpoint)?;
    let gate = match presence {
        Some(p) => {
            let (m, gm) = load_model::<T>(p)?;
            if gm.property != Property::Presence {
                return Err(Error::Checkpoint {
                    path: p.to_path_buf(),
                    message: format!("expected a presence model, found {}", gm.property),
                });
            }
            check_compatible(&gm, data, p)?;
            Some((m, gm))
        }
        None => None,
    };
    let property = meta.property;
    let width = property.schema().width();
    let mut files = Vec::new();
    for (r, table) in data.tables.iter().enumerate() {
        let frames: Vec<(usize, usize)> = (0..table.n_frames).map(|f| (r, f)).collect();
        let probs = predict_frames(&model, data, &frames, &meta.task())?;
        let times = frames.iter().map(|&(_, f)| table.time(f)).collect();
        let mut preds = crate::eval::PredictionTable::from_probs(
            property,
            times,
            probs,
            data.truth(property, &frames),
            cfg.train.threshold,
        )?;
        if let Some((gm, gmeta)) = &gate {
            let p = predict_frames(gm, data, &frames, &gmeta.task())?;
            for (i, &pi) in p.iter().enumerate() {
                if pi < cfg.train.threshold {
                    preds.decisions[i * width..(i + 1) * width].fill(0);
                }
            }
        }
        let rel = PathBuf::from(format!(
            "predictions/rec{:03}_{property}.csv",
            table.recording_id
        ));
        write_atomic(&cfg.out.join(&rel), preds.to_csv().as_bytes())?;
        files.push(rel);
    }
    Ok(files)
}

/// Per-frame predictions for every recording. With a presence model, property
/// decisions are zeroed where presence falls below the threshold.
pub fn cmd_predict(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    presence: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    if cfg.manifests.is_empty() {
        return Err(Error::Config("no corpus manifest given".into()));
    }
    let data = load_dataset(cfg)?;
    match cfg.train.precision {
        Precision::F32 => predict_with::<f32>(cfg, &data, checkpoint, presence),
        Precision::F64 => predict_with::<f64>(cfg, &data, checkpoint, presence),
    }
}

/// Writes a synthetic corpus to `out`.
pub fn cmd_synth(spec: &SynthSpec, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let corpus = generate_synthetic_corpus(spec, seed)?;
    corpus.write_to(out)?;
    let mut files: Vec<PathBuf> = ["manifest.json", "embeddings.vec", "couplings.json"]
        .iter()
        .map(PathBuf::from)
        .collect();
    for rec in &corpus.recordings {
        let stem = format!("rec{:03}", rec.id);
        files.extend(
            ["wav", "words.tsv", "ann.tsv"].map(|ext| PathBuf::from(format!("{stem}.{ext}"))),
        );
        if !rec.interlocutor.is_empty() {
            files.push(PathBuf::from(format!("{stem}.interlocutor.tsv")));
        }
    }
    Ok(files)
}

pub fn cmd_gradcheck(seed: u64) -> Vec<GradReport> {
    all_checks(seed)
}

/// `within_id` folds are the `within` folds; only the model input differs.
pub fn describe_cv(cv: CvMode, folds: usize) -> String {
    match cv {
        CvMode::Between => "leave-one-speaker-out".to_string(),
        CvMode::Within => format!("{folds}-fold within-speaker"),
        CvMode::WithinId => format!("{folds}-fold within-speaker with speaker identity"),
    }
}
