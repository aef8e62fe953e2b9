//! Cross-validated training and baseline evaluation on an in-memory dataset.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::CvMode;
use crate::corpus::{make_folds_between, make_folds_within, FoldOptions, FoldPlan, Property};
use crate::error::Result;
use crate::eval::report::beats_all;
use crate::eval::{
    aggregate_folds, baseline_predict, evaluate_property, label_priors, Baseline, PredictionTable,
    PropertyMetrics, PropertyReport,
};
use crate::net::{Model, Real};
use crate::training::{train, Dataset, Modality, RunRecord, Task, TrainConfig};
use crate::util::derive_seed;

pub fn make_plan(data: &Dataset, cv: CvMode, folds: usize, opts: &FoldOptions) -> Result<FoldPlan> {
    match cv {
        CvMode::Within | CvMode::WithinId => make_folds_within(&data.tables, folds, opts),
        CvMode::Between => make_folds_between(&data.tables, opts),
    }
}

/// Report name of a system, e.g. `BothModalities` or `AudioOnly+SpeakerId`.
pub fn system_name(modality: Modality, speaker_input: bool) -> String {
    let base = match modality {
        Modality::Audio => "AudioOnly",
        Modality::Text => "TextWithTiming",
        Modality::TextNoTiming => "TextNoTiming",
        Modality::Both => "BothModalities",
    };
    if speaker_input {
        format!("{base}+SpeakerId")
    } else {
        base.to_string()
    }
}

pub struct CvOutcome<T> {
    pub models: Vec<Model<T>>,
    pub records: Vec<RunRecord>,
    pub validation: Vec<PredictionTable>,
    pub metrics: Vec<PropertyMetrics>,
}

/// Trains one model per fold (folds run in parallel) and scores each on its
/// validation frames.
pub fn cross_validate<T: Real>(
    data: &Dataset,
    plan: &FoldPlan,
    task: &Task,
    cfg: &TrainConfig,
) -> Result<CvOutcome<T>> {
    let outcomes = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| train::<T>(data, fold, task, cfg, 0, i))
        .collect::<Result<Vec<_>>>()?;
    let mut out = CvOutcome {
        models: Vec::new(),
        records: Vec::new(),
        validation: Vec::new(),
        metrics: Vec::new(),
    };
    for o in outcomes {
        out.metrics.push(evaluate_property(&o.validation)?);
        out.models.push(o.model);
        out.records.push(o.record);
        out.validation.push(o.validation);
    }
    Ok(out)
}

/// Per-fold metrics of all four baselines. Priors come from each fold's
/// training frames.
pub fn baseline_metrics(
    data: &Dataset,
    plan: &FoldPlan,
    property: Property,
    seed: u64,
) -> Result<BTreeMap<Baseline, Vec<PropertyMetrics>>> {
    let schema = property.schema();
    let mut out: BTreeMap<Baseline, Vec<PropertyMetrics>> = BTreeMap::new();
    for (i, fold) in plan.folds.iter().enumerate() {
        let train_frames = data.filter(property, fold.training_frames());
        let priors = label_priors(&data.truth(property, &train_frames), schema.width());
        let val_frames = data.filter(property, fold.validation_frames());
        let truth = data.truth(property, &val_frames);
        let times: Vec<f64> = val_frames
            .iter()
            .map(|&(r, f)| data.tables[r].time(f))
            .collect();
        for kind in Baseline::ALL {
            let fold_seed = derive_seed(seed, &[property as u64, i as u64]);
            let decisions = baseline_predict(kind, &schema, &priors, val_frames.len(), fold_seed);
            let table =
                PredictionTable::from_decisions(property, times.clone(), decisions, truth.clone())?;
            out.entry(kind)
                .or_default()
                .push(evaluate_property(&table)?);
        }
    }
    Ok(out)
}

/// Aggregated system and baseline reports for one property.
pub struct PropertyResult {
    pub system: PropertyReport,
    pub baselines: BTreeMap<Baseline, PropertyReport>,
    /// label -> whether the system beats every baseline
    pub beats: BTreeMap<String, bool>,
}

pub fn summarize(
    property: Property,
    metrics: &[PropertyMetrics],
    baselines: &BTreeMap<Baseline, Vec<PropertyMetrics>>,
) -> Result<PropertyResult> {
    let system = aggregate_folds(metrics)?;
    let baselines = baselines
        .iter()
        .map(|(k, m)| Ok((*k, aggregate_folds(m)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let refs: Vec<&PropertyReport> = baselines.values().collect();
    let beats = beats_all(property, &system, &refs);
    Ok(PropertyResult {
        system,
        baselines,
        beats,
    })
}
