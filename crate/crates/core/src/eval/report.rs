//! Fold aggregation and report export.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PropertyMetrics, Scores};
use crate::corpus::Property;
use crate::error::{Error, Result};
use crate::util::{fmt_sig9, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub per_fold: Vec<f64>,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            per_fold: values.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub score: MetricSummary,
    /// label -> metric -> summary
    pub labels: BTreeMap<String, BTreeMap<String, MetricSummary>>,
}

impl PropertyReport {
    pub fn metric(&self, label: &str, metric: &str) -> Option<&MetricSummary> {
        self.labels.get(label)?.get(metric)
    }
}

/// Mean and population standard deviation of every metric across folds.
pub fn aggregate_folds(folds: &[PropertyMetrics]) -> Result<PropertyReport> {
    let first = folds
        .first()
        .ok_or_else(|| Error::Config("cannot aggregate zero folds".into()))?;
    if folds
        .iter()
        .any(|f| f.property != first.property || f.labels.len() != first.labels.len())
    {
        return Err(Error::Config("folds disagree on property or labels".into()));
    }
    let mut labels = BTreeMap::new();
    for (li, (name, _)) in first.labels.iter().enumerate() {
        let mut metrics = BTreeMap::new();
        for (mi, metric) in Scores::METRICS.iter().enumerate() {
            let vals: Vec<f64> = folds.iter().map(|f| f.labels[li].1.values()[mi]).collect();
            metrics.insert(metric.to_string(), MetricSummary::of(&vals));
        }
        labels.insert(name.clone(), metrics);
    }
    let scores: Vec<f64> = folds.iter().map(PropertyMetrics::score).collect();
    Ok(PropertyReport {
        score: MetricSummary::of(&scores),
        labels,
    })
}

/// The metric compared against chance: F1 for phase labels, Macro-F1 otherwise.
pub fn headline_metric(property: Property) -> &'static str {
    if property.schema().exclusive {
        "f1_pos"
    } else {
        "macro_f1"
    }
}

/// Per label, whether `system` beats every baseline on the headline metric mean.
pub fn beats_all(
    property: Property,
    system: &PropertyReport,
    baselines: &[&PropertyReport],
) -> BTreeMap<String, bool> {
    let metric = headline_metric(property);
    system
        .labels
        .keys()
        .map(|label| {
            let mine = system.metric(label, metric).map_or(f64::NAN, |m| m.mean);
            let beats = baselines
                .iter()
                .all(|b| b.metric(label, metric).is_some_and(|m| mine > m.mean));
            (label.clone(), beats)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub system: String,
    pub seed: u64,
    pub folds: usize,
    /// The fully resolved configuration that produced the report.
    pub config: serde_json::Value,
    pub properties: BTreeMap<String, PropertyReport>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub beats_baselines: BTreeMap<String, BTreeMap<String, bool>>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::json("metrics report", e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    /// `system,property,label,metric,mean,std,fold_0,...`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("system,property,label,metric,mean,std");
        for i in 0..self.folds {
            out.push_str(&format!(",fold_{i}"));
        }
        out.push('\n');
        let mut row = |prop: &str, label: &str, metric: &str, s: &MetricSummary| {
            out.push_str(&format!(
                "{},{prop},{label},{metric},{},{}",
                self.system,
                fmt_sig9(s.mean),
                fmt_sig9(s.std)
            ));
            for v in &s.per_fold {
                out.push(',');
                out.push_str(&fmt_sig9(*v));
            }
            out.push('\n');
        };
        for (prop, rep) in &self.properties {
            row(prop, "*", "score", &rep.score);
            for (label, metrics) in &rep.labels {
                for (metric, s) in metrics {
                    row(prop, label, metric, s);
                }
            }
        }
        out
    }
}
