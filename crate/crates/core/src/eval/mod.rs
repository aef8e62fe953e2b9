//! Decisions, F1 metrics, chance baselines, and fold aggregation.

pub mod report;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Property, PropertySchema};
use crate::error::{Error, Result};
use crate::util::{fmt_sig9, rng_for};

pub use report::{aggregate_folds, MetricSummary, MetricsReport, PropertyReport};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Turns an `n × width` probability matrix into 0/1 decisions. Exclusive
/// schemas take the argmax per row (lowest index on ties); others threshold.
pub fn binarize(probs: &[f64], width: usize, exclusive: bool, threshold: f64) -> Vec<u8> {
    let mut out = vec![0u8; probs.len()];
    for (row, dec) in probs.chunks(width).zip(out.chunks_mut(width)) {
        if exclusive {
            let mut best = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = i;
                }
            }
            dec[best] = 1;
        } else {
            for (d, &p) in dec.iter_mut().zip(row) {
                *d = u8::from(p >= threshold);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts for column `label` of row-major `n × width` decision/truth matrices.
    pub fn for_label(decisions: &[u8], truth: &[u8], width: usize, label: usize) -> Self {
        let mut c = Self::default();
        for (d, t) in decisions.chunks(width).zip(truth.chunks(width)) {
            c.add(d[label] != 0, t[label] != 0);
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_pos: f64,
    pub f1_neg: f64,
    pub macro_f1: f64,
}

impl Scores {
    pub const METRICS: [&'static str; 6] = [
        "accuracy",
        "precision",
        "recall",
        "f1_pos",
        "f1_neg",
        "macro_f1",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1_pos,
            self.f1_neg,
            self.macro_f1,
        ]
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 for both classes; undefined ratios are 0.
pub fn f1_scores(c: &ConfusionCounts) -> Scores {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1_pos = harmonic(precision, recall);
    let f1_neg = harmonic(ratio(c.tn, c.tn + c.fn_), ratio(c.tn, c.tn + c.fp));
    Scores {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1_pos,
        f1_neg,
        macro_f1: (f1_pos + f1_neg) / 2.0,
    }
}

/// Per-frame probabilities, decisions and truth for one property.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub property: Property,
    pub width: usize,
    pub times: Vec<f64>,
    pub probs: Vec<f64>,
    pub decisions: Vec<u8>,
    pub truth: Vec<u8>,
}

impl PredictionTable {
    pub fn from_probs(
        property: Property,
        times: Vec<f64>,
        probs: Vec<f64>,
        truth: Vec<u8>,
        threshold: f64,
    ) -> Result<Self> {
        let schema = property.schema();
        let decisions = binarize(&probs, schema.width(), schema.exclusive, threshold);
        Self::build(property, times, probs, decisions, truth)
    }

    pub fn from_decisions(
        property: Property,
        times: Vec<f64>,
        decisions: Vec<u8>,
        truth: Vec<u8>,
    ) -> Result<Self> {
        let probs = decisions.iter().map(|&d| f64::from(d)).collect();
        Self::build(property, times, probs, decisions, truth)
    }

    fn build(
        property: Property,
        times: Vec<f64>,
        probs: Vec<f64>,
        decisions: Vec<u8>,
        truth: Vec<u8>,
    ) -> Result<Self> {
        let width = property.schema().width();
        let n = times.len();
        if probs.len() != n * width || decisions.len() != n * width || truth.len() != n * width {
            return Err(Error::Shape {
                name: format!("{property} predictions"),
                expected: format!("{n} frames x {width} labels"),
                actual: format!(
                    "{} probabilities, {} decisions, {} truth values",
                    probs.len(),
                    decisions.len(),
                    truth.len()
                ),
            });
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(format!(
                "{property} probabilities outside [0, 1]"
            )));
        }
        Ok(Self {
            property,
            width,
            times,
            probs,
            decisions,
            truth,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.times.len()
    }

    pub fn append(&mut self, other: &PredictionTable) {
        assert_eq!(
            self.property, other.property,
            "appending a different property"
        );
        self.times.extend_from_slice(&other.times);
        self.probs.extend_from_slice(&other.probs);
        self.decisions.extend_from_slice(&other.decisions);
        self.truth.extend_from_slice(&other.truth);
    }

    /// `t,label,prob,decision,truth`, one row per frame and label.
    pub fn to_csv(&self) -> String {
        let labels = self.property.schema().labels;
        let mut out = String::from("t,label,prob,decision,truth\n");
        for (i, &t) in self.times.iter().enumerate() {
            for (l, name) in labels.iter().enumerate() {
                let k = i * self.width + l;
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_sig9(t),
                    name,
                    fmt_sig9(self.probs[k]),
                    self.decisions[k],
                    self.truth[k]
                ));
            }
        }
        out
    }
}

/// Metrics for one property on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyMetrics {
    pub property: Property,
    pub labels: Vec<(String, Scores)>,
    pub counts: Vec<ConfusionCounts>,
}

impl PropertyMetrics {
    /// The selection score: multi-class macro F1 (mean per-label F1) for
    /// phase, otherwise the mean of per-label binary Macro-F1.
    pub fn score(&self) -> f64 {
        let n = self.labels.len().max(1) as f64;
        if self.property.schema().exclusive {
            self.labels.iter().map(|(_, s)| s.f1_pos).sum::<f64>() / n
        } else {
            self.labels.iter().map(|(_, s)| s.macro_f1).sum::<f64>() / n
        }
    }

    /// The per-label figure compared against baselines.
    pub fn headline(&self, label: usize) -> f64 {
        let s = &self.labels[label].1;
        if self.property.schema().exclusive {
            s.f1_pos
        } else {
            s.macro_f1
        }
    }
}

pub fn evaluate_property(preds: &PredictionTable) -> Result<PropertyMetrics> {
    let schema: PropertySchema = preds.property.schema();
    if preds.width != schema.width() {
        return Err(Error::Shape {
            name: format!("{} predictions", preds.property),
            expected: format!("{} labels", schema.width()),
            actual: format!("{} labels", preds.width),
        });
    }
    let counts: Vec<ConfusionCounts> = (0..schema.width())
        .map(|l| ConfusionCounts::for_label(&preds.decisions, &preds.truth, schema.width(), l))
        .collect();
    Ok(PropertyMetrics {
        property: preds.property,
        labels: schema
            .labels
            .iter()
            .zip(&counts)
            .map(|(l, c)| (l.to_string(), f1_scores(c)))
            .collect(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Baseline {
    AlwaysZero,
    AlwaysOne,
    UniformRandom,
    InformedRandom,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [
        Baseline::AlwaysZero,
        Baseline::AlwaysOne,
        Baseline::UniformRandom,
        Baseline::InformedRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::AlwaysZero => "AlwaysZero",
            Baseline::AlwaysOne => "AlwaysOne",
            Baseline::UniformRandom => "UniformRandom",
            Baseline::InformedRandom => "InformedRandom",
        }
    }
}

/// Fraction of positive frames per label in `truth` (`n × width`).
pub fn label_priors(truth: &[u8], width: usize) -> Vec<f64> {
    let n = truth.len() / width.max(1);
    let mut counts = vec![0usize; width];
    for row in truth.chunks(width) {
        for (c, &v) in counts.iter_mut().zip(row) {
            *c += usize::from(v != 0);
        }
    }
    counts.iter().map(|&c| ratio(c as u64, n as u64)).collect()
}

/// Input-independent decisions (`n_frames × width`). Random systems sample
/// each label independently, or one class per frame for exclusive schemas.
pub fn baseline_predict(
    kind: Baseline,
    schema: &PropertySchema,
    priors: &[f64],
    n_frames: usize,
    seed: u64,
) -> Vec<u8> {
    let w = schema.width();
    assert_eq!(priors.len(), w, "one prior per label");
    let mut rng = rng_for(seed, &[kind as u64]);
    let mut out = vec![0u8; n_frames * w];
    match kind {
        Baseline::AlwaysZero => {}
        Baseline::AlwaysOne => out.iter_mut().for_each(|v| *v = 1),
        Baseline::UniformRandom | Baseline::InformedRandom => {
            let probs: Vec<f64> = match kind {
                Baseline::UniformRandom if schema.exclusive => vec![1.0 / w as f64; w],
                Baseline::UniformRandom => vec![0.5; w],
                _ => priors.to_vec(),
            };
            let total: f64 = probs.iter().sum();
            for row in out.chunks_mut(w) {
                if schema.exclusive {
                    if total <= 0.0 {
                        continue;
                    }
                    let mut u = rng.gen::<f64>() * total;
                    let mut pick = w - 1;
                    for (i, &p) in probs.iter().enumerate() {
                        if u < p {
                            pick = i;
                            break;
                        }
                        u -= p;
                    }
                    row[pick] = 1;
                } else {
                    for (v, &p) in row.iter_mut().zip(&probs) {
                        *v = u8::from(rng.gen::<f64>() < p);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_rules() {
        assert_eq!(
            binarize(&[0.6, 0.4, 0.5, 0.1], 4, false, 0.5),
            vec![1, 0, 1, 0]
        );
        assert_eq!(binarize(&[0.2; 5], 5, true, 0.5), vec![1, 0, 0, 0, 0]);
        assert_eq!(binarize(&[0.99, 1.0, 0.3], 3, false, 1.0), vec![0, 1, 0]);
        assert_eq!(
            binarize(&[0.1, 0.3, 0.3, 0.2, 0.1], 5, true, 0.5),
            vec![0, 1, 0, 0, 0]
        );
    }

    #[test]
    fn always_zero_on_thirteen_percent() {
        let c = ConfusionCounts {
            tp: 0,
            fp: 0,
            fn_: 13,
            tn: 87,
        };
        let s = f1_scores(&c);
        assert_eq!((s.precision, s.recall, s.f1_pos), (0.0, 0.0, 0.0));
        assert!((s.f1_neg - 2.0 * 0.87 / 1.87).abs() < 1e-12);
        assert!((s.macro_f1 - 0.87 / 1.87).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let s = f1_scores(&ConfusionCounts {
            tp: 4,
            fp: 0,
            fn_: 0,
            tn: 6,
        });
        assert_eq!(s.values(), [1.0; 6]);
    }

    #[test]
    fn phase_all_stroke() {
        let n = 6;
        let mut truth = vec![0u8; n * 5];
        for r in 0..n {
            truth[r * 5 + 3] = 1;
        }
        let t =
            PredictionTable::from_decisions(Property::Phase, vec![0.0; n], truth.clone(), truth)
                .unwrap();
        let m = evaluate_property(&t).unwrap();
        for (i, (_, s)) in m.labels.iter().enumerate() {
            assert_eq!(s.f1_pos, if i == 3 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn absent_label_scores_half() {
        let t = PredictionTable::from_decisions(
            Property::Semantics,
            vec![0.0; 2],
            vec![0; 8],
            vec![0; 8],
        )
        .unwrap();
        let m = evaluate_property(&t).unwrap();
        let s = m.labels[0].1;
        assert_eq!((s.f1_pos, s.f1_neg, s.macro_f1), (0.0, 1.0, 0.5));
    }

    #[test]
    fn hand_computed_twelve_frames() {
        // Category, label "beat": truth 1 1 1 1 0 0 0 0 0 0 0 0, pred 1 1 0 0 1 0 0 0 0 0 0 0.
        // tp 2, fn 2, fp 1, tn 7.
        let truth_beat = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0];
        let pred_beat = [1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0];
        let mut truth = vec![0u8; 48];
        let mut pred = vec![0u8; 48];
        for i in 0..12 {
            truth[i * 4 + 1] = truth_beat[i];
            pred[i * 4 + 1] = pred_beat[i];
        }
        let t = PredictionTable::from_decisions(Property::Category, vec![0.0; 12], pred, truth)
            .unwrap();
        let s = evaluate_property(&t).unwrap().labels[1].1;
        let p = 2.0 / 3.0;
        let r = 0.5;
        let f1 = 2.0 * p * r / (p + r);
        let pn = 7.0 / 9.0;
        let rn = 7.0 / 8.0;
        let f0 = 2.0 * pn * rn / (pn + rn);
        assert!((s.precision - p).abs() < 1e-15);
        assert!((s.recall - r).abs() < 1e-15);
        assert!((s.f1_pos - f1).abs() < 1e-15);
        assert!((s.f1_neg - f0).abs() < 1e-15);
        assert!((s.macro_f1 - (f1 + f0) / 2.0).abs() < 1e-15);
        assert!((s.accuracy - 9.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_frames_error() {
        assert!(PredictionTable::from_decisions(
            Property::Phase,
            vec![0.0; 2],
            vec![0; 10],
            vec![0; 5]
        )
        .is_err());
    }

    #[test]
    fn baselines_are_seeded() {
        let s = Property::Category.schema();
        let pri = [0.1, 0.2, 0.3, 0.4];
        for b in Baseline::ALL {
            assert_eq!(
                baseline_predict(b, &s, &pri, 50, 3),
                baseline_predict(b, &s, &pri, 50, 3)
            );
        }
        let phase = Property::Phase.schema();
        let d = baseline_predict(
            Baseline::InformedRandom,
            &phase,
            &[0.1, 0.2, 0.0, 0.5, 0.2],
            100,
            1,
        );
        assert!(d.chunks(5).all(|r| r.iter().sum::<u8>() == 1 && r[2] == 0));
    }

    #[test]
    fn priors() {
        assert_eq!(label_priors(&[1, 0, 1, 1, 0, 0, 0, 1], 2), vec![0.5, 0.5]);
    }

    #[test]
    fn csv_layout() {
        let t =
            PredictionTable::from_probs(Property::Presence, vec![0.05], vec![0.7], vec![1], 0.5)
                .unwrap();
        assert_eq!(
            t.to_csv(),
            "t,label,prob,decision,truth\n0.05,gesture,0.7,1,1\n"
        );
    }

    proptest::proptest! {
        #[test]
        fn scaling_invariance(tp in 0u64..50, fp in 0u64..50, fneg in 0u64..50, tn in 0u64..50, k in 2u64..7) {
            let a = f1_scores(&ConfusionCounts { tp, fp, fn_: fneg, tn });
            let b = f1_scores(&ConfusionCounts { tp: tp * k, fp: fp * k, fn_: fneg * k, tn: tn * k });
            for (x, y) in a.values().iter().zip(b.values()) {
                proptest::prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn metrics_in_unit_interval(tp in 0u64..50, fp in 0u64..50, fneg in 0u64..50, tn in 0u64..50) {
            let s = f1_scores(&ConfusionCounts { tp, fp, fn_: fneg, tn });
            proptest::prop_assert!(s.values().iter().all(|v| (0.0..=1.0).contains(v)));
            proptest::prop_assert!((s.macro_f1 - (s.f1_pos + s.f1_neg) / 2.0).abs() < 1e-15);
        }
    }
}
