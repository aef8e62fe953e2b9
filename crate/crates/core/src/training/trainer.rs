//! Mini-batch training with Adam on one fold.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, FrameRef};
use super::upsample::upsample;
use super::{Task, TrainConfig};
use crate::corpus::folds::Fold;
use crate::error::{Error, Result};
use crate::eval::{evaluate_property, PredictionTable};
use crate::net::{Graph, Head, Model, Real, Tensor};
use crate::util::{derive_seed, rng_for};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const PREDICT_BATCH: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub val_score: f64,
    /// Mean per-frame training loss since the previous point.
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub fold: usize,
    pub curve: Vec<CurvePoint>,
    pub final_score: Option<f64>,
    pub failure: Option<String>,
}

pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub record: RunRecord,
    pub validation: PredictionTable,
}

/// Head probabilities for `frames`, row-major `frames × labels`.
pub fn predict_frames<T: Real>(
    model: &Model<T>,
    data: &Dataset,
    frames: &[FrameRef],
    task: &Task,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(frames.len() * model.spec.head.labels());
    for chunk in frames.chunks(PREDICT_BATCH) {
        let batch = data.batch::<T>(chunk, task.modality, task.speaker_input);
        out.extend(
            model
                .predict(&batch)?
                .data
                .iter()
                .map(|v| v.f64().clamp(0.0, 1.0)),
        );
    }
    Ok(out)
}

pub fn prediction_table<T: Real>(
    model: &Model<T>,
    data: &Dataset,
    frames: &[FrameRef],
    task: &Task,
    threshold: f64,
) -> Result<PredictionTable> {
    let probs = predict_frames(model, data, frames, task)?;
    let times = frames
        .iter()
        .map(|&(r, f)| data.tables[r].time(f))
        .collect();
    PredictionTable::from_probs(
        task.property,
        times,
        probs,
        data.truth(task.property, frames),
        threshold,
    )
}

/// Positive frames per label over `frames`.
pub fn positive_counts(data: &Dataset, task: &Task, frames: &[FrameRef]) -> Vec<usize> {
    let width = task.property.schema().width();
    let mut counts = vec![0; width];
    for &fr in frames {
        for (c, &v) in counts.iter_mut().zip(data.labels(task.property, fr)) {
            *c += usize::from(v != 0);
        }
    }
    counts
}

struct Adam<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Real> Adam<T> {
    fn new(model: &Model<T>) -> Self {
        let zeros: Vec<Vec<T>> = model
            .params
            .tensors
            .values()
            .map(|t| vec![T::zero(); t.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Option<&[T]>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let (b1, b2) = (T::of(BETA1), T::of(BETA2));
        let (lr, eps) = (T::of(lr), T::of(ADAM_EPS));
        let (c1, c2) = (T::of(c1), T::of(c2));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            for (((w, &gi), m), v) in p
                .data
                .iter_mut()
                .zip(g.iter())
                .zip(&mut self.m[i])
                .zip(&mut self.v[i])
            {
                *m = b1 * *m + (T::one() - b1) * gi;
                *v = b2 * *v + (T::one() - b2) * gi * gi;
                let mh = *m / c1;
                let vh = *v / c2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Trains one model on `fold` and scores it on the fold's validation frames.
/// No early stopping: the final parameters are returned.
pub fn train<T: Real>(
    data: &Dataset,
    fold: &Fold,
    task: &Task,
    cfg: &TrainConfig,
    run: usize,
    fold_idx: usize,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let property = task.property;
    let schema = property.schema();
    let train_frames = data.filter(property, fold.training_frames());
    let val_frames = data.filter(property, fold.validation_frames());
    if train_frames.is_empty() || val_frames.is_empty() {
        return Err(Error::Folds(format!(
            "fold {fold_idx} has {} training and {} validation frames for {property}",
            train_frames.len(),
            val_frames.len()
        )));
    }

    let mut spec = task.model_spec(cfg, data);
    if spec.audio.is_some() {
        spec.audio_norm = Some(data.audio_stats(&train_frames));
    }
    let path = [run as u64, fold_idx as u64];
    let mut model = Model::<T>::init(spec, derive_seed(cfg.seed, &[path[0], path[1], 0]))?;
    let mut batch_rng = rng_for(cfg.seed, &[path[0], path[1], 1]);
    let mut dropout_rng = rng_for(cfg.seed, &[path[0], path[1], 2]);

    let counts = positive_counts(data, task, &train_frames);
    let weights: Vec<T> = cfg
        .loss
        .weights(schema.width(), Some(&counts))?
        .into_iter()
        .map(T::of)
        .collect();
    let pool: Vec<FrameRef> = if cfg.upsample {
        let rows: Vec<&[u8]> = train_frames
            .iter()
            .map(|&fr| data.labels(property, fr))
            .collect();
        upsample(&rows, derive_seed(cfg.seed, &[path[0], path[1], 3]))
            .into_iter()
            .map(|i| train_frames[i])
            .collect()
    } else {
        train_frames.clone()
    };

    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::new();
    let (mut loss_sum, mut loss_frames) = (0.0, 0usize);
    let batch_size = cfg.batch_size.min(pool.len());
    for step in 1..=cfg.steps {
        if cursor + batch_size > order.len() {
            order.shuffle(&mut batch_rng);
            cursor = 0;
        }
        let frames: Vec<FrameRef> = order[cursor..cursor + batch_size]
            .iter()
            .map(|&i| pool[i])
            .collect();
        cursor += batch_size;

        let batch = data.batch::<T>(&frames, task.modality, task.speaker_input);
        let mut g = Graph::new();
        let vars = model.bind(&mut g, true);
        let probs = model.forward_graph(&mut g, &vars, &batch, Some(&mut dropout_rng))?;
        let loss = match model.spec.head {
            Head::Softmax(_) => {
                let target = frames
                    .iter()
                    .map(|&fr| data.labels(property, fr).iter().position(|&v| v != 0))
                    .collect();
                g.categorical_focal(probs, target, cfg.loss.gamma(), weights.clone())
            }
            Head::Sigmoid(_) => {
                let target = frames
                    .iter()
                    .flat_map(|&fr| {
                        data.labels(property, fr).iter().map(|&v| {
                            if v != 0 {
                                T::one()
                            } else {
                                T::zero()
                            }
                        })
                    })
                    .collect();
                g.binary_focal(probs, target, cfg.loss.gamma(), weights.clone())
            }
        };
        let value = g.value(loss).data[0].f64();
        if !value.is_finite() || g.non_finite_op().is_some() {
            return Err(Error::Diverged { step });
        }
        loss_sum += value;
        loss_frames += frames.len();
        let grads = g.backward(loss);
        let grad_refs: Vec<Option<&[T]>> = model
            .params
            .tensors
            .keys()
            .map(|k| grads.get(vars[k]))
            .collect();
        let mut params: Vec<&mut Tensor<T>> = model.params.tensors.values_mut().collect();
        adam.step(&mut params, &grad_refs, cfg.learning_rate);

        let score_now = step == cfg.steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
        if score_now {
            let table = prediction_table(&model, data, &val_frames, task, cfg.threshold)?;
            let score = evaluate_property(&table)?.score();
            curve.push(CurvePoint {
                step,
                val_score: score,
                train_loss: loss_sum / loss_frames.max(1) as f64,
            });
            log::debug!("run {run} fold {fold_idx} step {step}: val {score:.4}");
            loss_sum = 0.0;
            loss_frames = 0;
        }
    }
    let validation = prediction_table(&model, data, &val_frames, task, cfg.threshold)?;
    let final_score = curve.last().map(|c| c.val_score);
    Ok(TrainOutcome {
        model,
        record: RunRecord {
            run,
            fold: fold_idx,
            curve,
            final_score,
            failure: None,
        },
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{recording, tier};
    use crate::corpus::folds::{make_folds_within, FoldOptions};
    use crate::corpus::Property;
    use crate::net::model::DecoderSpec;
    use crate::prosody::ProsodyTrack;
    use crate::textfeat::EmbeddingTable;
    use crate::training::{EncoderHyper, LossKind, Modality};

    /// Presence is exactly "energy column above zero". Blocks are longer than
    /// the audio window, so the majority sign inside a window decides.
    fn separable() -> Dataset {
        let n = 1000;
        let mut ivs = Vec::new();
        let mut rows = Vec::new();
        for block in 0..n / 50 {
            let on = block % 2 == 0;
            if on {
                ivs.push((block as f64 * 2.5, block as f64 * 2.5 + 2.5, "stroke"));
            }
            for _ in 0..50 {
                let e = if on { 1.0 } else { -1.0 };
                rows.push([0.0, 0.0, e, 0.0, 0.0]);
            }
        }
        let rec = recording(1, "a", n as f64 / 20.0, vec![tier("R.G.Left Phase", &ivs)]);
        let track = ProsodyTrack { fps: 20, rows };
        Dataset::from_tracks(&[rec], &[track], &EmbeddingTable::new(2)).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        let enc = EncoderHyper {
            layers: 1,
            channels: 4,
            kernel: 3,
            dropout: 0.0,
            embed_dim: 4,
        };
        TrainConfig {
            learning_rate: 3e-3,
            batch_size: 1000,
            steps: 6,
            eval_every: 1,
            seed: 5,
            audio: enc.clone(),
            text: enc,
            decoder: DecoderSpec {
                hidden: 8,
                layers: 1,
                dropout: 0.0,
            },
            ..TrainConfig::default()
        }
    }

    fn task() -> Task {
        Task {
            property: Property::Presence,
            modality: Modality::Audio,
            speaker_input: false,
        }
    }

    fn plan(d: &Dataset) -> crate::corpus::folds::FoldPlan {
        let opts = FoldOptions {
            edge_margin: 0,
            ..FoldOptions::default()
        };
        make_folds_within(&d.tables, 2, &opts).unwrap()
    }

    #[test]
    fn full_batch_loss_decreases() {
        let d = separable();
        let p = plan(&d);
        let out = train::<f64>(&d, &p.folds[0], &task(), &small_cfg(), 0, 0).unwrap();
        let losses: Vec<f64> = out.record.curve.iter().map(|c| c.train_loss).collect();
        assert_eq!(losses.len(), 6);
        for w in losses.windows(2).take(5) {
            assert!(w[1] < w[0], "{losses:?}");
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let d = separable();
        let p = plan(&d);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small_cfg()
        };
        let out = train::<f32>(&d, &p.folds[0], &task(), &cfg, 0, 0).unwrap();
        let mut init_spec = out.model.spec.clone();
        init_spec.audio_norm = out.model.spec.audio_norm.clone();
        let fresh = Model::<f32>::init(init_spec, derive_seed(cfg.seed, &[0, 0, 0])).unwrap();
        assert_eq!(fresh.params, out.model.params);
        let scores: Vec<f64> = out.record.curve.iter().map(|c| c.val_score).collect();
        assert!(scores.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_is_reproducible() {
        let d = separable();
        let p = plan(&d);
        let cfg = TrainConfig {
            batch_size: 32,
            steps: 20,
            upsample: true,
            loss: LossKind::ClassBalancedFocal {
                gamma: 1.0,
                beta: 0.99,
            },
            ..small_cfg()
        };
        let a = train::<f32>(&d, &p.folds[1], &task(), &cfg, 2, 1).unwrap();
        let b = train::<f32>(&d, &p.folds[1], &task(), &cfg, 2, 1).unwrap();
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.record, b.record);
    }

    #[test]
    fn separable_task_is_learned() {
        let d = separable();
        let p = plan(&d);
        let cfg = TrainConfig {
            batch_size: 32,
            steps: 150,
            eval_every: 0,
            learning_rate: 1e-2,
            ..small_cfg()
        };
        let out = train::<f32>(&d, &p.folds[0], &task(), &cfg, 0, 0).unwrap();
        assert!(out.record.final_score.unwrap() > 0.9, "{:?}", out.record);
    }

    #[test]
    fn divergence_is_reported() {
        let d = separable();
        let p = plan(&d);
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            steps: 3,
            ..small_cfg()
        };
        assert!(matches!(
            train::<f32>(&d, &p.folds[0], &task(), &cfg, 0, 0),
            Err(Error::Diverged { .. })
        ));
    }
}
