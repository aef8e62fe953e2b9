//! Random hyperparameter search scored by mean validation score across folds.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::trainer::{train, RunRecord};
use super::{EncoderHyper, Task, TrainConfig};
use crate::corpus::folds::FoldPlan;
use crate::error::{Error, Result};
use crate::net::Real;
use crate::util::{fmt_sig9, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperRanges {
    /// Inclusive range of conv layers per encoder.
    pub layers: (usize, usize),
    pub channels: Vec<usize>,
    pub kernel: Vec<usize>,
    pub dropout: (f64, f64),
    pub embed_dim: Vec<usize>,
    /// Inclusive range of decoder hidden units.
    pub decoder_hidden: (usize, usize),
    pub decoder_layers: (usize, usize),
    pub batch_size: Vec<usize>,
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
}

impl Default for HyperRanges {
    fn default() -> Self {
        Self {
            layers: (1, 4),
            channels: vec![16, 32, 64, 128],
            kernel: vec![3, 5],
            dropout: (0.0, 0.5),
            embed_dim: vec![16, 32, 64],
            decoder_hidden: (32, 256),
            decoder_layers: (1, 2),
            batch_size: vec![32, 64, 128],
            learning_rate: (1e-4, 1e-2),
        }
    }
}

impl HyperRanges {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("hyperparameter ranges: {m}")));
        if self.layers.0 == 0 || self.layers.0 > self.layers.1 {
            return bad("layers need 1 <= min <= max");
        }
        if self.channels.is_empty()
            || self.kernel.is_empty()
            || self.embed_dim.is_empty()
            || self.batch_size.is_empty()
        {
            return bad("choice sets must be non-empty");
        }
        if self.kernel.iter().any(|k| k % 2 == 0) {
            return bad("kernel sizes must be odd");
        }
        if !(0.0 <= self.dropout.0 && self.dropout.0 <= self.dropout.1 && self.dropout.1 < 1.0) {
            return bad("dropout needs 0 <= min <= max < 1");
        }
        if self.decoder_hidden.0 == 0 || self.decoder_hidden.0 > self.decoder_hidden.1 {
            return bad("decoder hidden needs 1 <= min <= max");
        }
        if self.decoder_layers.0 > self.decoder_layers.1 {
            return bad("decoder layers need min <= max");
        }
        if !(0.0 < self.learning_rate.0 && self.learning_rate.0 <= self.learning_rate.1) {
            return bad("learning rate needs 0 < min <= max");
        }
        Ok(())
    }

    fn encoder(&self, rng: &mut ChaCha8Rng) -> EncoderHyper {
        EncoderHyper {
            layers: rng.gen_range(self.layers.0..=self.layers.1),
            channels: *self.channels.choose(rng).expect("non-empty"),
            kernel: *self.kernel.choose(rng).expect("non-empty"),
            dropout: uniform(rng, self.dropout),
            embed_dim: *self.embed_dim.choose(rng).expect("non-empty"),
        }
    }

    /// A copy of `base` with every searched hyperparameter resampled.
    pub fn sample(&self, base: &TrainConfig, rng: &mut ChaCha8Rng) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.audio = self.encoder(rng);
        cfg.text = self.encoder(rng);
        cfg.decoder.hidden = rng.gen_range(self.decoder_hidden.0..=self.decoder_hidden.1);
        cfg.decoder.layers = rng.gen_range(self.decoder_layers.0..=self.decoder_layers.1);
        cfg.decoder.dropout = uniform(rng, self.dropout);
        cfg.batch_size = *self.batch_size.choose(rng).expect("non-empty");
        let (lo, hi) = (self.learning_rate.0.ln(), self.learning_rate.1.ln());
        cfg.learning_rate = uniform(rng, (lo, hi)).exp();
        cfg
    }
}

fn uniform(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
    if b > a {
        rng.gen_range(a..b)
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRun {
    pub run: usize,
    pub config: TrainConfig,
    /// Mean final validation score over folds; `None` when any fold failed.
    pub score: Option<f64>,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_run: usize,
    pub best_score: f64,
    pub best: TrainConfig,
    pub runs: Vec<SearchRun>,
}

impl SearchResult {
    /// `run,fold,step,val_macro_f1,train_loss`, one row per curve point.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("run,fold,step,val_macro_f1,train_loss\n");
        for r in &self.runs {
            for rec in &r.records {
                for p in &rec.curve {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        rec.run,
                        rec.fold,
                        p.step,
                        fmt_sig9(p.val_score),
                        fmt_sig9(p.train_loss)
                    ));
                }
            }
        }
        out
    }
}

/// Samples `n` configurations, trains each on every fold (in parallel), and
/// returns the one with the highest mean validation score. Ties go to the
/// earlier run.
pub fn random_search<T: Real>(
    data: &Dataset,
    plan: &FoldPlan,
    task: &Task,
    base: &TrainConfig,
    ranges: &HyperRanges,
    n: usize,
    seed: u64,
) -> Result<SearchResult> {
    ranges.validate()?;
    if n == 0 {
        return Err(Error::Config("random search needs at least one run".into()));
    }
    let configs: Vec<TrainConfig> = (0..n)
        .map(|run| {
            let mut cfg = ranges.sample(base, &mut rng_for(seed, &[run as u64]));
            cfg.seed = seed;
            cfg
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..n)
        .flat_map(|r| (0..plan.len()).map(move |f| (r, f)))
        .collect();
    let results: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(run, fold)| {
            match train::<T>(data, &plan.folds[fold], task, &configs[run], run, fold) {
                Ok(o) => o.record,
                Err(e) => {
                    log::warn!("search run {run} fold {fold} failed: {e}");
                    RunRecord {
                        run,
                        fold,
                        curve: Vec::new(),
                        final_score: None,
                        failure: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let mut runs: Vec<SearchRun> = configs
        .into_iter()
        .enumerate()
        .map(|(run, config)| SearchRun {
            run,
            config,
            score: None,
            records: Vec::new(),
        })
        .collect();
    for rec in results {
        runs[rec.run].records.push(rec);
    }
    let mut best: Option<(usize, f64)> = None;
    for r in &mut runs {
        let scores: Option<Vec<f64>> = r.records.iter().map(|x| x.final_score).collect();
        r.score = scores.map(|s| s.iter().sum::<f64>() / s.len().max(1) as f64);
        if let Some(s) = r.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((r.run, s));
            }
        }
    }
    let (best_run, best_score) = best.ok_or(Error::AllRunsFailed(n))?;
    Ok(SearchResult {
        best_run,
        best_score,
        best: runs[best_run].config.clone(),
        runs,
    })
}
