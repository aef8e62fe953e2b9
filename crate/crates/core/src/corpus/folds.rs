//! Cross-validation fold plans over frame tables.
//!
//! Within-speaker plans cut each speaker's eligible frames into `k` contiguous
//! blocks; fold `j` validates on block `j` of every speaker. A training frame
//! is dropped from fold `j` when its model input (audio context or text
//! window) reaches into a validation block of the same recording.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FrameTable;
use crate::error::{Error, Result};
use crate::prosody::FPS;
use crate::textfeat::select_window;

/// Half-open frame range `[start, end)` in table `table`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub table: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    /// Speaker whose frames are validated (between-speaker plans only).
    pub held_out_speaker: Option<String>,
    pub validation: Vec<Segment>,
    pub training: Vec<Segment>,
    /// Eligible frames neither validated nor trained on in this fold.
    pub excluded: Vec<Segment>,
}

impl Fold {
    pub fn validation_frames(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        expand(&self.validation)
    }

    pub fn training_frames(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        expand(&self.training)
    }

    pub fn n_validation(&self) -> usize {
        self.validation.iter().map(Segment::len).sum()
    }

    pub fn n_training(&self) -> usize {
        self.training.iter().map(Segment::len).sum()
    }
}

fn expand(segs: &[Segment]) -> impl Iterator<Item = (usize, usize)> + '_ {
    segs.iter()
        .flat_map(|s| (s.start..s.end).map(move |f| (s.table, f)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldOptions {
    /// Frames this close to either end of a recording are never used.
    pub edge_margin: usize,
    /// Audio context on each side of the target frame.
    pub audio_half_window: usize,
    /// Whether the seven-word text window counts as model input.
    pub text_window: bool,
}

impl Default for FoldOptions {
    fn default() -> Self {
        Self {
            edge_margin: 20,
            audio_half_window: 20,
            text_window: true,
        }
    }
}

fn eligible(table: &FrameTable, opts: &FoldOptions) -> std::ops::Range<usize> {
    let lo = opts.edge_margin.min(table.n_frames);
    let hi = table.n_frames.saturating_sub(opts.edge_margin).max(lo);
    lo..hi
}

/// Inclusive frame span read by the model when predicting `frame`.
fn input_extent(table: &FrameTable, frame: usize, opts: &FoldOptions) -> (usize, usize) {
    let mut lo = frame.saturating_sub(opts.audio_half_window);
    let mut hi = (frame + opts.audio_half_window).min(table.n_frames.saturating_sub(1));
    if opts.text_window && !table.words.is_empty() {
        let slots = select_window(&table.words, table.time(frame));
        let fps = f64::from(FPS);
        if let Some(first) = slots.iter().flatten().next() {
            let f = (table.words[*first].onset * fps).floor().max(0.0) as usize;
            lo = lo.min(f);
        }
        if let Some(last) = slots.iter().flatten().last() {
            let f = (table.words[*last].offset * fps).ceil() as usize;
            hi = hi.max(f.min(table.n_frames.saturating_sub(1)));
        }
    }
    (lo, hi)
}

/// Converts a sorted list of frames into maximal contiguous segments.
fn to_segments(table: usize, frames: impl IntoIterator<Item = usize>) -> Vec<Segment> {
    let mut segs: Vec<Segment> = Vec::new();
    for f in frames {
        match segs.last_mut() {
            Some(s) if s.end == f => s.end += 1,
            _ => segs.push(Segment {
                table,
                start: f,
                end: f + 1,
            }),
        }
    }
    segs
}

/// Splits training candidates into kept and excluded given per-table
/// validation masks.
fn split_training(
    tables: &[FrameTable],
    candidates: &[bool],
    offsets: &[usize],
    validation_mask: &[bool],
    opts: &FoldOptions,
) -> (Vec<Segment>, Vec<Segment>) {
    let mut training = Vec::new();
    let mut excluded = Vec::new();
    for (ti, table) in tables.iter().enumerate() {
        let base = offsets[ti];
        let n = table.n_frames;
        let mask = &validation_mask[base..base + n];
        let mut prefix = vec![0usize; n + 1];
        for f in 0..n {
            prefix[f + 1] = prefix[f] + usize::from(mask[f]);
        }
        let mut keep = Vec::new();
        let mut drop = Vec::new();
        for f in eligible(table, opts) {
            if !candidates[base + f] || mask[f] {
                continue;
            }
            let (lo, hi) = input_extent(table, f, opts);
            if prefix[hi + 1] - prefix[lo] > 0 {
                drop.push(f);
            } else {
                keep.push(f);
            }
        }
        training.extend(to_segments(ti, keep));
        excluded.extend(to_segments(ti, drop));
    }
    (training, excluded)
}

fn speakers(tables: &[FrameTable]) -> BTreeMap<&str, Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in tables.iter().enumerate() {
        map.entry(t.speaker.as_str()).or_default().push(i);
    }
    map
}

fn offsets(tables: &[FrameTable]) -> (Vec<usize>, usize) {
    let mut offs = Vec::with_capacity(tables.len());
    let mut total = 0;
    for t in tables {
        offs.push(total);
        total += t.n_frames;
    }
    (offs, total)
}

/// `k` within-speaker folds of contiguous blocks.
pub fn make_folds_within(tables: &[FrameTable], k: usize, opts: &FoldOptions) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Folds(format!("need at least 2 folds, got {k}")));
    }
    let (offs, total) = offsets(tables);
    // block_of[global frame] = Some(fold) for eligible frames.
    let mut block_of: Vec<Option<usize>> = vec![None; total];
    for (speaker, idxs) in speakers(tables) {
        let seq: Vec<(usize, usize)> = idxs
            .iter()
            .flat_map(|&ti| eligible(&tables[ti], opts).map(move |f| (ti, f)))
            .collect();
        let m = seq.len();
        if m < k {
            return Err(Error::Folds(format!(
                "speaker `{speaker}` has {m} eligible frames, fewer than {k} folds"
            )));
        }
        let (base, extra) = (m / k, m % k);
        let mut pos = 0;
        for j in 0..k {
            let size = base + usize::from(j < extra);
            for &(ti, f) in &seq[pos..pos + size] {
                block_of[offs[ti] + f] = Some(j);
            }
            pos += size;
        }
    }

    let candidates: Vec<bool> = block_of.iter().map(Option::is_some).collect();
    let folds = (0..k)
        .map(|j| {
            let mask: Vec<bool> = block_of.iter().map(|b| *b == Some(j)).collect();
            let validation = tables
                .iter()
                .enumerate()
                .flat_map(|(ti, t)| {
                    let base = offs[ti];
                    to_segments(ti, (0..t.n_frames).filter(|&f| mask[base + f]))
                })
                .collect();
            let (training, excluded) = split_training(tables, &candidates, &offs, &mask, opts);
            Fold {
                held_out_speaker: None,
                validation,
                training,
                excluded,
            }
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// One fold per speaker: that speaker validates, everyone else trains.
pub fn make_folds_between(tables: &[FrameTable], opts: &FoldOptions) -> Result<FoldPlan> {
    let by_speaker = speakers(tables);
    if by_speaker.len() < 2 {
        return Err(Error::Folds(format!(
            "hold-one-speaker-out needs at least 2 speakers, found {}",
            by_speaker.len()
        )));
    }
    let folds = by_speaker
        .iter()
        .map(|(speaker, idxs)| {
            let mut validation = Vec::new();
            let mut training = Vec::new();
            for (ti, t) in tables.iter().enumerate() {
                let seg = to_segments(ti, eligible(t, opts));
                if idxs.contains(&ti) {
                    validation.extend(seg);
                } else {
                    training.extend(seg);
                }
            }
            Fold {
                held_out_speaker: Some(speaker.to_string()),
                validation,
                training,
                excluded: Vec::new(),
            }
        })
        .collect();
    Ok(FoldPlan { folds })
}
