//! Per-frame model inputs assembled from prosody tracks, transcripts and labels.

use rayon::prelude::*;

use super::Modality;
use crate::corpus::{build_frame_table, FrameTable, Property, Recording};
use crate::error::Result;
use crate::net::model::Standardize;
use crate::net::{Batch, Real, Tensor};
use crate::prosody::{extract_prosody, silence_intervals, ProsodyTrack, N_FEATURES};
use crate::textfeat::{select_window, EmbeddingTable, SLOTS};

pub const AUDIO_HALF_WINDOW: usize = 20;
pub const AUDIO_FRAMES: usize = 2 * AUDIO_HALF_WINDOW + 1;

/// `(recording index, frame index)`
pub type FrameRef = (usize, usize);

#[derive(Debug, Clone)]
pub struct RecordingData {
    pub prosody: Vec<[f32; N_FEATURES]>,
    /// Embedding per transcript word; zeros for out-of-vocabulary words.
    pub word_vectors: Vec<Vec<f32>>,
    pub speaker: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub tables: Vec<FrameTable>,
    pub recs: Vec<RecordingData>,
    pub dim: usize,
    /// Sorted speaker names; `RecordingData::speaker` indexes this.
    pub speakers: Vec<String>,
}

/// Prosody for a recording with interlocutor speech silenced first.
pub fn recording_prosody(rec: &Recording) -> Result<ProsodyTrack> {
    let clip = rec.load_audio()?;
    if rec.interlocutor.is_empty() {
        Ok(extract_prosody(&clip))
    } else {
        Ok(extract_prosody(&silence_intervals(
            &clip,
            &rec.interlocutor,
        )))
    }
}

impl Dataset {
    /// Extracts prosody (in parallel) and builds frame tables.
    pub fn build(recordings: &[Recording], embeddings: &EmbeddingTable) -> Result<Self> {
        let tracks = recordings
            .par_iter()
            .map(recording_prosody)
            .collect::<Result<Vec<_>>>()?;
        Self::from_tracks(recordings, &tracks, embeddings)
    }

    pub fn from_tracks(
        recordings: &[Recording],
        tracks: &[ProsodyTrack],
        embeddings: &EmbeddingTable,
    ) -> Result<Self> {
        let mut speakers: Vec<String> = recordings.iter().map(|r| r.speaker.clone()).collect();
        speakers.sort();
        speakers.dedup();
        let mut tables = Vec::with_capacity(recordings.len());
        let mut recs = Vec::with_capacity(recordings.len());
        for (rec, track) in recordings.iter().zip(tracks) {
            let table = build_frame_table(rec)?;
            let mut prosody: Vec<[f32; N_FEATURES]> = track
                .rows
                .iter()
                .take(table.n_frames)
                .map(|r| r.map(|v| v as f32))
                .collect();
            if prosody.len() < table.n_frames {
                log::warn!(
                    "recording {}: prosody has {} frames, labels {}; padding",
                    rec.id,
                    prosody.len(),
                    table.n_frames
                );
                prosody.resize(table.n_frames, [0.0; N_FEATURES]);
            }
            let word_vectors = rec
                .words
                .iter()
                .map(|w| embeddings.embed_word(&w.word))
                .collect();
            let speaker = speakers
                .binary_search(&rec.speaker)
                .expect("speaker listed");
            tables.push(table);
            recs.push(RecordingData {
                prosody,
                word_vectors,
                speaker,
            });
        }
        Ok(Self {
            tables,
            recs,
            dim: embeddings.dim(),
            speakers,
        })
    }

    /// Whether a frame takes part in training and evaluation for `property`:
    /// presence uses every frame, properties only gesture frames, and phase
    /// additionally needs a phase label.
    pub fn eligible(&self, property: Property, (r, f): FrameRef) -> bool {
        let t = &self.tables[r];
        match property {
            Property::Presence => true,
            Property::Phase => {
                t.has_gesture[f] != 0 && t.label_row(Property::Phase, f).iter().any(|&b| b != 0)
            }
            Property::Category | Property::Semantics => t.has_gesture[f] != 0,
        }
    }

    pub fn labels(&self, property: Property, (r, f): FrameRef) -> &[u8] {
        let t = &self.tables[r];
        match property {
            Property::Presence => &t.has_gesture[f..f + 1],
            p => t.label_row(p, f),
        }
    }

    pub fn truth(&self, property: Property, frames: &[FrameRef]) -> Vec<u8> {
        frames
            .iter()
            .flat_map(|&fr| self.labels(property, fr).iter().copied())
            .collect()
    }

    pub fn filter(
        &self,
        property: Property,
        frames: impl IntoIterator<Item = FrameRef>,
    ) -> Vec<FrameRef> {
        frames
            .into_iter()
            .filter(|&fr| self.eligible(property, fr))
            .collect()
    }

    /// Per-feature mean and standard deviation over the given frames.
    pub fn audio_stats(&self, frames: &[FrameRef]) -> Standardize {
        let n = frames.len().max(1) as f64;
        let mut mean = vec![0.0; N_FEATURES];
        for &(r, f) in frames {
            for (m, &v) in mean.iter_mut().zip(&self.recs[r].prosody[f]) {
                *m += f64::from(v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; N_FEATURES];
        for &(r, f) in frames {
            for ((s, &v), m) in var.iter_mut().zip(&self.recs[r].prosody[f]).zip(&mean) {
                *s += (f64::from(v) - m).powi(2);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(1e-3)).collect();
        Standardize { mean, std }
    }

    fn fill_audio<T: Real>(&self, (r, f): FrameRef, out: &mut [T]) {
        let rows = &self.recs[r].prosody;
        for (k, chunk) in out.chunks_mut(N_FEATURES).enumerate() {
            let src = f as isize + k as isize - AUDIO_HALF_WINDOW as isize;
            if src >= 0 && (src as usize) < rows.len() {
                for (o, &v) in chunk.iter_mut().zip(&rows[src as usize]) {
                    *o = T::of(f64::from(v));
                }
            } else {
                chunk.iter_mut().for_each(|o| *o = T::zero());
            }
        }
    }

    fn fill_text<T: Real>(&self, (r, f): FrameRef, timing: bool, out: &mut [T]) {
        let table = &self.tables[r];
        let t = table.time(f);
        let width = self.dim + 1;
        out.iter_mut().for_each(|o| *o = T::zero());
        for (slot, idx) in select_window(&table.words, t).into_iter().enumerate() {
            let Some(i) = idx else { continue };
            let row = &mut out[slot * width..(slot + 1) * width];
            for (o, &v) in row.iter_mut().zip(&self.recs[r].word_vectors[i]) {
                *o = T::of(f64::from(v));
            }
            if timing {
                row[self.dim] = T::of(table.words[i].onset - t);
            }
        }
    }

    pub fn batch<T: Real>(
        &self,
        frames: &[FrameRef],
        modality: Modality,
        speakers: bool,
    ) -> Batch<T> {
        let b = frames.len();
        let audio = modality.uses_audio().then(|| {
            let mut t = Tensor::zeros(&[b, AUDIO_FRAMES, N_FEATURES]);
            for (fr, chunk) in frames
                .iter()
                .zip(t.data.chunks_mut(AUDIO_FRAMES * N_FEATURES))
            {
                self.fill_audio(*fr, chunk);
            }
            t
        });
        let text = modality.uses_text().then(|| {
            let width = self.dim + 1;
            let mut t = Tensor::zeros(&[b, SLOTS, width]);
            let timing = modality != Modality::TextNoTiming;
            for (fr, chunk) in frames.iter().zip(t.data.chunks_mut(SLOTS * width)) {
                self.fill_text(*fr, timing, chunk);
            }
            t
        });
        let speaker = speakers.then(|| {
            let s = self.speakers.len();
            let mut t = Tensor::zeros(&[b, s]);
            for (i, &(r, _)) in frames.iter().enumerate() {
                t.data[i * s + self.recs[r].speaker] = T::one();
            }
            t
        });
        Batch {
            size: b,
            audio,
            text,
            speaker,
        }
    }
}
