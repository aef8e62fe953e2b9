//! Recordings, frame-level label rasterization, fold plans and the synthetic
//! corpus generator.

pub mod folds;
pub mod io;
pub mod schema;
pub mod synth;

use std::path::PathBuf;
use std::sync::Arc;

use crate::error::Result;
use crate::prosody::{wav, AudioClip, FPS};
use crate::textfeat::WordToken;

pub use folds::{make_folds_between, make_folds_within, Fold, FoldOptions, FoldPlan, Segment};
pub use schema::{encode_labels, Property, PropertySchema};

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTier {
    pub name: String,
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Clone)]
pub enum AudioRef {
    File(PathBuf),
    Memory(Arc<AudioClip>),
}

#[derive(Debug, Clone)]
pub struct Recording {
    pub id: u32,
    pub speaker: String,
    pub audio: AudioRef,
    pub duration: f64,
    pub sample_rate: u32,
    pub words: Vec<WordToken>,
    pub tiers: Vec<AnnotationTier>,
    pub interlocutor: Vec<(f64, f64)>,
}

impl Recording {
    pub fn load_audio(&self) -> Result<Arc<AudioClip>> {
        match &self.audio {
            AudioRef::Memory(clip) => Ok(Arc::clone(clip)),
            AudioRef::File(path) => wav::read_wav(path).map(Arc::new),
        }
    }

    /// `floor(duration * 20)`, computed from the sample count.
    pub fn frame_count(&self) -> usize {
        let samples = (self.duration * f64::from(self.sample_rate)).round() as u64;
        (samples * u64::from(FPS) / u64::from(self.sample_rate)) as usize
    }
}

/// Frame-level view of one recording on the 20 fps grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTable {
    pub recording_id: u32,
    pub speaker: String,
    pub n_frames: usize,
    /// `n_frames x 5`, one-hot or zero rows.
    pub phase: Vec<u8>,
    /// `n_frames x 4`.
    pub category: Vec<u8>,
    /// `n_frames x 4`.
    pub semantics: Vec<u8>,
    pub has_gesture: Vec<u8>,
    pub words: Vec<WordToken>,
    pub interlocutor: Vec<(f64, f64)>,
}

impl FrameTable {
    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 / f64::from(FPS)
    }

    /// Row-major label matrix and its width for `property`.
    pub fn labels(&self, property: Property) -> (&[u8], usize) {
        match property {
            Property::Presence => (&self.has_gesture, 1),
            Property::Phase => (&self.phase, schema::PHASE_LABELS.len()),
            Property::Category => (&self.category, schema::CATEGORY_LABELS.len()),
            Property::Semantics => (&self.semantics, schema::SEMANTICS_LABELS.len()),
        }
    }

    pub fn label_row(&self, property: Property, frame: usize) -> &[u8] {
        let (data, w) = self.labels(property);
        &data[frame * w..(frame + 1) * w]
    }

    /// Per-label positive counts.
    pub fn label_counts(&self, property: Property) -> Vec<usize> {
        let (data, w) = self.labels(property);
        let mut counts = vec![0; w];
        for row in data.chunks(w) {
            for (c, &b) in counts.iter_mut().zip(row) {
                *c += usize::from(b);
            }
        }
        counts
    }

    pub fn gesture_frames(&self) -> usize {
        self.has_gesture.iter().filter(|&&b| b != 0).count()
    }

    /// CSV with one row per frame: all 13 label bits and `has_gesture`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("recording,speaker,frame,t,has_gesture");
        for p in Property::ANNOTATED {
            for l in p.schema().labels {
                out.push_str(&format!(",{}.{}", p.name(), l));
            }
        }
        out.push('\n');
        for f in 0..self.n_frames {
            out.push_str(&format!(
                "{},{},{},{},{}",
                self.recording_id,
                self.speaker,
                f,
                self.time(f),
                self.has_gesture[f]
            ));
            for p in Property::ANNOTATED {
                for b in self.label_row(p, f) {
                    out.push_str(&format!(",{b}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Frames covered by `[start, end)`: those with `start <= f / 20 < end`.
fn covered_frames(start: f64, end: f64, n_frames: usize) -> std::ops::Range<usize> {
    let fps = f64::from(FPS);
    let mut lo = (start * fps).floor().max(0.0) as usize;
    while lo < n_frames && (lo as f64 / fps) < start {
        lo += 1;
    }
    let mut hi = ((end * fps).ceil().max(0.0) as usize).min(n_frames);
    while hi > lo && ((hi - 1) as f64 / fps) >= end {
        hi -= 1;
    }
    lo..hi.max(lo)
}

/// Rasterizes every tier of `schema.property` onto `n_frames` frames, OR-merging
/// hands. Exclusive schemas keep the highest-precedence label per frame.
pub fn rasterize(rec: &Recording, schema: &PropertySchema) -> Result<Vec<u8>> {
    rasterize_frames(rec, schema, rec.frame_count())
}

fn rasterize_frames(rec: &Recording, schema: &PropertySchema, n_frames: usize) -> Result<Vec<u8>> {
    let w = schema.width();
    let mut out = vec![0u8; n_frames * w];
    let mut conflicts = 0usize;
    for tier in &rec.tiers {
        let Some((property, _hand)) = schema::classify_tier(&tier.name) else {
            continue;
        };
        if property != schema.property {
            continue;
        }
        for iv in &tier.intervals {
            let bits = encode_labels(&iv.label, schema, &tier.name)?;
            if bits.iter().all(|&b| b == 0) {
                continue;
            }
            for f in covered_frames(iv.start, iv.end, n_frames) {
                let row = &mut out[f * w..(f + 1) * w];
                for (r, b) in row.iter_mut().zip(&bits) {
                    *r |= b;
                }
                if schema.exclusive && schema::resolve_exclusive(row) {
                    conflicts += 1;
                }
            }
        }
    }
    if conflicts > 0 {
        log::debug!(
            "recording {}: resolved {conflicts} {} conflicts by precedence",
            rec.id,
            schema.property
        );
    }
    Ok(out)
}

pub fn build_frame_table(rec: &Recording) -> Result<FrameTable> {
    let n = rec.frame_count();
    for tier in &rec.tiers {
        for iv in &tier.intervals {
            if iv.start < 0.0 || iv.end > rec.duration + 1e-9 {
                log::warn!(
                    "recording {}: interval [{:.3}, {:.3}] in tier `{}` exceeds duration {:.3}; clipping",
                    rec.id,
                    iv.start,
                    iv.end,
                    tier.name,
                    rec.duration
                );
            }
        }
    }
    let phase = rasterize_frames(rec, &Property::Phase.schema(), n)?;
    let category = rasterize_frames(rec, &Property::Category.schema(), n)?;
    let semantics = rasterize_frames(rec, &Property::Semantics.schema(), n)?;
    let has_gesture = (0..n)
        .map(|f| {
            let any = phase[f * 5..f * 5 + 5]
                .iter()
                .chain(&category[f * 4..f * 4 + 4])
                .chain(&semantics[f * 4..f * 4 + 4])
                .any(|&b| b != 0);
            u8::from(any)
        })
        .collect();
    Ok(FrameTable {
        recording_id: rec.id,
        speaker: rec.speaker.clone(),
        n_frames: n,
        phase,
        category,
        semantics,
        has_gesture,
        words: rec.words.clone(),
        interlocutor: rec.interlocutor.clone(),
    })
}

/// Splits recordings into the working set and the held-out set.
pub fn apply_holdout(
    recordings: Vec<Recording>,
    holdout: &[u32],
) -> (Vec<Recording>, Vec<Recording>) {
    for id in holdout {
        if !recordings.iter().any(|r| r.id == *id) {
            log::warn!("holdout recording {id} is not in the corpus; ignoring");
        }
    }
    recordings
        .into_iter()
        .partition(|r| !holdout.contains(&r.id))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn tier(name: &str, ivs: &[(f64, f64, &str)]) -> AnnotationTier {
        AnnotationTier {
            name: name.to_string(),
            intervals: ivs
                .iter()
                .map(|&(start, end, label)| Interval {
                    start,
                    end,
                    label: label.to_string(),
                })
                .collect(),
        }
    }

    pub fn recording(
        id: u32,
        speaker: &str,
        duration: f64,
        tiers: Vec<AnnotationTier>,
    ) -> Recording {
        let sr = 16_000;
        let clip = AudioClip::silent(duration, sr).unwrap();
        Recording {
            id,
            speaker: speaker.to_string(),
            audio: AudioRef::Memory(Arc::new(clip)),
            duration,
            sample_rate: sr,
            words: Vec::new(),
            tiers,
            interlocutor: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn or_merge_across_hands() {
        let rec = recording(
            1,
            "a",
            1.0,
            vec![
                tier("R.G.Left Phrase", &[(0.2, 0.5, "iconic")]),
                tier("R.G.Right Phrase", &[(0.3, 0.6, "beat")]),
            ],
        );
        let cat = rasterize(&rec, &Property::Category.schema()).unwrap();
        assert_eq!(&cat[6 * 4..7 * 4], &[0, 1, 1, 0]);
        assert_eq!(&cat[4 * 4..5 * 4], &[0, 0, 1, 0]);
        assert_eq!(&cat[15 * 4..16 * 4], &[0, 0, 0, 0]);
    }

    #[test]
    fn phase_precedence_across_hands() {
        let rec = recording(
            1,
            "a",
            1.0,
            vec![
                tier("R.G.Left Phase", &[(0.0, 0.5, "stroke")]),
                tier("R.G.Right.Phase", &[(0.25, 0.75, "preparation")]),
            ],
        );
        let ph = rasterize(&rec, &Property::Phase.schema()).unwrap();
        // Frame 6 (t = 0.30) is covered by both: stroke wins.
        assert_eq!(&ph[6 * 5..7 * 5], &[0, 0, 0, 1, 0]);
        // Frame 12 (t = 0.60) only preparation.
        assert_eq!(&ph[12 * 5..13 * 5], &[0, 1, 0, 0, 0]);
    }

    /// Ten-frame fixture with one 0.25 s stroke-iconic gesture, counted by hand.
    #[test]
    fn ten_frame_fixture() {
        let rec = recording(
            3,
            "s",
            0.5,
            vec![
                tier("R.G.Left Phase", &[(0.1, 0.35, "stroke")]),
                tier("R.G.Left Phrase", &[(0.1, 0.35, "iconic")]),
            ],
        );
        let t = build_frame_table(&rec).unwrap();
        assert_eq!(t.n_frames, 10);
        assert_eq!(t.has_gesture, vec![0, 0, 1, 1, 1, 1, 1, 0, 0, 0]);
        assert_eq!(t.label_counts(Property::Phase), vec![0, 0, 0, 5, 0]);
        assert_eq!(t.label_counts(Property::Category), vec![0, 0, 5, 0]);
        assert_eq!(t.label_counts(Property::Semantics), vec![0; 4]);
        assert_eq!(t.gesture_frames(), 5);
    }

    #[test]
    fn empty_annotations() {
        let t = build_frame_table(&recording(1, "a", 2.0, vec![])).unwrap();
        assert_eq!(t.n_frames, 40);
        assert!(t.has_gesture.iter().all(|&b| b == 0));
    }

    #[test]
    fn out_of_range_interval_is_clipped() {
        let rec = recording(
            1,
            "a",
            1.0,
            vec![tier("R.G.Left Semantic", &[(0.9, 3.0, "shape")])],
        );
        let t = build_frame_table(&rec).unwrap();
        assert_eq!(t.label_counts(Property::Semantics), vec![0, 2, 0, 0]);
    }

    #[test]
    fn holdout_split() {
        let recs: Vec<Recording> = (1..=25).map(|i| recording(i, "a", 0.1, vec![])).collect();
        let (work, held) = apply_holdout(recs.clone(), &[7, 8, 10]);
        assert_eq!(work.len(), 22);
        assert_eq!(
            held.iter().map(|r| r.id).collect::<Vec<_>>(),
            vec![7, 8, 10]
        );
        let (work, held) = apply_holdout(recs.clone(), &[]);
        assert_eq!((work.len(), held.len()), (25, 0));
        let (work, _) = apply_holdout(recs, &[99]);
        assert_eq!(work.len(), 25);
    }

    #[test]
    fn csv_has_all_label_columns() {
        let t = build_frame_table(&recording(1, "a", 0.1, vec![])).unwrap();
        let csv = t.to_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 5 + 13);
        assert_eq!(csv.lines().count(), 3);
    }

    fn arb_tier(
        name: &'static str,
        labels: &'static [&'static str],
    ) -> impl Strategy<Value = AnnotationTier> {
        prop::collection::vec(
            (0.0f64..3.0, 0.05f64..1.0, prop::sample::select(labels)),
            0..6,
        )
        .prop_map(move |ivs| AnnotationTier {
            name: name.to_string(),
            intervals: ivs
                .into_iter()
                .map(|(s, d, l)| Interval {
                    start: s,
                    end: s + d,
                    label: l.to_string(),
                })
                .collect(),
        })
    }

    const PHASES: &[&str] = &[
        "stroke",
        "preparation",
        "pre-hold",
        "post-hold",
        "retraction",
        "stroke-retraction",
    ];
    const CATS: &[&str] = &["beat", "iconic", "beat-iconic", "deictic-discourse"];

    proptest! {
        #[test]
        fn raster_invariants(
            left in arb_tier("R.G.Left Phase", PHASES),
            right in arb_tier("R.G.Right Phase", PHASES),
            cat in arb_tier("R.G.Left Phrase", CATS),
        ) {
            let rec = recording(1, "a", 3.0, vec![left.clone(), right.clone(), cat.clone()]);
            let t = build_frame_table(&rec).unwrap();
            for f in 0..t.n_frames {
                let ph = t.label_row(Property::Phase, f);
                prop_assert!(ph.iter().map(|&b| b as usize).sum::<usize>() <= 1);
                let any = Property::ANNOTATED.iter().any(|&p| t.label_row(p, f).iter().any(|&b| b != 0));
                prop_assert_eq!(t.has_gesture[f] != 0, any);
            }
            // Tier order does not matter and rasterization is idempotent.
            let swapped = recording(1, "a", 3.0, vec![cat, right, left]);
            let t2 = build_frame_table(&swapped).unwrap();
            prop_assert_eq!(&t.phase, &t2.phase);
            prop_assert_eq!(&t.category, &t2.category);
            prop_assert_eq!(build_frame_table(&rec).unwrap(), t);
        }
    }
}
