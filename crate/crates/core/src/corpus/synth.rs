//! Synthetic corpora with planted speech-gesture couplings.
//!
//! Speech is rendered as a sequence of harmonic tones, one per word, with
//! occasional pauses. Two coupling rules can be planted:
//!
//! * text: a gesture carrying a semantics label is active for `half_width_s`
//!   around the onset of every trigger word (left-hand tiers);
//! * audio: loud voiced bursts are added at random times, and each burst is the
//!   stroke of a preparation/stroke/retraction gesture (right-hand tiers).
//!
//! Trigger words are indistinguishable from other words in the audio, and the
//! burst times are drawn independently of the words, so each coupling is
//! visible to exactly one modality. Everything is a deterministic function of
//! the `SynthSpec` and the seed.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{annotations_to_text, intervals_to_text, ManifestEntry};
use super::{AnnotationTier, AudioRef, Interval, Recording};
use crate::error::{Error, Result};
use crate::prosody::{wav, AudioClip};
use crate::textfeat::{transcript_to_text, EmbeddingTable, WordToken};
use crate::util::{rng_for, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextCoupling {
    /// Trigger words as they appear in transcripts.
    pub triggers: Vec<String>,
    /// Probability that a word is replaced by a trigger.
    pub trigger_prob: f64,
    pub semantics: String,
    pub category: String,
    pub half_width_s: f64,
    /// Probability that a non-trigger word gets an uncoupled decoy gesture of
    /// the same shape but without the semantics label.
    pub decoy_prob: f64,
    pub decoy_category: String,
}

impl Default for TextCoupling {
    fn default() -> Self {
        Self {
            triggers: vec!["Turm".into(), "Brunnen".into(), "Kirche".into()],
            trigger_prob: 0.08,
            semantics: "shape".into(),
            category: "iconic".into(),
            half_width_s: 0.3,
            decoy_prob: 0.08,
            decoy_category: "iconic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioCoupling {
    pub bursts_per_minute: f64,
    pub burst_s: (f64, f64),
    pub burst_amplitude: f64,
    pub preparation_s: (f64, f64),
    pub retraction_s: (f64, f64),
    pub category: String,
}

impl Default for AudioCoupling {
    fn default() -> Self {
        Self {
            bursts_per_minute: 10.0,
            burst_s: (0.4, 0.7),
            burst_amplitude: 0.6,
            preparation_s: (0.35, 0.6),
            retraction_s: (0.35, 0.6),
            category: "beat".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub speakers: usize,
    pub recordings_per_speaker: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub vocabulary: usize,
    pub embedding_dim: usize,
    pub word_s: (f64, f64),
    pub pause_prob: f64,
    pub pause_s: (f64, f64),
    /// Interlocutor turns per minute; their audio is mixed in and listed in the
    /// interlocutor file.
    pub interlocutor_per_minute: f64,
    pub text: Option<TextCoupling>,
    pub audio: Option<AudioCoupling>,
    /// Probability that a planted gesture is moved to a random time instead.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            speakers: 8,
            recordings_per_speaker: 1,
            duration_s: 120.0,
            sample_rate: 16_000,
            vocabulary: 60,
            embedding_dim: 300,
            word_s: (0.2, 0.45),
            pause_prob: 0.1,
            pause_s: (0.1, 0.4),
            interlocutor_per_minute: 0.0,
            text: Some(TextCoupling::default()),
            audio: Some(AudioCoupling::default()),
            noise: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn text_only() -> Self {
        Self {
            audio: None,
            ..Self::default()
        }
    }

    pub fn audio_only() -> Self {
        Self {
            text: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SynthSpec(m));
        let range_ok = |(a, b): (f64, f64)| a > 0.0 && a <= b;
        if self.speakers == 0 || self.recordings_per_speaker == 0 {
            return bad("need at least one speaker and recording".into());
        }
        if self.duration_s < 2.0 {
            return bad(format!("duration {} s is too short", self.duration_s));
        }
        if self.sample_rate < crate::prosody::MIN_SAMPLE_RATE {
            return bad(format!("sample rate {} is below 16000", self.sample_rate));
        }
        if !range_ok(self.word_s) || !range_ok(self.pause_s) {
            return bad("word and pause durations need 0 < min <= max".into());
        }
        if !(0.0..=1.0).contains(&self.noise) || !(0.0..=1.0).contains(&self.pause_prob) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if self.vocabulary == 0 || self.embedding_dim == 0 {
            return bad("vocabulary and embedding dim must be positive".into());
        }
        if let Some(t) = &self.text {
            if t.triggers.is_empty() || t.half_width_s <= 0.0 {
                return bad("text coupling needs triggers and a positive half width".into());
            }
            if !(0.0..=1.0).contains(&t.trigger_prob) || !(0.0..=1.0).contains(&t.decoy_prob) {
                return bad("text coupling probabilities must lie in [0, 1]".into());
            }
        }
        if let Some(a) = &self.audio {
            if !range_ok(a.burst_s) || !range_ok(a.preparation_s) || !range_ok(a.retraction_s) {
                return bad("audio coupling durations need 0 < min <= max".into());
            }
            // Exclusive phases must fit one after another.
            let longest = a.burst_s.1 + a.preparation_s.1 + a.retraction_s.1 + MIN_GESTURE_GAP_S;
            if a.bursts_per_minute * longest >= 0.8 * 60.0 {
                return bad(format!(
                    "{} bursts per minute of up to {longest:.2} s cannot be placed without overlapping phases",
                    a.bursts_per_minute
                ));
            }
        }
        Ok(())
    }
}

const MIN_GESTURE_GAP_S: f64 = 0.2;
const SPEECH_AMPLITUDE: f64 = 0.12;
const NOISE_FLOOR: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBurst {
    pub start: f64,
    pub end: f64,
    pub coupled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingCouplings {
    pub id: u32,
    pub speaker: String,
    /// Onsets of trigger words.
    pub trigger_onsets: Vec<f64>,
    /// Centres of gestures planted by the text rule (equal to trigger onsets
    /// unless noise displaced them).
    pub text_gesture_centres: Vec<f64>,
    pub bursts: Vec<PlantedBurst>,
    /// Stroke intervals; equal to the burst intervals unless displaced.
    pub strokes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingManifest {
    pub seed: u64,
    pub spec: SynthSpec,
    pub recordings: Vec<RecordingCouplings>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub recordings: Vec<Recording>,
    pub embeddings: EmbeddingTable,
    pub couplings: CouplingManifest,
}

fn uniform(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
    if b > a {
        rng.gen_range(a..b)
    } else {
        a
    }
}

fn vocabulary(spec: &SynthSpec) -> Vec<String> {
    (0..spec.vocabulary)
        .map(|i| format!("wort{i:03}"))
        .collect()
}

/// Adds a harmonic tone with raised-cosine edges to `buf`.
fn add_tone(buf: &mut [f32], sr: f64, start: f64, end: f64, f0: f64, amp: f64) {
    let s = (start * sr).round().max(0.0) as usize;
    let e = ((end * sr).round() as usize).min(buf.len());
    if s >= e {
        return;
    }
    let ramp = (0.015 * sr) as usize;
    let n = e - s;
    for (k, slot) in buf[s..e].iter_mut().enumerate() {
        let t = (s + k) as f64 / sr;
        let phase = 2.0 * std::f64::consts::PI * f0 * t;
        let v = phase.sin() + 0.5 * (2.0 * phase).sin() + 0.25 * (3.0 * phase).sin();
        let edge = k.min(n - 1 - k);
        let env = if edge < ramp {
            0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos()
        } else {
            1.0
        };
        *slot += (amp * env * v / 1.75) as f32;
    }
}

fn quantize(samples: &mut [f32]) {
    for s in samples.iter_mut() {
        *s = (s.clamp(-1.0, 1.0) * 32768.0)
            .round()
            .clamp(-32768.0, 32767.0)
            / 32768.0;
    }
}

struct Rendered {
    recording: Recording,
    couplings: RecordingCouplings,
}

fn render_recording(
    spec: &SynthSpec,
    seed: u64,
    index: usize,
    vocab: &[String],
) -> Result<Rendered> {
    let mut rng = rng_for(seed, &[index as u64]);
    let speaker_idx = index / spec.recordings_per_speaker;
    let id = index as u32 + 1;
    let speaker = format!("s{:02}", speaker_idx + 1);
    let sr = f64::from(spec.sample_rate);
    let n_samples = (spec.duration_s * sr).round() as usize;
    let mut audio = vec![0f32; n_samples];
    for s in audio.iter_mut() {
        *s = (NOISE_FLOOR * (rng.gen::<f64>() * 2.0 - 1.0)) as f32;
    }
    let base_f0 = rng.gen_range(100.0..200.0);

    // Interlocutor turns, placed first so speech avoids them.
    let mut interlocutor = Vec::new();
    if spec.interlocutor_per_minute > 0.0 {
        let n_turns = (spec.interlocutor_per_minute * spec.duration_s / 60.0).round() as usize;
        for _ in 0..n_turns {
            let len = rng.gen_range(1.0..2.0);
            let start = rng.gen_range(1.0..(spec.duration_s - len - 1.0).max(1.5));
            let (start, end) = (start, start + len);
            if interlocutor
                .iter()
                .all(|&(a, b): &(f64, f64)| end + 0.5 < a || start > b + 0.5)
            {
                interlocutor.push((start, end));
            }
        }
        interlocutor.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(a, b) in &interlocutor {
            add_tone(&mut audio, sr, a, b, rng.gen_range(230.0..280.0), 0.1);
        }
    }

    // Words.
    let text = spec.text.as_ref();
    let mut words = Vec::new();
    let mut trigger_onsets = Vec::new();
    let mut t = rng.gen_range(0.2..0.6);
    while t < spec.duration_s - 0.6 {
        if let Some(&(_, b)) = interlocutor.iter().find(|&&(a, b)| t + 0.5 > a && t < b) {
            t = b + 0.2;
            continue;
        }
        let len = uniform(&mut rng, spec.word_s);
        let end = (t + len).min(spec.duration_s - 0.1);
        let is_trigger = text.is_some_and(|c| rng.gen::<f64>() < c.trigger_prob);
        let word = match text {
            Some(c) if is_trigger => c.triggers[rng.gen_range(0..c.triggers.len())].clone(),
            _ => vocab[rng.gen_range(0..vocab.len())].clone(),
        };
        if is_trigger {
            trigger_onsets.push(t);
        }
        let f0 = base_f0 * rng.gen_range(0.85..1.15);
        add_tone(&mut audio, sr, t, end, f0, SPEECH_AMPLITUDE);
        words.push(WordToken::new(word, t, end));
        t = end + 0.02;
        if rng.gen::<f64>() < spec.pause_prob {
            t += uniform(&mut rng, spec.pause_s);
        }
    }

    let mut tiers = Vec::new();
    let mut text_gesture_centres = Vec::new();
    let margin = 0.05;
    let random_time =
        |rng: &mut ChaCha8Rng, pad: f64| rng.gen_range(pad..(spec.duration_s - pad).max(pad + 0.1));
    if let Some(c) = text {
        let mut sem = AnnotationTier {
            name: "R.G.Left Semantic".into(),
            intervals: Vec::new(),
        };
        let mut cat = AnnotationTier {
            name: "R.G.Left Phrase".into(),
            intervals: Vec::new(),
        };
        for w in &words {
            let is_trigger = c.triggers.contains(&w.word);
            let decoy = !is_trigger && rng.gen::<f64>() < c.decoy_prob;
            if !is_trigger && !decoy {
                continue;
            }
            let centre = if rng.gen::<f64>() < spec.noise {
                random_time(&mut rng, c.half_width_s + margin)
            } else {
                w.onset
            };
            let start = (centre - c.half_width_s).max(0.0);
            let end = (centre + c.half_width_s).min(spec.duration_s);
            if is_trigger {
                text_gesture_centres.push(centre);
                sem.intervals.push(Interval {
                    start,
                    end,
                    label: c.semantics.clone(),
                });
                cat.intervals.push(Interval {
                    start,
                    end,
                    label: c.category.clone(),
                });
            } else {
                cat.intervals.push(Interval {
                    start,
                    end,
                    label: c.decoy_category.clone(),
                });
            }
        }
        tiers.push(sem);
        tiers.push(cat);
    }

    let mut bursts = Vec::new();
    let mut strokes = Vec::new();
    if let Some(a) = &spec.audio {
        let mut phase = AnnotationTier {
            name: "R.G.Right.Phase".into(),
            intervals: Vec::new(),
        };
        let mut cat = AnnotationTier {
            name: "R.G.Right Phrase".into(),
            intervals: Vec::new(),
        };
        let mean_gap = 60.0 / a.bursts_per_minute;
        let mut cursor = 0.3;
        let mut planned = Vec::new();
        loop {
            let prep = uniform(&mut rng, a.preparation_s);
            let burst = uniform(&mut rng, a.burst_s);
            let retr = uniform(&mut rng, a.retraction_s);
            let span = prep + burst + retr;
            // Exponential spacing, but never closer than the gap.
            let wait =
                -mean_gap.max(span) * (1.0 - rng.gen::<f64>()).ln() * 0.5 + MIN_GESTURE_GAP_S;
            let start = cursor + wait;
            if start + span > spec.duration_s - 0.3 {
                break;
            }
            planned.push((start, prep, burst, retr));
            cursor = start + span;
        }
        for (start, prep, burst, retr) in planned {
            let b0 = start + prep;
            let b1 = b0 + burst;
            add_tone(&mut audio, sr, b0, b1, base_f0 * 1.25, a.burst_amplitude);
            let coupled = rng.gen::<f64>() >= spec.noise;
            bursts.push(PlantedBurst {
                start: b0,
                end: b1,
                coupled,
            });
            // A displaced gesture keeps its shape but moves to a random time.
            let g0 = if coupled {
                start
            } else {
                random_time(&mut rng, 0.3).min(spec.duration_s - prep - burst - retr - 0.3)
            };
            let (s0, s1) = (g0 + prep, g0 + prep + burst);
            strokes.push((s0, s1));
            for (lo, hi, label) in [
                (g0, s0, "preparation"),
                (s0, s1, "stroke"),
                (s1, s1 + retr, "retraction"),
            ] {
                phase.intervals.push(Interval {
                    start: lo,
                    end: hi,
                    label: label.into(),
                });
            }
            cat.intervals.push(Interval {
                start: g0,
                end: s1 + retr,
                label: a.category.clone(),
            });
        }
        let mut phase_sorted = phase.intervals.clone();
        phase_sorted.sort_by(|x, y| x.start.total_cmp(&y.start));
        if spec.noise == 0.0
            && phase_sorted
                .windows(2)
                .any(|w| w[1].start < w[0].end - 1e-9)
        {
            return Err(Error::SynthSpec("planted phases overlap".into()));
        }
        tiers.push(phase);
        tiers.push(cat);
    }

    // Round all times to whole milliseconds so files and memory agree.
    let ms = |x: f64| (x * 1000.0).round() / 1000.0;
    for w in &mut words {
        w.onset = ms(w.onset);
        w.offset = ms(w.offset);
    }
    for tier in &mut tiers {
        for iv in &mut tier.intervals {
            iv.start = ms(iv.start);
            iv.end = ms(iv.end);
        }
        tier.intervals.retain(|iv| iv.start < iv.end);
    }
    for iv in &mut interlocutor {
        *iv = (ms(iv.0), ms(iv.1));
    }
    let trigger_onsets = trigger_onsets.into_iter().map(ms).collect();

    quantize(&mut audio);
    let clip = AudioClip::new(audio, spec.sample_rate)?;
    let duration = clip.duration();
    Ok(Rendered {
        recording: Recording {
            id,
            speaker: speaker.clone(),
            audio: AudioRef::Memory(Arc::new(clip)),
            duration,
            sample_rate: spec.sample_rate,
            words,
            tiers,
            interlocutor,
        },
        couplings: RecordingCouplings {
            id,
            speaker,
            trigger_onsets,
            text_gesture_centres,
            bursts,
            strokes,
        },
    })
}

fn make_embeddings(spec: &SynthSpec, seed: u64, vocab: &[String]) -> EmbeddingTable {
    let mut rng = rng_for(seed, &[u64::MAX]);
    let mut table = EmbeddingTable::new(spec.embedding_dim);
    let mut words: Vec<String> = vocab.to_vec();
    if let Some(t) = &spec.text {
        // Transcripts capitalize triggers; the table is lowercase.
        words.extend(t.triggers.iter().map(|w| w.to_lowercase()));
    }
    let scale = 1.0 / (spec.embedding_dim as f64).sqrt() * 3.0;
    let mut v = vec![0f32; spec.embedding_dim];
    for w in &words {
        for x in v.iter_mut() {
            // Sum of uniforms: cheap, symmetric, unit-ish variance.
            let s: f64 = (0..3).map(|_| rng.gen::<f64>() - 0.5).sum();
            *x = ((s * 2.0 * scale * 100.0).round() / 100.0) as f32;
        }
        table.insert(w, &v);
    }
    table
}

pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let vocab = vocabulary(spec);
    let n = spec.speakers * spec.recordings_per_speaker;
    let rendered = (0..n)
        .map(|i| render_recording(spec, seed, i, &vocab))
        .collect::<Result<Vec<_>>>()?;
    let (recordings, couplings): (Vec<_>, Vec<_>) = rendered
        .into_iter()
        .map(|r| (r.recording, r.couplings))
        .unzip();
    Ok(SyntheticCorpus {
        recordings,
        embeddings: make_embeddings(spec, seed, &vocab),
        couplings: CouplingManifest {
            seed,
            spec: spec.clone(),
            recordings: couplings,
        },
    })
}

impl SyntheticCorpus {
    /// Writes the corpus in the standard on-disk formats; returns the manifest path.
    pub fn write_to(&self, dir: &Path) -> Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Vec::new();
        for rec in &self.recordings {
            let stem = format!("rec{:03}", rec.id);
            let audio = format!("{stem}.wav");
            let transcript = format!("{stem}.words.tsv");
            let annotations = format!("{stem}.ann.tsv");
            let clip = rec.load_audio()?;
            wav::write_wav(&dir.join(&audio), &clip)?;
            write_atomic(
                &dir.join(&transcript),
                transcript_to_text(&rec.words).as_bytes(),
            )?;
            write_atomic(
                &dir.join(&annotations),
                annotations_to_text(&rec.tiers).as_bytes(),
            )?;
            let interlocutor = if rec.interlocutor.is_empty() {
                None
            } else {
                let name = format!("{stem}.interlocutor.tsv");
                write_atomic(
                    &dir.join(&name),
                    intervals_to_text(&rec.interlocutor).as_bytes(),
                )?;
                Some(name.into())
            };
            manifest.push(ManifestEntry {
                id: rec.id,
                speaker: rec.speaker.clone(),
                audio: audio.into(),
                transcript: transcript.into(),
                annotations: annotations.into(),
                interlocutor,
            });
        }
        let manifest_path = dir.join("manifest.json");
        let json =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
        write_atomic(&manifest_path, json.as_bytes())?;
        write_atomic(
            &dir.join("embeddings.vec"),
            self.embeddings.to_text().as_bytes(),
        )?;
        let couplings = serde_json::to_string_pretty(&self.couplings)
            .map_err(|e| Error::json("couplings", e))?;
        write_atomic(&dir.join("couplings.json"), couplings.as_bytes())?;
        Ok(manifest_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_frame_table, Property};
    use crate::prosody::yin::rms;

    fn small(text: bool, audio: bool) -> SynthSpec {
        SynthSpec {
            speakers: 2,
            duration_s: 20.0,
            embedding_dim: 8,
            text: text.then(TextCoupling::default),
            audio: audio.then(AudioCoupling::default),
            ..SynthSpec::default()
        }
    }

    #[test]
    fn shape_frames_lie_near_triggers() {
        let c = generate_synthetic_corpus(&small(true, false), 3).unwrap();
        for (rec, cp) in c.recordings.iter().zip(&c.couplings.recordings) {
            assert!(!cp.trigger_onsets.is_empty());
            let t = build_frame_table(rec).unwrap();
            let shape = Property::Semantics.schema().index_of("shape").unwrap();
            for f in 0..t.n_frames {
                if t.label_row(Property::Semantics, f)[shape] == 1 {
                    let time = t.time(f);
                    let near = cp
                        .trigger_onsets
                        .iter()
                        .any(|&o| (time - o).abs() <= 0.3 + 1e-9);
                    assert!(near, "shape frame at {time} far from triggers");
                }
            }
        }
    }

    #[test]
    fn strokes_coincide_with_bursts() {
        let c = generate_synthetic_corpus(&small(false, true), 5).unwrap();
        for (rec, cp) in c.recordings.iter().zip(&c.couplings.recordings) {
            assert!(!cp.bursts.is_empty());
            let clip = rec.load_audio().unwrap();
            let sr = f64::from(clip.sample_rate());
            let t = build_frame_table(rec).unwrap();
            let stroke = Property::Phase.schema().index_of("stroke").unwrap();
            for f in 0..t.n_frames {
                let time = t.time(f);
                // Skip the ramps at either end of the burst.
                let inside = cp
                    .strokes
                    .iter()
                    .any(|&(a, b)| time >= a + 0.02 && time + 0.04 <= b);
                if t.label_row(Property::Phase, f)[stroke] == 1 && inside {
                    let a = (time * sr) as usize;
                    let loud = rms(&clip.samples()[a..(a + 320).min(clip.len())]);
                    assert!(loud > 0.2, "stroke frame at {time} has rms {loud}");
                }
            }
        }
    }

    #[test]
    fn seed_determinism_on_disk() {
        let spec = SynthSpec {
            interlocutor_per_minute: 4.0,
            ..small(true, true)
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic_corpus(&spec, 9)
            .unwrap()
            .write_to(a.path())
            .unwrap();
        generate_synthetic_corpus(&spec, 9)
            .unwrap()
            .write_to(b.path())
            .unwrap();
        let mut names: Vec<_> = std::fs::read_dir(a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(names.len() >= 8);
        for n in names {
            let x = std::fs::read(a.path().join(&n)).unwrap();
            let y = std::fs::read(b.path().join(&n)).unwrap();
            assert_eq!(x, y, "{n:?} differs");
        }
    }

    #[test]
    fn written_corpus_loads_back() {
        let spec = SynthSpec {
            interlocutor_per_minute: 4.0,
            ..small(true, true)
        };
        let c = generate_synthetic_corpus(&spec, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = c.write_to(dir.path()).unwrap();
        let loaded = crate::corpus::io::load_corpus(&manifest).unwrap();
        assert_eq!(loaded.len(), c.recordings.len());
        for (a, b) in loaded.iter().zip(&c.recordings) {
            assert_eq!(a.words, b.words);
            assert_eq!(a.tiers, b.tiers);
            assert_eq!(a.interlocutor, b.interlocutor);
            assert_eq!(a.frame_count(), b.frame_count());
            assert_eq!(build_frame_table(a).unwrap(), build_frame_table(b).unwrap());
            assert_eq!(*a.load_audio().unwrap(), *b.load_audio().unwrap());
        }
        let table = crate::textfeat::load_embeddings(&dir.path().join("embeddings.vec")).unwrap();
        assert_eq!(table.len(), c.embeddings.len());
        for w in ["wort000", "wort017", "turm", "kirche"] {
            assert_eq!(table.get(w), c.embeddings.get(w));
        }
    }

    #[test]
    fn inconsistent_specs_are_rejected() {
        let crowded = SynthSpec {
            audio: Some(AudioCoupling {
                bursts_per_minute: 40.0,
                ..AudioCoupling::default()
            }),
            ..small(false, true)
        };
        assert!(matches!(
            generate_synthetic_corpus(&crowded, 1),
            Err(Error::SynthSpec(_))
        ));
        let inverted = SynthSpec {
            word_s: (0.5, 0.2),
            ..small(true, false)
        };
        assert!(generate_synthetic_corpus(&inverted, 1).is_err());
    }
}
