//! Prosodic audio features.
//!
//! Every clip is analysed at 200 frames per second with 40 ms windows. Each
//! frame yields a voicing flag, a log-pitch value, a log-intensity value and
//! the time derivatives of the latter two. The 200 fps rows are then averaged
//! down to the 20 fps annotation grid.
//!
//! | column | meaning |
//! |---|---|
//! | `vuv` | 1 when YIN finds a period (fractional after averaging) |
//! | `pitch` | `max(0, ln(f0 + 1) - 4)`, interpolated through unvoiced frames |
//! | `energy` | `ln(max(rms, 1e-10)) - 3` |
//! | `d_pitch`, `d_energy` | central differences per second |

pub mod wav;
pub mod yin;

use std::path::Path;

use crate::error::{Error, Result};
use crate::util::{fmt_sig9, write_atomic};

pub use yin::{estimate_f0, YinConfig};

/// Analysis rate before downsampling.
pub const RAW_FPS: u32 = 200;
/// Annotation grid rate.
pub const FPS: u32 = 20;
pub const FRAME_LEN_S: f64 = 0.040;
pub const HOP_S: f64 = 0.005;
pub const MIN_SAMPLE_RATE: u32 = 16_000;
pub const ENERGY_FLOOR: f64 = 1e-10;
/// Number of columns in a prosody row.
pub const N_FEATURES: usize = 5;

/// Mono audio with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate < MIN_SAMPLE_RATE {
            return Err(Error::Config(format!(
                "sample rate {sample_rate} Hz is below the supported minimum of {MIN_SAMPLE_RATE} Hz"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Config(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silent(duration_s: f64, sample_rate: u32) -> Result<Self> {
        let n = (duration_s * f64::from(sample_rate)).round() as usize;
        Self::new(vec![0.0; n], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// `floor(duration * fps)` computed exactly in integers.
    pub fn frame_count(&self, fps: u32) -> usize {
        (self.samples.len() as u64 * u64::from(fps) / u64::from(self.sample_rate)) as usize
    }
}

/// Per-frame prosody rows at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyTrack {
    pub fps: u32,
    pub rows: Vec<[f64; N_FEATURES]>,
}

impl ProsodyTrack {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,vuv,pitch,energy,d_pitch,d_energy\n");
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in r {
                out.push(',');
                out.push_str(&fmt_sig9(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != N_FEATURES + 1 {
                return Err(Error::parse(
                    path,
                    ln + 1,
                    "expected 6 comma-separated fields",
                ));
            }
            let mut row = [0.0; N_FEATURES];
            for (slot, f) in row.iter_mut().zip(&fields[1..]) {
                *slot = f
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, ln + 1, format!("not a number: `{f}`")))?;
            }
            rows.push(row);
        }
        Ok(Self { fps: FPS, rows })
    }
}

/// Window geometry over a clip: window `i` is centred on `i * hop` seconds and
/// zero-padded where it extends past either end.
#[derive(Debug, Clone, Copy)]
pub struct Framer {
    pub window_len: usize,
    pub hop_s: f64,
    pub count: usize,
    sample_rate: u32,
}

impl Framer {
    pub fn new(clip: &AudioClip, frame_len_s: f64, hop_s: f64) -> Self {
        assert!(
            hop_s > 0.0 && frame_len_s >= hop_s,
            "need frame_len >= hop > 0"
        );
        let sr = f64::from(clip.sample_rate());
        let window_len = (frame_len_s * sr).round() as usize;
        let count = if clip.is_empty() {
            0
        } else {
            // floor(duration / hop); the epsilon absorbs representation error in hop.
            ((clip.duration() / hop_s) + 1e-9).floor() as usize
        };
        Self {
            window_len,
            hop_s,
            count,
            sample_rate: clip.sample_rate(),
        }
    }

    pub fn window_into(&self, clip: &AudioClip, i: usize, buf: &mut Vec<f32>) {
        buf.clear();
        buf.resize(self.window_len, 0.0);
        let centre = (i as f64 * self.hop_s * f64::from(self.sample_rate)).round() as i64;
        let start = centre - (self.window_len / 2) as i64;
        let samples = clip.samples();
        for (k, slot) in buf.iter_mut().enumerate() {
            let idx = start + k as i64;
            if idx >= 0 && (idx as usize) < samples.len() {
                *slot = samples[idx as usize];
            }
        }
    }
}

pub fn frame_signal(clip: &AudioClip, frame_len_s: f64, hop_s: f64) -> Vec<Vec<f32>> {
    let framer = Framer::new(clip, frame_len_s, hop_s);
    (0..framer.count)
        .map(|i| {
            let mut buf = Vec::new();
            framer.window_into(clip, i, &mut buf);
            buf
        })
        .collect()
}

pub fn transform_pitch(f0: f64) -> f64 {
    ((f0 + 1.0).ln() - 4.0).max(0.0)
}

pub fn transform_energy(x: f64) -> f64 {
    x.max(ENERGY_FLOOR).ln() - 3.0
}

/// Fills unvoiced positions by linear interpolation between the nearest voiced
/// neighbours, extending constants at the edges. All-unvoiced input gives zeros.
pub fn interpolate_unvoiced(values: &[f64], voiced: &[bool]) -> Vec<f64> {
    assert_eq!(values.len(), voiced.len());
    let anchors: Vec<usize> = (0..values.len()).filter(|&i| voiced[i]).collect();
    let (Some(&first), Some(&last)) = (anchors.first(), anchors.last()) else {
        return vec![0.0; values.len()];
    };
    let mut out = values.to_vec();
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for pair in anchors.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a > 1 {
            let (va, vb) = (values[a], values[b]);
            let span = (b - a) as f64;
            for (k, slot) in out[a + 1..b].iter_mut().enumerate() {
                *slot = va + (vb - va) * (k + 1) as f64 / span;
            }
        }
    }
    out
}

/// Central differences scaled to units per second; one-sided at the edges.
pub fn finite_diff(seq: &[f64], fps: f64) -> Vec<f64> {
    let n = seq.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                (seq[1] - seq[0]) * fps
            } else if i == n - 1 {
                (seq[n - 1] - seq[n - 2]) * fps
            } else {
                (seq[i + 1] - seq[i - 1]) * fps / 2.0
            }
        })
        .collect()
}

/// Averages consecutive groups of rows; a trailing partial group is averaged
/// over its actual size.
pub fn downsample_by_mean(track: &ProsodyTrack, target_fps: u32) -> ProsodyTrack {
    assert!(
        target_fps > 0 && track.fps.is_multiple_of(target_fps),
        "source rate must be a multiple of the target rate"
    );
    let group = (track.fps / target_fps) as usize;
    let rows = track
        .rows
        .chunks(group)
        .map(|chunk| {
            let mut acc = [0.0; N_FEATURES];
            for r in chunk {
                for (a, v) in acc.iter_mut().zip(r) {
                    *a += v;
                }
            }
            acc.map(|a| a / chunk.len() as f64)
        })
        .collect();
    ProsodyTrack {
        fps: target_fps,
        rows,
    }
}

/// Zeroes all samples falling inside any of the `(start, end)` intervals.
pub fn silence_intervals(clip: &AudioClip, intervals: &[(f64, f64)]) -> AudioClip {
    let sr = f64::from(clip.sample_rate());
    let duration = clip.duration();
    let mut samples = clip.samples().to_vec();
    for &(start, end) in intervals {
        if start < 0.0 || end > duration {
            log::warn!(
                "silence interval [{start:.3}, {end:.3}] exceeds clip duration {duration:.3}; clipping"
            );
        }
        let s = (start.max(0.0) * sr).round() as usize;
        let e = (((end.min(duration)) * sr).round() as usize).min(samples.len());
        if s < e {
            samples[s..e].fill(0.0);
        }
    }
    AudioClip {
        samples,
        sample_rate: clip.sample_rate(),
    }
}

/// Raw 200 fps analysis: returns `(voiced, f0_or_zero, rms)` per frame.
pub fn analyse_frames(clip: &AudioClip) -> (Vec<bool>, Vec<f64>, Vec<f64>) {
    let framer = Framer::new(clip, FRAME_LEN_S, HOP_S);
    let mut voiced = Vec::with_capacity(framer.count);
    let mut f0s = Vec::with_capacity(framer.count);
    let mut rmss = Vec::with_capacity(framer.count);
    let mut buf = Vec::with_capacity(framer.window_len);
    let cfg = YinConfig::default();
    for i in 0..framer.count {
        framer.window_into(clip, i, &mut buf);
        let f0 = yin::estimate_f0_with(&buf, clip.sample_rate(), &cfg);
        voiced.push(f0.is_some());
        f0s.push(f0.unwrap_or(0.0));
        rmss.push(yin::rms(&buf));
    }
    (voiced, f0s, rmss)
}

/// Full 200 fps feature track before downsampling.
pub fn extract_raw(clip: &AudioClip) -> ProsodyTrack {
    let (voiced, f0s, rmss) = analyse_frames(clip);
    let pitch_raw: Vec<f64> = f0s.iter().map(|&f| transform_pitch(f)).collect();
    let pitch = interpolate_unvoiced(&pitch_raw, &voiced);
    let energy: Vec<f64> = rmss.iter().map(|&x| transform_energy(x)).collect();
    let fps = f64::from(RAW_FPS);
    let d_pitch = finite_diff(&pitch, fps);
    let d_energy = finite_diff(&energy, fps);
    let rows = (0..pitch.len())
        .map(|i| {
            [
                if voiced[i] { 1.0 } else { 0.0 },
                pitch[i],
                energy[i],
                d_pitch[i],
                d_energy[i],
            ]
        })
        .collect();
    ProsodyTrack { fps: RAW_FPS, rows }
}

/// Extracts the 20 fps prosody track; its length is `floor(duration * 20)`.
pub fn extract_prosody(clip: &AudioClip) -> ProsodyTrack {
    let raw = extract_raw(clip);
    let mut track = downsample_by_mean(&raw, FPS);
    track.rows.truncate(clip.frame_count(FPS));
    track
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sine_clip(freq: f64, secs: f64, sr: u32) -> AudioClip {
        let n = (secs * f64::from(sr)) as usize;
        let s = (0..n)
            .map(|i| {
                (0.8 * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(sr)).sin()) as f32
            })
            .collect();
        AudioClip::new(s, sr).unwrap()
    }

    #[test]
    fn framing_counts_and_lengths() {
        let clip = AudioClip::silent(1.0, 48_000).unwrap();
        let w = frame_signal(&clip, FRAME_LEN_S, HOP_S);
        assert_eq!(w.len(), 200);
        assert!(w.iter().all(|x| x.len() == 1920));
        let empty = AudioClip::new(vec![], 48_000).unwrap();
        assert!(frame_signal(&empty, FRAME_LEN_S, HOP_S).is_empty());
    }

    #[test]
    fn framing_centres_and_pads() {
        let samples: Vec<f32> = (0..16_000).map(|i| i as f32 / 16_000.0).collect();
        let clip = AudioClip::new(samples, 16_000).unwrap();
        let w = frame_signal(&clip, 0.010, 0.005);
        // Window 0 is centred on sample 0: first half zero padding.
        assert_eq!(w[0][..80], vec![0.0; 80][..]);
        assert_eq!(w[0][80], 0.0);
        assert_eq!(w[0][81], 1.0 / 16_000.0);
        // Window 10 is centred on sample 800.
        assert_eq!(w[10][80], 800.0 / 16_000.0);
    }

    #[test]
    fn rejects_low_rates_and_nan() {
        assert!(AudioClip::new(vec![0.0; 10], 8_000).is_err());
        assert!(AudioClip::new(vec![f32::NAN], 16_000).is_err());
    }

    #[test]
    fn pitch_transform_values() {
        assert_eq!(transform_pitch(4f64.exp() - 1.0), 0.0);
        assert_abs_diff_eq!(transform_pitch(200.0), 201f64.ln() - 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(transform_pitch(200.0), 1.303_304_908_7, epsilon = 1e-9);
        assert_eq!(transform_pitch(10.0), 0.0);
        assert_eq!(transform_pitch(0.0), 0.0);
    }

    #[test]
    fn energy_transform_values() {
        assert_eq!(transform_energy(3f64.exp()), 0.0);
        assert_abs_diff_eq!(
            transform_energy(0.0),
            -26.025_850_929_940_457,
            epsilon = 1e-12
        );
        assert_eq!(transform_energy(1.0), -3.0);
    }

    #[test]
    fn interpolation_cases() {
        assert_eq!(
            interpolate_unvoiced(&[1.0, 0.0, 0.0, 4.0], &[true, false, false, true]),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        assert_eq!(
            interpolate_unvoiced(&[5.0, 6.0], &[false, false]),
            vec![0.0, 0.0]
        );
        assert_eq!(
            interpolate_unvoiced(&[0.0, 2.0, 0.0], &[false, true, false]),
            vec![2.0, 2.0, 2.0]
        );
    }

    #[test]
    fn finite_diff_cases() {
        assert_eq!(finite_diff(&[3.0; 6], 200.0), vec![0.0; 6]);
        let ramp: Vec<f64> = (0..10).map(|i| i as f64 / 200.0).collect();
        for d in finite_diff(&ramp, 200.0) {
            assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);
        }
        assert_eq!(finite_diff(&[7.0], 200.0), vec![0.0]);
    }

    #[test]
    fn downsample_cases() {
        let rows: Vec<[f64; 5]> = (1..=10).map(|i| [i as f64; 5]).collect();
        let out = downsample_by_mean(&ProsodyTrack { fps: 200, rows }, 20);
        assert_eq!(out.rows, vec![[5.5; 5]]);

        let rows = vec![[2.0, 1.0, -1.0, 0.5, 0.0]; 25];
        let out = downsample_by_mean(&ProsodyTrack { fps: 200, rows }, 20);
        assert_eq!(out.fps, 20);
        assert_eq!(out.rows, vec![[2.0, 1.0, -1.0, 0.5, 0.0]; 3]);
    }

    #[test]
    fn silencing() {
        let clip = sine_clip(220.0, 1.0, 16_000);
        assert_eq!(silence_intervals(&clip, &[]), clip);
        let all = silence_intervals(&clip, &[(0.0, 1.0)]);
        assert!(all.samples().iter().all(|&s| s == 0.0));
        let half = silence_intervals(&clip, &[(0.0, 0.5)]);
        assert!(half.samples()[..8000].iter().all(|&s| s == 0.0));
        assert_eq!(half.samples()[8000..], clip.samples()[8000..]);
        assert_abs_diff_eq!(
            yin::rms(&half.samples()[8000..]),
            yin::rms(&clip.samples()[8000..]),
            epsilon = 0.0
        );
        // Overlapping and out-of-range intervals.
        let twice = silence_intervals(&clip, &[(0.1, 0.3), (0.2, 0.4), (0.9, 2.0)]);
        assert!(twice.samples()[1600..6400].iter().all(|&s| s == 0.0));
        assert!(twice.samples()[14_400..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn sine_track() {
        let clip = sine_clip(220.0, 2.0, 16_000);
        let track = extract_prosody(&clip);
        assert_eq!(track.len(), 40);
        let expected = transform_pitch(220.0);
        for r in &track.rows[1..39] {
            assert_abs_diff_eq!(r[0], 1.0);
            assert!((r[1] - expected).abs() < 0.03, "pitch {}", r[1]);
        }
    }

    #[test]
    fn silence_track() {
        let track = extract_prosody(&AudioClip::silent(1.0, 16_000).unwrap());
        assert_eq!(track.len(), 20);
        for r in &track.rows {
            assert_eq!(r[0], 0.0);
            assert_eq!(r[1], 0.0);
            assert_eq!(r[3], 0.0);
            assert_abs_diff_eq!(r[2], transform_energy(0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn short_clip_is_empty() {
        let track = extract_prosody(&AudioClip::silent(0.03, 16_000).unwrap());
        assert!(track.is_empty());
    }

    #[test]
    fn csv_roundtrip() {
        let track = ProsodyTrack {
            fps: 20,
            rows: vec![[1.0, 1.303_304_908_7, -26.025_850_93, 0.0, -0.5]],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        track.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("frame,vuv,pitch,energy,d_pitch,d_energy\n0,1,1.30330491,"));
        let back = ProsodyTrack::read_csv(&p).unwrap();
        assert_abs_diff_eq!(back.rows[0][1], 1.303_304_908_7, epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn pitch_transform_monotone(a in 0.0f64..2000.0, b in 0.0f64..2000.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(transform_pitch(lo) <= transform_pitch(hi));
            if hi <= 4f64.exp() - 1.0 {
                prop_assert_eq!(transform_pitch(hi), 0.0);
            }
        }

        #[test]
        fn interpolation_identity_when_voiced(v in prop::collection::vec(-5.0f64..5.0, 1..50)) {
            let voiced = vec![true; v.len()];
            prop_assert_eq!(interpolate_unvoiced(&v, &voiced), v);
        }

        #[test]
        fn downsample_is_linear(v in prop::collection::vec(-5.0f64..5.0, 1..64), k in -3.0f64..3.0) {
            let track = ProsodyTrack { fps: 200, rows: v.iter().map(|&x| [x, 0.0, 0.0, 0.0, 0.0]).collect() };
            let scaled = ProsodyTrack { fps: 200, rows: v.iter().map(|&x| [k * x, 0.0, 0.0, 0.0, 0.0]).collect() };
            let a = downsample_by_mean(&track, 20);
            let b = downsample_by_mean(&scaled, 20);
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                prop_assert!((k * ra[0] - rb[0]).abs() < 1e-9);
            }
        }

        #[test]
        fn diff_of_linear_is_constant(slope in -10.0f64..10.0, offset in -5.0f64..5.0, n in 3usize..40) {
            let seq: Vec<f64> = (0..n).map(|i| offset + slope * i as f64 / 200.0).collect();
            let d = finite_diff(&seq, 200.0);
            for v in &d[1..n - 1] {
                prop_assert!((v - slope).abs() < 1e-9);
            }
        }

        #[test]
        fn row_count_matches_duration(n in 800usize..40_000) {
            let clip = AudioClip::new(vec![0.0; n], 16_000).unwrap();
            prop_assert_eq!(extract_prosody(&clip).len(), n * 20 / 16_000);
        }
    }
}
