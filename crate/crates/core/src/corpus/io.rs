//! Corpus files: the JSON manifest, annotation and interlocutor TSVs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnnotationTier, AudioRef, Interval, Recording};
use crate::error::{Error, Result};
use crate::textfeat::load_transcript;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u32,
    pub speaker: String,
    pub audio: PathBuf,
    pub transcript: PathBuf,
    pub annotations: PathBuf,
    pub interlocutor: Option<PathBuf>,
}

/// Reads a manifest written either as a JSON array or as one JSON object per
/// line.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed)
            .map_err(|e| Error::json(path.display().to_string(), e));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::json(format!("{}:{}", path.display(), no + 1), e))
        })
        .collect()
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<AnnotationTier>> {
    let mut tiers: Vec<AnnotationTier> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                no + 1,
                "expected tier, start_ms, end_ms, label",
            ));
        }
        let ms = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map(|v| v / 1000.0)
                .map_err(|_| Error::parse(path, no + 1, format!("bad time `{s}`")))
        };
        let (start, end) = (ms(fields[1])?, ms(fields[2])?);
        if !(start < end) {
            return Err(Error::parse(path, no + 1, "interval needs start < end"));
        }
        let label = fields[3].trim();
        if label.is_empty() {
            return Err(Error::parse(path, no + 1, "empty label"));
        }
        let name = fields[0].trim();
        let interval = Interval {
            start,
            end,
            label: label.to_string(),
        };
        match tiers.iter_mut().find(|t| t.name == name) {
            Some(t) => t.intervals.push(interval),
            None => tiers.push(AnnotationTier {
                name: name.to_string(),
                intervals: vec![interval],
            }),
        }
    }
    Ok(tiers)
}

pub fn annotations_to_text(tiers: &[AnnotationTier]) -> String {
    let mut out = String::new();
    for t in tiers {
        for iv in &t.intervals {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                t.name,
                (iv.start * 1000.0).round() as i64,
                (iv.end * 1000.0).round() as i64,
                iv.label
            ));
        }
    }
    out
}

pub fn parse_intervals(text: &str, path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed: Option<(f64, f64)> = match fields.as_slice() {
            [a, b] => a.trim().parse().ok().zip(b.trim().parse().ok()),
            _ => None,
        };
        let (a, b) =
            parsed.ok_or_else(|| Error::parse(path, no + 1, "expected start_ms<TAB>end_ms"))?;
        if a < 0.0 || a >= b {
            return Err(Error::parse(
                path,
                no + 1,
                "interval needs 0 <= start < end",
            ));
        }
        out.push((a / 1000.0, b / 1000.0));
    }
    Ok(out)
}

pub fn intervals_to_text(intervals: &[(f64, f64)]) -> String {
    intervals
        .iter()
        .map(|(a, b)| {
            format!(
                "{}\t{}\n",
                (a * 1000.0).round() as i64,
                (b * 1000.0).round() as i64
            )
        })
        .collect()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads one recording; relative paths resolve against `base`. Audio stays
/// on disk, only its header is read.
pub fn load_recording(entry: &ManifestEntry, base: &Path) -> Result<Recording> {
    let audio = resolve(base, &entry.audio);
    let reader = hound::WavReader::open(&audio).map_err(|source| Error::Wav {
        path: audio.clone(),
        source,
    })?;
    let spec = reader.spec();
    let duration = f64::from(reader.duration()) / f64::from(spec.sample_rate);

    let words = load_transcript(&resolve(base, &entry.transcript))?;
    let ann_path = resolve(base, &entry.annotations);
    let ann_text = std::fs::read_to_string(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
    let tiers = parse_annotations(&ann_text, &ann_path)?;
    let interlocutor = match &entry.interlocutor {
        Some(p) => {
            let p = resolve(base, p);
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            parse_intervals(&text, &p)?
        }
        None => Vec::new(),
    };
    Ok(Recording {
        id: entry.id,
        speaker: entry.speaker.clone(),
        audio: AudioRef::File(audio),
        duration,
        sample_rate: spec.sample_rate,
        words,
        tiers,
        interlocutor,
    })
}

pub fn load_corpus(manifest: &Path) -> Result<Vec<Recording>> {
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    load_manifest(manifest)?
        .iter()
        .map(|e| load_recording(e, base))
        .collect()
}
