//! Word vectors and the 7-slot text window.
//!
//! A text window holds the current word (slot 3), up to three preceding and
//! up to three following words. Each slot is the word's embedding followed by
//! the onset of the word relative to the target time, in seconds. Missing
//! slots are all zeros, so a padded slot and a word starting exactly at the
//! target share the same timing value.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 300;
pub const CONTEXT: usize = 3;
pub const SLOTS: usize = 2 * CONTEXT + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Inserts or replaces a word's vector; returns true if it replaced one.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> bool {
        assert_eq!(vector.len(), self.dim, "vector length must equal table dim");
        if let Some(&slot) = self.index.get(word) {
            self.vectors[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(vector);
            true
        } else {
            let slot = self.vectors.len() / self.dim.max(1);
            self.vectors.extend_from_slice(vector);
            self.index.insert(word.to_string(), slot);
            false
        }
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&slot| &self.vectors[slot * self.dim..(slot + 1) * self.dim])
    }

    /// Exact lookup, then lowercase lookup; unknown words map to zeros.
    pub fn embed_word(&self, word: &str) -> Vec<f32> {
        self.lookup(word)
            .map(<[f32]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    pub fn lookup(&self, word: &str) -> Option<&[f32]> {
        self.get(word).or_else(|| {
            let lower = word.to_lowercase();
            (lower != word).then(|| self.get(&lower)).flatten()
        })
    }

    /// Serializes in the word-vector text format with a `<count> <dim>` header.
    /// Words are written in sorted order.
    pub fn to_text(&self) -> String {
        let mut words: Vec<(&String, &usize)> = self.index.iter().collect();
        words.sort();
        let mut out = format!("{} {}\n", words.len(), self.dim);
        for (w, &slot) in words {
            out.push_str(w);
            for v in &self.vectors[slot * self.dim..(slot + 1) * self.dim] {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, path)
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<EmbeddingTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let Some(&(first_no, first)) = lines.peek() else {
        return Err(Error::parse(path, 1, "embedding file is empty"));
    };
    let head: Vec<&str> = first.split_whitespace().collect();
    let header_dim = match head.as_slice() {
        [count, dim] if count.parse::<usize>().is_ok() => match dim.parse::<usize>() {
            Ok(d) if d > 0 => Some(d),
            _ => return Err(Error::parse(path, first_no + 1, "invalid header dimension")),
        },
        _ => None,
    };
    if header_dim.is_some() {
        lines.next();
    }

    let mut table: Option<EmbeddingTable> = header_dim.map(EmbeddingTable::new);
    let mut buf = Vec::new();
    for (no, line) in lines {
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line has a token");
        buf.clear();
        for tok in parts {
            let v: f32 = tok
                .parse()
                .map_err(|_| Error::parse(path, no + 1, format!("non-numeric value `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    no + 1,
                    format!("non-finite value `{tok}`"),
                ));
            }
            buf.push(v);
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(buf.len()));
        if buf.len() != table.dim() || buf.is_empty() {
            return Err(Error::parse(
                path,
                no + 1,
                format!("expected {} values, found {}", table.dim(), buf.len()),
            ));
        }
        if table.insert(word, &buf) {
            log::warn!(
                "{}:{}: duplicate word `{word}`; keeping the last vector",
                path.display(),
                no + 1
            );
        }
    }
    match table {
        Some(t) if !t.is_empty() => Ok(t),
        _ => Err(Error::parse(
            path,
            first_no + 1,
            "embedding file has no vectors",
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordToken {
    pub word: String,
    pub onset: f64,
    pub offset: f64,
}

impl WordToken {
    pub fn new(word: impl Into<String>, onset: f64, offset: f64) -> Self {
        Self {
            word: word.into(),
            onset,
            offset,
        }
    }
}

/// Parses a `onset_ms<TAB>offset_ms<TAB>word` transcript.
pub fn parse_transcript(text: &str, path: &Path) -> Result<Vec<WordToken>> {
    let mut words: Vec<WordToken> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                no + 1,
                "expected onset_ms, offset_ms and word",
            ));
        }
        let ms = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, no + 1, format!("bad time `{s}`")))
        };
        let (onset, offset) = (ms(fields[0])? / 1000.0, ms(fields[1])? / 1000.0);
        if !(0.0 <= onset && onset < offset) {
            return Err(Error::parse(path, no + 1, "word needs 0 <= onset < offset"));
        }
        if words.last().is_some_and(|w| w.onset > onset) {
            return Err(Error::parse(
                path,
                no + 1,
                "transcript is not sorted by onset",
            ));
        }
        words.push(WordToken::new(fields[2].trim(), onset, offset));
    }
    Ok(words)
}

pub fn load_transcript(path: &Path) -> Result<Vec<WordToken>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_transcript(&text, path)
}

pub fn transcript_to_text(words: &[WordToken]) -> String {
    words
        .iter()
        .map(|w| {
            format!(
                "{}\t{}\t{}\n",
                (w.onset * 1000.0).round() as i64,
                (w.offset * 1000.0).round() as i64,
                w.word
            )
        })
        .collect()
}

/// Indices into `words` for the seven slots around time `t`.
pub fn select_window(words: &[WordToken], t: f64) -> [Option<usize>; SLOTS] {
    let mut slots = [None; SLOTS];
    // Number of words with onset <= t.
    let started = words.partition_point(|w| w.onset <= t);
    let current = started as i64 - 1;
    for (k, slot) in slots.iter_mut().enumerate() {
        let idx = current + k as i64 - CONTEXT as i64;
        if idx >= 0 && (idx as usize) < words.len() {
            *slot = Some(idx as usize);
        }
    }
    slots
}

/// Row-major `SLOTS x (dim + 1)` text window.
#[derive(Debug, Clone, PartialEq)]
pub struct TextWindowFeature {
    pub width: usize,
    pub values: Vec<f32>,
}

impl TextWindowFeature {
    pub fn row(&self, slot: usize) -> &[f32] {
        &self.values[slot * self.width..(slot + 1) * self.width]
    }

    pub fn timing(&self, slot: usize) -> f32 {
        self.values[slot * self.width + self.width - 1]
    }
}

/// Writes the window for time `t` into `out` (length `SLOTS * (dim + 1)`).
pub fn fill_text_window(table: &EmbeddingTable, words: &[WordToken], t: f64, out: &mut [f32]) {
    let width = table.dim() + 1;
    assert_eq!(out.len(), SLOTS * width);
    out.fill(0.0);
    for (k, slot) in select_window(words, t).iter().enumerate() {
        if let Some(i) = *slot {
            let row = &mut out[k * width..(k + 1) * width];
            if let Some(v) = table.lookup(&words[i].word) {
                row[..width - 1].copy_from_slice(v);
            }
            row[width - 1] = (words[i].onset - t) as f32;
        }
    }
}

pub fn assemble_text_window(
    table: &EmbeddingTable,
    words: &[WordToken],
    t: f64,
) -> TextWindowFeature {
    let width = table.dim() + 1;
    let mut values = vec![0.0; SLOTS * width];
    fill_text_window(table, words, t, &mut values);
    TextWindowFeature { width, values }
}
