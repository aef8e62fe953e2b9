//! Gesture-property label schemas and label-string encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Presence,
    Phase,
    Category,
    Semantics,
}

impl Property {
    pub const ANNOTATED: [Property; 3] = [Property::Phase, Property::Category, Property::Semantics];

    pub fn name(self) -> &'static str {
        match self {
            Property::Presence => "presence",
            Property::Phase => "phase",
            Property::Category => "category",
            Property::Semantics => "semantics",
        }
    }

    pub fn schema(self) -> PropertySchema {
        PropertySchema::of(self)
    }
}

impl std::fmt::Display for Property {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "presence" => Ok(Property::Presence),
            "phase" => Ok(Property::Phase),
            "category" => Ok(Property::Category),
            "semantics" => Ok(Property::Semantics),
            other => Err(Error::Config(format!("unknown property `{other}`"))),
        }
    }
}

pub const PHASE_LABELS: [&str; 5] = [
    "retraction",
    "preparation",
    "pre-hold",
    "stroke",
    "post-hold",
];
pub const CATEGORY_LABELS: [&str; 4] = ["deictic", "beat", "iconic", "discourse"];
pub const SEMANTICS_LABELS: [&str; 4] = ["amount", "shape", "direction", "size"];
pub const PRESENCE_LABELS: [&str; 1] = ["gesture"];

/// Phase indices from strongest to weakest claim on a frame.
pub const PHASE_PRECEDENCE: [usize; 5] = [3, 1, 2, 4, 0];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertySchema {
    pub property: Property,
    pub labels: &'static [&'static str],
    pub exclusive: bool,
}

impl PropertySchema {
    pub fn of(property: Property) -> Self {
        let (labels, exclusive): (&'static [&'static str], bool) = match property {
            Property::Presence => (&PRESENCE_LABELS, false),
            Property::Phase => (&PHASE_LABELS, true),
            Property::Category => (&CATEGORY_LABELS, false),
            Property::Semantics => (&SEMANTICS_LABELS, false),
        };
        Self {
            property,
            labels,
            exclusive,
        }
    }

    pub fn width(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| *l == label)
    }
}

/// Lowercases, trims, and collapses whitespace around hyphens.
pub fn normalize_label(label: &str) -> String {
    label
        .trim()
        .to_lowercase()
        .split('-')
        .map(str::trim)
        .collect::<Vec<_>>()
        .join("-")
}

/// Encodes a hyphen-joined label string as a binary vector over the schema.
///
/// Labels that themselves contain hyphens (`pre-hold`) are matched greedily
/// against the longest run of tokens. For exclusive schemas several tokens are
/// resolved by phase precedence.
pub fn encode_labels(label: &str, schema: &PropertySchema, tier: &str) -> Result<Vec<u8>> {
    let mut bits = vec![0u8; schema.width()];
    let norm = normalize_label(label);
    if norm.is_empty() {
        return Ok(bits);
    }
    let tokens: Vec<&str> = norm.split('-').filter(|t| !t.is_empty()).collect();
    let mut i = 0;
    while i < tokens.len() {
        let mut matched = None;
        for j in (i + 1..=tokens.len()).rev() {
            if let Some(idx) = schema.index_of(&tokens[i..j].join("-")) {
                matched = Some((idx, j));
                break;
            }
        }
        match matched {
            Some((idx, next)) => {
                bits[idx] = 1;
                i = next;
            }
            None => {
                return Err(Error::UnknownLabel {
                    token: tokens[i].to_string(),
                    tier: tier.to_string(),
                })
            }
        }
    }
    if schema.exclusive {
        resolve_exclusive(&mut bits);
    }
    Ok(bits)
}

/// Keeps only the highest-precedence phase bit. Returns true if a conflict was
/// resolved.
pub fn resolve_exclusive(bits: &mut [u8]) -> bool {
    if bits.iter().filter(|&&b| b != 0).count() <= 1 {
        return false;
    }
    let winner = PHASE_PRECEDENCE
        .iter()
        .copied()
        .find(|&i| i < bits.len() && bits[i] != 0)
        .expect("at least two bits are set");
    bits.iter_mut().for_each(|b| *b = 0);
    bits[winner] = 1;
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hand {
    Left,
    Right,
}

/// Maps a tier name such as `R.G.Left Phase` or `R.G.Right.Phrase` to the
/// property it annotates and the hand.
pub fn classify_tier(name: &str) -> Option<(Property, Option<Hand>)> {
    let lower = name.to_lowercase();
    let property = if lower.contains("phrase") {
        Property::Category
    } else if lower.contains("phase") {
        Property::Phase
    } else if lower.contains("semantic") {
        Property::Semantics
    } else {
        return None;
    };
    let hand = if lower.contains("left") {
        Some(Hand::Left)
    } else if lower.contains("right") {
        Some(Hand::Right)
    } else {
        None
    };
    Some((property, hand))
}
