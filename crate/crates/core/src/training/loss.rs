//! Frame losses: cross-entropy, focal, and class-balanced focal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::graph::PROB_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    Focal {
        gamma: f64,
    },
    ClassBalancedFocal {
        gamma: f64,
        #[serde(default = "default_beta")]
        beta: f64,
    },
}

fn default_beta() -> f64 {
    0.999
}

impl LossKind {
    pub fn gamma(self) -> f64 {
        match self {
            LossKind::CrossEntropy => 0.0,
            LossKind::Focal { gamma } | LossKind::ClassBalancedFocal { gamma, .. } => gamma,
        }
    }

    pub fn validate(self) -> Result<()> {
        if self.gamma() < 0.0 || !self.gamma().is_finite() {
            return Err(Error::Config("focal gamma must be >= 0".into()));
        }
        if let LossKind::ClassBalancedFocal { beta, .. } = self {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(
                    "class-balanced beta must lie in [0, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    /// Per-label weights: ones, or the class-balanced weights for the given
    /// per-label counts.
    pub fn weights(self, width: usize, class_counts: Option<&[usize]>) -> Result<Vec<f64>> {
        match self {
            LossKind::ClassBalancedFocal { beta, .. } => {
                let counts = class_counts.ok_or(Error::MissingClassCounts)?;
                Ok(class_balanced_weights(counts, beta))
            }
            _ => Ok(vec![1.0; width]),
        }
    }
}

/// `(1 - β) / (1 - β^n)` per label, counting an empty label as one sample.
pub fn class_balanced_weights(counts: &[usize], beta: f64) -> Vec<f64> {
    counts
        .iter()
        .map(|&n| {
            let n = n.max(1) as f64;
            let den = 1.0 - beta.powf(n);
            if den <= 0.0 {
                1.0
            } else {
                (1.0 - beta) / den
            }
        })
        .collect()
}

fn term(p: f64, positive: bool, gamma: f64) -> f64 {
    let c = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let pt = if positive { c } else { 1.0 - c };
    -(1.0 - pt).powf(gamma) * pt.ln()
}

/// Loss of one frame. For `exclusive` heads the target is one-hot and only the
/// target class contributes; otherwise every label adds a binary term.
pub fn loss_frame(
    probs: &[f64],
    target: &[u8],
    exclusive: bool,
    kind: LossKind,
    class_counts: Option<&[usize]>,
) -> Result<f64> {
    let weights = kind.weights(probs.len(), class_counts)?;
    let gamma = kind.gamma();
    if exclusive {
        Ok(target
            .iter()
            .position(|&t| t != 0)
            .map_or(0.0, |c| weights[c] * term(probs[c], true, gamma)))
    } else {
        Ok(probs
            .iter()
            .zip(target)
            .zip(&weights)
            .map(|((&p, &t), &w)| w * term(p, t != 0, gamma))
            .sum())
    }
}
