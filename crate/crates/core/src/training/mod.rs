//! Losses, imbalance handling, the optimisation loop, and random search.

pub mod dataset;
pub mod loss;
pub mod search;
pub mod trainer;
pub mod upsample;

use serde::{Deserialize, Serialize};

use crate::corpus::Property;
use crate::error::{Error, Result};
use crate::net::model::DecoderSpec;
use crate::net::{EncoderSpec, Head, ModelSpec};

pub use dataset::{Dataset, FrameRef};
pub use loss::{class_balanced_weights, loss_frame, LossKind};
pub use search::{random_search, HyperRanges, SearchResult};
pub use trainer::{train, RunRecord, TrainOutcome};
pub use upsample::upsample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Text,
    TextNoTiming,
    Both,
}

impl Modality {
    pub fn uses_audio(self) -> bool {
        matches!(self, Modality::Audio | Modality::Both)
    }

    pub fn uses_text(self) -> bool {
        !matches!(self, Modality::Audio)
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Text => "text",
            Modality::TextNoTiming => "text_no_timing",
            Modality::Both => "both",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(Modality::Audio),
            "text" => Ok(Modality::Text),
            "text_no_timing" => Ok(Modality::TextNoTiming),
            "both" => Ok(Modality::Both),
            other => Err(Error::Config(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderHyper {
    pub layers: usize,
    pub channels: usize,
    pub kernel: usize,
    pub dropout: f64,
    pub embed_dim: usize,
}

impl EncoderHyper {
    pub fn to_spec(&self) -> EncoderSpec {
        EncoderSpec::doubling(
            self.layers,
            self.channels,
            self.kernel,
            self.dropout,
            self.embed_dim,
        )
    }
}

impl Default for EncoderHyper {
    fn default() -> Self {
        Self {
            layers: 2,
            channels: 32,
            kernel: 3,
            dropout: 0.1,
            embed_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Validation scoring interval in steps; 0 scores only after the last step.
    pub eval_every: usize,
    pub upsample: bool,
    pub seed: u64,
    pub precision: Precision,
    pub threshold: f64,
    pub audio: EncoderHyper,
    pub text: EncoderHyper,
    pub decoder: DecoderSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::CrossEntropy,
            learning_rate: 1e-3,
            batch_size: 64,
            steps: 5000,
            eval_every: 500,
            upsample: false,
            seed: 0,
            precision: Precision::F32,
            threshold: 0.5,
            audio: EncoderHyper::default(),
            text: EncoderHyper::default(),
            decoder: DecoderSpec {
                hidden: 64,
                layers: 1,
                dropout: 0.1,
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning rate must be finite and non-negative".into(),
            ));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config(
                "batch size and steps must be positive".into(),
            ));
        }
        self.loss.validate()
    }
}

/// What a model predicts and from which inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub property: Property,
    pub modality: Modality,
    /// Append a speaker one-hot to the fused embedding.
    pub speaker_input: bool,
}

impl Task {
    pub fn head(&self) -> Head {
        let schema = self.property.schema();
        if schema.exclusive {
            Head::Softmax(schema.width())
        } else {
            Head::Sigmoid(schema.width())
        }
    }

    pub fn model_spec(&self, cfg: &TrainConfig, data: &Dataset) -> ModelSpec {
        ModelSpec {
            audio: self.modality.uses_audio().then(|| cfg.audio.to_spec()),
            text: self.modality.uses_text().then(|| cfg.text.to_spec()),
            audio_frames: dataset::AUDIO_FRAMES,
            audio_features: crate::prosody::N_FEATURES,
            text_slots: crate::textfeat::SLOTS,
            text_width: data.dim + 1,
            speakers: if self.speaker_input {
                data.speakers.len()
            } else {
                0
            },
            decoder: cfg.decoder.clone(),
            head: self.head(),
            audio_norm: None,
        }
    }
}
