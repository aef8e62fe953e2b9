//! Experiment configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{FoldOptions, Property};
use crate::error::{Error, Result};
use crate::training::{HyperRanges, Modality, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    /// Contiguous blocks of every speaker's recordings.
    #[default]
    Within,
    /// As `within`, with a speaker one-hot appended to the model input.
    WithinId,
    /// Leave one speaker out.
    Between,
}

impl CvMode {
    pub fn name(self) -> &'static str {
        match self {
            CvMode::Within => "within",
            CvMode::WithinId => "within_id",
            CvMode::Between => "between",
        }
    }
}

impl std::str::FromStr for CvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within" => Ok(CvMode::Within),
            "within_id" => Ok(CvMode::WithinId),
            "between" => Ok(CvMode::Between),
            other => Err(Error::Config(format!("unknown cv mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub runs: usize,
    /// Within-speaker folds used to score each sampled configuration.
    pub folds: usize,
    pub ranges: HyperRanges,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            runs: 50,
            folds: 10,
            ranges: HyperRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub manifests: Vec<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Directory written by `features`; prosody is read from there when set.
    pub features: Option<PathBuf>,
    pub properties: Vec<Property>,
    pub modality: Modality,
    pub cv: CvMode,
    /// Number of folds for the within-speaker modes.
    pub folds: usize,
    pub fold_options: FoldOptions,
    /// Recording ids excluded from every fold.
    pub holdout: Vec<u32>,
    pub train: TrainConfig,
    pub search: SearchConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifests: Vec::new(),
            embeddings: None,
            features: None,
            properties: vec![
                Property::Presence,
                Property::Phase,
                Property::Category,
                Property::Semantics,
            ],
            modality: Modality::Both,
            cv: CvMode::Within,
            folds: 20,
            fold_options: FoldOptions::default(),
            holdout: Vec::new(),
            train: TrainConfig::default(),
            search: SearchConfig::default(),
            out: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.manifests.iter_mut().for_each(rebase);
        cfg.embeddings.iter_mut().for_each(rebase);
        cfg.features.iter_mut().for_each(rebase);
        rebase(&mut cfg.out);
        Ok(cfg)
    }

    /// Pushes the master seed into the training config so reports echo one value.
    pub fn resolved(mut self) -> Self {
        self.train.seed = self.seed;
        self
    }

    pub fn speaker_input(&self) -> bool {
        self.cv == CvMode::WithinId
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Checks everything that can fail before any computation starts.
    pub fn validate(&self) -> Result<()> {
        if self.manifests.is_empty() {
            return Err(Error::Config("no corpus manifest given".into()));
        }
        for m in &self.manifests {
            if !m.is_file() {
                return Err(Error::Config(format!(
                    "manifest {} does not exist",
                    m.display()
                )));
            }
        }
        match &self.embeddings {
            Some(p) if !p.is_file() => {
                return Err(Error::Config(format!(
                    "embedding file {} does not exist",
                    p.display()
                )))
            }
            None if self.modality.uses_text() => {
                return Err(Error::Config(format!(
                    "modality `{}` needs an embedding file",
                    self.modality.name()
                )))
            }
            _ => {}
        }
        if let Some(f) = &self.features {
            if !f.is_dir() {
                return Err(Error::Config(format!(
                    "feature directory {} does not exist",
                    f.display()
                )));
            }
        }
        if self.properties.is_empty() {
            return Err(Error::Config("no property selected".into()));
        }
        let mut props = self.properties.clone();
        props.sort();
        props.dedup();
        if props.len() != self.properties.len() {
            return Err(Error::Config("properties listed twice".into()));
        }
        if self.cv != CvMode::Between && self.folds < 2 {
            return Err(Error::Config(
                "within-speaker cross-validation needs at least 2 folds".into(),
            ));
        }
        if self.search.runs == 0 || self.search.folds < 2 {
            return Err(Error::Config(
                "search needs at least one run and two folds".into(),
            ));
        }
        self.search.ranges.validate()?;
        self.train.validate()
    }
}
