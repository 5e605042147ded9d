//! Run configuration: one JSON document for a whole experiment.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::harness::TrainConfig;
use crate::semgraph::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Sentence loss plus `beta` times the concept loss.
    #[default]
    Joint,
    /// Sentence loss only.
    Sentence,
}

impl FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "joint" => Ok(LossMode::Joint),
            "sentence" => Ok(LossMode::Sentence),
            _ => Err(format!("unknown loss mode `{s}`")),
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Joint => "joint",
            LossMode::Sentence => "sentence",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub coref: Option<PathBuf>,
    /// Sentence embedding file; the hash encoder is used when absent.
    pub embeddings: Option<PathBuf>,
    /// Precomputed context embeddings keyed `dialog:turn:sentence`.
    pub context_embeddings: Option<PathBuf>,
    pub dialogs: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub variant: Variant,
    pub loss: LossMode,
    pub context_window: usize,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            variant: Variant::Full,
            loss: LossMode::Joint,
            context_window: crate::DEFAULT_CONTEXT_WINDOW,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Training settings with the loss mode applied.
    pub fn effective_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        if self.loss == LossMode::Sentence {
            t.egat.beta = 0.0;
        }
        t
    }
}
