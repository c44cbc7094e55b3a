//! TOML run configuration. Every section is optional and falls back to the
//! library defaults; file paths default to fixed names under `workdir`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use ecm_core::classifier::ClassifierConfig;
use ecm_core::inference::DecodeConfig;
use ecm_core::model::EcmConfig;
use ecm_core::training::{Stage, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub seed: u64,
    pub pairs: usize,
    /// Sentences for classifier training; a fifth as many more are held out.
    pub classifier_sentences: usize,
    pub empathy: f64,
    pub max_vocab: usize,
    pub split: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { seed: 7, pairs: 6000, classifier_sentences: 2400, empathy: 0.6, max_vocab: 2000, split: [0.8, 0.1, 0.1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Distinct test posts used for emotion accuracy.
    pub max_posts: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { max_posts: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub workdir: PathBuf,
    /// Emotion lexicon TSV (`word<TAB>Category`); the built-in lexicon when unset.
    pub lexicon: Option<PathBuf>,
    pub data: DataConfig,
    pub classifier: ClassifierConfig,
    pub model: EcmConfig,
    pub pretrain: TrainConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            workdir: PathBuf::from("runs/desk"),
            lexicon: None,
            data: DataConfig::default(),
            classifier: ClassifierConfig::default(),
            model: EcmConfig::default(),
            pretrain: TrainConfig { stage: Stage::Pretrain, ..Default::default() },
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path`, or the defaults when `None`. A relative `workdir` is
    /// resolved against the current directory.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }
}

/// File names inside the work directory.
pub mod files {
    pub const DIALOGUES: &str = "dialogues.jsonl";
    pub const SENTENCES: &str = "sentences.jsonl";
    pub const HELD_OUT: &str = "sentences.held.jsonl";
    pub const CLASSIFIER: &str = "classifier.ckpt";
    pub const ANNOTATED: &str = "annotated.jsonl";
    pub const PRETRAINED: &str = "pretrained.ckpt";
    pub const MODEL: &str = "model.ckpt";
    pub const PRETRAIN_LOG: &str = "pretrain.log.csv";
    pub const TRAIN_LOG: &str = "train.log.csv";
}
