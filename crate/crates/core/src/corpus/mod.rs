//! Dialogue data: emotion categories, lexicon, vocabulary and corpus I/O.

mod dataset;
mod emotion;
mod lexicon;
pub mod synthetic;
mod vocab;

use std::path::Path;

pub use dataset::{
    load_corpus, load_sentences, read_dialogues, read_sentences, save_corpus, save_sentences, split, write_dialogues,
    DialogueExample, LabeledSentence, RawDialogue, Split,
};
pub use emotion::{EmotionCategory, UnknownEmotion};
pub use lexicon::EmotionLexicon;
pub use vocab::{TokenKind, Vocab, EOS, EOS_ID, GO, GO_ID, PAD, PAD_ID, SPECIALS, UNK, UNK_ID};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("ingestion error at line {line}: {msg}")]
    Ingestion { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("lexicon error: {0}")]
    Lexicon(String),
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CorpusError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.display().to_string(), source }
    }
}

/// Lowercases and splits on whitespace. Punctuation is expected to be pre-spaced.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}
