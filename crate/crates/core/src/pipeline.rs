//! Shared data preparation for the command line and the experiments.

use crate::corpus::{split, DialogueExample, EmotionLexicon, RawDialogue, Split, Vocab};
use crate::error::{EcmError, Result};

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: Vocab,
    pub raw: Split<RawDialogue>,
    pub train: Vec<DialogueExample>,
    pub valid: Vec<DialogueExample>,
    pub test: Vec<DialogueExample>,
}

/// Splits, builds the vocabulary from the training posts and responses, and encodes.
pub fn prepare(
    dialogues: &[RawDialogue],
    lexicon: &EmotionLexicon,
    max_vocab: usize,
    max_len: usize,
    ratios: [f64; 3],
    seed: u64,
) -> Result<PreparedData> {
    if dialogues.is_empty() {
        return Err(EcmError::Config("empty dialogue corpus".into()));
    }
    let raw = split(dialogues, ratios, seed)?;
    let vocab = Vocab::build(raw.train.iter().flat_map(|d| [d.post.as_slice(), d.response.as_slice()]), max_vocab, lexicon)?;
    Ok(encode_split(vocab, raw, max_len))
}

pub fn encode_split(vocab: Vocab, raw: Split<RawDialogue>, max_len: usize) -> PreparedData {
    let enc = |v: &[RawDialogue]| v.iter().map(|d| d.encode(&vocab, max_len)).filter(|e| !e.post.is_empty()).collect::<Vec<_>>();
    let (train, valid, test) = (enc(&raw.train), enc(&raw.valid), enc(&raw.test));
    PreparedData { vocab, raw, train, valid, test }
}
