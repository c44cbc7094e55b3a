use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{tokenize, CorpusError, EmotionCategory, Vocab};

/// One post-response pair as text tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawDialogue {
    pub post: Vec<String>,
    pub response: Vec<String>,
    pub emotion: Option<EmotionCategory>,
}

/// Labeled single sentence, used to train and evaluate emotion classifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub tokens: Vec<String>,
    pub emotion: EmotionCategory,
}

/// Encoded training triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueExample {
    pub post: Vec<usize>,
    pub response: Vec<usize>,
    pub emotion: Option<EmotionCategory>,
    /// `q[t]` is set when `response[t]` is an emotion word of any category.
    pub q: Vec<bool>,
}

impl DialogueExample {
    pub fn new(post: Vec<usize>, response: Vec<usize>, emotion: Option<EmotionCategory>, vocab: &Vocab) -> Self {
        let q = vocab.emotion_flags(&response);
        DialogueExample { post, response, emotion, q }
    }
}

impl RawDialogue {
    pub fn new(post: &str, response: &str, emotion: Option<EmotionCategory>) -> Self {
        RawDialogue { post: tokenize(post), response: tokenize(response), emotion }
    }

    /// Encodes with the vocabulary, truncating both sides to `max_len` tokens.
    pub fn encode(&self, vocab: &Vocab, max_len: usize) -> DialogueExample {
        let cut = |v: &[String]| vocab.encode(&v[..v.len().min(max_len)]);
        DialogueExample::new(cut(&self.post), cut(&self.response), self.emotion, vocab)
    }
}

#[derive(Serialize, Deserialize)]
struct DialogueLine {
    post: String,
    response: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    emotion: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct SentenceLine {
    text: String,
    emotion: String,
}

fn parse_lines<R: BufRead, T>(reader: R, mut parse: impl FnMut(&str) -> Result<T, String>) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Ingestion { line: i + 1, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(&line).map_err(|msg| CorpusError::Ingestion { line: i + 1, msg })?);
    }
    Ok(out)
}

fn parse_emotion(s: &str) -> Result<EmotionCategory, String> {
    s.parse().map_err(|e: super::UnknownEmotion| e.to_string())
}

/// Reads dialogue JSONL: `{"post": "...", "response": "...", "emotion": "Happy"}` with `emotion` optional.
pub fn read_dialogues<R: BufRead>(reader: R) -> Result<Vec<RawDialogue>, CorpusError> {
    parse_lines(reader, |line| {
        let d: DialogueLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let emotion = d.emotion.as_deref().map(parse_emotion).transpose()?;
        let raw = RawDialogue::new(&d.post, &d.response, emotion);
        if raw.post.is_empty() || raw.response.is_empty() {
            return Err("post and response must be non-empty".into());
        }
        Ok(raw)
    })
}

pub fn load_corpus(path: &Path) -> Result<Vec<RawDialogue>, CorpusError> {
    let f = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_dialogues(BufReader::new(f))
}

pub fn write_dialogues<W: Write>(mut w: W, dialogues: &[RawDialogue]) -> std::io::Result<()> {
    for d in dialogues {
        let line = DialogueLine {
            post: d.post.join(" "),
            response: d.response.join(" "),
            emotion: d.emotion.map(|e| e.name().to_string()),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(path: &Path, dialogues: &[RawDialogue]) -> Result<(), CorpusError> {
    let f = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_dialogues(&mut w, dialogues).map_err(|e| CorpusError::io(path, e))?;
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// Reads sentence JSONL: `{"text": "...", "emotion": "Sad"}`.
pub fn read_sentences<R: BufRead>(reader: R) -> Result<Vec<LabeledSentence>, CorpusError> {
    parse_lines(reader, |line| {
        let s: SentenceLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        Ok(LabeledSentence { tokens: tokenize(&s.text), emotion: parse_emotion(&s.emotion)? })
    })
}

pub fn load_sentences(path: &Path) -> Result<Vec<LabeledSentence>, CorpusError> {
    let f = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_sentences(BufReader::new(f))
}

pub fn save_sentences(path: &Path, sentences: &[LabeledSentence]) -> Result<(), CorpusError> {
    let f = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for s in sentences {
        let line = SentenceLine { text: s.tokens.join(" "), emotion: s.emotion.name().to_string() };
        serde_json::to_writer(&mut w, &line).map_err(|e| CorpusError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then `ratios = [train, valid, test]` partitioning.
/// Validation and test sizes are rounded; train takes the remainder.
pub fn split<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<Split<T>, CorpusError> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Config(format!("split ratios {ratios:?} must be in [0, 1] and sum to 1")));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = items.len() as f64;
    let n_valid = (n * ratios[1]).round() as usize;
    let n_test = ((n * ratios[2]).round() as usize).min(items.len() - n_valid);
    let n_train = items.len() - n_valid - n_test;
    let take = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: take(&order[..n_train]),
        valid: take(&order[n_train..n_train + n_valid]),
        test: take(&order[n_train + n_valid..]),
    })
}
