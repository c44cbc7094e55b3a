use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, EmotionCategory, EmotionLexicon};

pub const PAD: &str = "PAD";
pub const GO: &str = "GO";
pub const EOS: &str = "EOS";
pub const UNK: &str = "UNK";
pub const SPECIALS: [&str; 4] = [PAD, GO, EOS, UNK];

pub const PAD_ID: usize = 0;
pub const GO_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Special,
    Generic,
    Emotion,
}

/// Token inventory split into specials, generic words and emotion words.
///
/// Ids are laid out as `[specials | generic | emotion]`, so the generic output
/// vocabulary is `0..emotion_start()` and the emotion vocabulary is
/// `emotion_start()..len()`. The two never intersect.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    categories: Vec<Option<EmotionCategory>>,
    kinds: Vec<TokenKind>,
    index: HashMap<String, usize>,
    emotion_start: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabEntry {
    token: String,
    kind: TokenKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    category: Option<EmotionCategory>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    tokens: Vec<VocabEntry>,
}

const VOCAB_VERSION: u32 = 1;

impl Vocab {
    /// Frequency-ranked vocabulary over whitespace tokens. Ties break alphabetically.
    /// `max_size` counts the four specials.
    pub fn build<'a, I>(sentences: I, max_size: usize, lexicon: &EmotionLexicon) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if max_size <= SPECIALS.len() {
            return Err(CorpusError::Config(format!("max vocab size {max_size} leaves no room beyond the specials")));
        }
        let mut freq: HashMap<&str, usize> = HashMap::new();
        let mut any = false;
        for sentence in sentences {
            any = true;
            for tok in sentence {
                if SPECIALS.contains(&tok.as_str()) {
                    continue;
                }
                *freq.entry(tok.as_str()).or_default() += 1;
            }
        }
        if !any || freq.is_empty() {
            return Err(CorpusError::Ingestion { line: 0, msg: "empty corpus".into() });
        }
        let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(max_size - SPECIALS.len());

        let (emotion, generic): (Vec<_>, Vec<_>) = ranked.into_iter().partition(|(w, _)| lexicon.contains(w));
        let mut entries: Vec<(String, Option<EmotionCategory>, TokenKind)> =
            SPECIALS.iter().map(|s| (s.to_string(), None, TokenKind::Special)).collect();
        entries.extend(generic.into_iter().map(|(w, _)| (w.to_string(), None, TokenKind::Generic)));
        entries.extend(emotion.into_iter().map(|(w, _)| (w.to_string(), lexicon.get(w), TokenKind::Emotion)));
        Self::from_entries(entries)
    }

    fn from_entries(entries: Vec<(String, Option<EmotionCategory>, TokenKind)>) -> Result<Self, CorpusError> {
        let mut v = Vocab {
            tokens: Vec::with_capacity(entries.len()),
            categories: Vec::with_capacity(entries.len()),
            kinds: Vec::with_capacity(entries.len()),
            index: HashMap::with_capacity(entries.len()),
            emotion_start: 0,
        };
        for (i, (tok, cat, kind)) in entries.into_iter().enumerate() {
            if i < SPECIALS.len() && (tok != SPECIALS[i] || kind != TokenKind::Special) {
                return Err(CorpusError::Vocab(format!("id {i} must be special {}", SPECIALS[i])));
            }
            if i >= SPECIALS.len() && kind == TokenKind::Special {
                return Err(CorpusError::Vocab(format!("unexpected special {tok:?} at id {i}")));
            }
            if (kind == TokenKind::Emotion) != cat.is_some() || cat == Some(EmotionCategory::Other) {
                return Err(CorpusError::Vocab(format!("{tok:?}: emotion tokens need exactly one non-Other category")));
            }
            if let Some(&prev) = v.kinds.last() {
                if prev == TokenKind::Emotion && kind != TokenKind::Emotion {
                    return Err(CorpusError::Vocab(format!("{tok:?} at id {i}: generic tokens must precede emotion tokens")));
                }
            }
            if v.index.insert(tok.clone(), i).is_some() {
                return Err(CorpusError::Vocab(format!("duplicate token {tok:?}")));
            }
            v.tokens.push(tok);
            v.categories.push(cat);
            v.kinds.push(kind);
        }
        if v.tokens.len() < SPECIALS.len() {
            return Err(CorpusError::Vocab("missing specials".into()));
        }
        v.emotion_start = v.kinds.iter().position(|&k| k == TokenKind::Emotion).unwrap_or(v.tokens.len());
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// First emotion-word id; equals the size of the generic output vocabulary (specials included).
    pub fn emotion_start(&self) -> usize {
        self.emotion_start
    }

    pub fn generic_output_size(&self) -> usize {
        self.emotion_start
    }

    pub fn emotion_output_size(&self) -> usize {
        self.tokens.len() - self.emotion_start
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK, |s| s.as_str())
    }

    pub fn kind(&self, id: usize) -> TokenKind {
        self.kinds[id]
    }

    pub fn category(&self, id: usize) -> Option<EmotionCategory> {
        self.categories.get(id).copied().flatten()
    }

    pub fn is_emotion(&self, id: usize) -> bool {
        id >= self.emotion_start && id < self.tokens.len()
    }

    pub fn generic_ids(&self) -> BTreeSet<usize> {
        (0..self.len()).filter(|&i| self.kinds[i] == TokenKind::Generic).collect()
    }

    pub fn emotion_ids(&self, category: EmotionCategory) -> BTreeSet<usize> {
        (0..self.len()).filter(|&i| self.categories[i] == Some(category)).collect()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK_ID)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Emotion-word flags used to supervise the type selector.
    pub fn emotion_flags(&self, ids: &[usize]) -> Vec<bool> {
        ids.iter().map(|&i| self.is_emotion(i)).collect()
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            version: VOCAB_VERSION,
            tokens: (0..self.len())
                .map(|i| VocabEntry { token: self.tokens[i].clone(), kind: self.kinds[i], category: self.categories[i] })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocab serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let file: VocabFile = serde_json::from_str(text).map_err(|e| CorpusError::Vocab(e.to_string()))?;
        if file.version != VOCAB_VERSION {
            return Err(CorpusError::Vocab(format!("unsupported vocab version {}", file.version)));
        }
        Self::from_entries(file.tokens.into_iter().map(|e| (e.token, e.category, e.kind)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json()).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_json(&text)
    }
}
