use std::collections::BTreeMap;
use std::path::Path;

use super::{tokenize, CorpusError, EmotionCategory};

/// Emotion word list: token to its (non-Other) category.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmotionLexicon {
    words: BTreeMap<String, EmotionCategory>,
}

const ANGRY: &[&str] = &[
    "angry", "furious", "mad", "outraged", "livid", "irate", "enraged", "fuming", "annoyed", "irritated",
    "infuriated", "cross", "hostile", "resentful", "bitter", "indignant", "seething", "raging", "heated",
    "incensed", "wrathful", "exasperated", "provoked", "agitated", "vexed", "aggravated", "huffy", "sore",
    "riled", "irked",
];
const DISGUST: &[&str] = &[
    "disgusting", "gross", "nasty", "revolting", "vile", "repulsive", "sickening", "awful", "horrible",
    "filthy", "foul", "yucky", "rotten", "hideous", "nauseating", "repugnant", "offensive", "loathsome",
    "distasteful", "obnoxious", "creepy", "icky", "putrid", "rancid", "grimy", "sleazy", "shameful",
    "appalling", "dreadful", "atrocious",
];
const HAPPY: &[&str] = &[
    "happy", "glad", "joyful", "cheerful", "delighted", "thrilled", "excited", "elated", "ecstatic", "jolly",
    "merry", "pleased", "overjoyed", "blissful", "content", "upbeat", "gleeful", "jubilant", "chirpy",
    "sunny", "euphoric", "festive", "buoyant", "grinning", "laughing", "celebrating", "stoked", "hooray",
    "yay", "haha",
];
const LIKE: &[&str] = &[
    "lovely", "adorable", "cute", "beautiful", "wonderful", "awesome", "amazing", "charming", "sweet",
    "gorgeous", "fantastic", "brilliant", "marvelous", "excellent", "admire", "love", "adore", "cherish",
    "fond", "precious", "delightful", "pretty", "elegant", "stunning", "superb", "splendid", "terrific",
    "fabulous", "lovable", "darling",
];
const SAD: &[&str] = &[
    "sad", "unhappy", "sorrowful", "depressed", "miserable", "gloomy", "heartbroken", "lonely", "upset",
    "crying", "tearful", "grieving", "mournful", "hopeless", "melancholy", "blue", "downcast", "devastated",
    "hurt", "sorry", "regretful", "heartsick", "broken", "weeping", "despair", "dismal", "forlorn",
    "wretched", "glum", "homesick",
];

impl EmotionLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// The in-repo toy lexicon: 30 words for each non-Other category.
    pub fn builtin() -> Self {
        let mut lex = Self::new();
        for (cat, words) in [
            (EmotionCategory::Angry, ANGRY),
            (EmotionCategory::Disgust, DISGUST),
            (EmotionCategory::Happy, HAPPY),
            (EmotionCategory::Like, LIKE),
            (EmotionCategory::Sad, SAD),
        ] {
            for w in words {
                lex.insert(w, cat).expect("builtin lexicon is consistent");
            }
        }
        lex
    }

    /// Adds a word. A word may belong to one category only, and never to Other.
    pub fn insert(&mut self, token: &str, category: EmotionCategory) -> Result<(), CorpusError> {
        if category == EmotionCategory::Other {
            return Err(CorpusError::Lexicon(format!("{token:?}: Other is not a lexicon category")));
        }
        let key = token.trim().to_lowercase();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(CorpusError::Lexicon(format!("{token:?} is not a single token")));
        }
        match self.words.get(&key) {
            Some(&c) if c != category => Err(CorpusError::Lexicon(format!("{key:?} listed as both {c} and {category}"))),
            _ => {
                self.words.insert(key, category);
                Ok(())
            }
        }
    }

    pub fn get(&self, token: &str) -> Option<EmotionCategory> {
        self.words.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, EmotionCategory)> {
        self.words.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn words_of(&self, category: EmotionCategory) -> Vec<&str> {
        self.iter().filter(|&(_, c)| c == category).map(|(w, _)| w).collect()
    }

    /// `token<TAB>category` per line; blank lines and `#` comments are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (tok, cat) = line
                .split_once('\t')
                .ok_or_else(|| CorpusError::Ingestion { line: i + 1, msg: "expected token<TAB>category".into() })?;
            let cat: EmotionCategory =
                cat.trim().parse().map_err(|e: super::UnknownEmotion| CorpusError::Ingestion { line: i + 1, msg: e.to_string() })?;
            let toks = tokenize(tok);
            if toks.len() != 1 {
                return Err(CorpusError::Ingestion { line: i + 1, msg: format!("{tok:?} is not a single token") });
            }
            lex.insert(&toks[0], cat)
                .map_err(|e| CorpusError::Ingestion { line: i + 1, msg: e.to_string() })?;
        }
        Ok(lex)
    }

    pub fn to_tsv(&self) -> String {
        self.iter().map(|(w, c)| format!("{w}\t{c}\n")).collect()
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_tsv()).map_err(|e| CorpusError::io(path, e))
    }
}
