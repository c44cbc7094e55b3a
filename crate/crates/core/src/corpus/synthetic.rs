//! Template-driven stand-in for an emotion-annotated conversation corpus.
//!
//! Each synthetic post is answered several times with responses of different
//! emotion categories. A response is fully determined by the post template and
//! the response category, which makes the mapping learnable at desk scale.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{tokenize, CorpusError, EmotionCategory, EmotionLexicon, LabeledSentence, RawDialogue};

/// Response-category counts of the large annotated Weibo corpus (Angry..Other).
pub const REFERENCE_MIXTURE: [f64; 6] = [234_635.0, 689_295.0, 306_364.0, 1_226_954.0, 537_028.0, 1_365_371.0];

const NOUN_SLOT: &str = "{N}";
const EMOTION_SLOT: &str = "{E}";
const CUE_SLOT: &str = "{C}";

#[derive(Debug, Clone)]
pub struct TemplateBank {
    /// Must contain `{N}` and `{E}`; `{E}` takes the post's emotion word.
    pub post_templates: Vec<String>,
    /// Indexed by [`EmotionCategory::index`]. Non-Other templates contain `{E}`.
    pub response_templates: [Vec<String>; 6],
    pub nouns: Vec<String>,
    /// Fillers for `{E}` in posts whose emotion is Other.
    pub neutral_words: Vec<String>,
    /// Classifier-corpus templates with a `{C}` cue slot and a `{N}` slot.
    pub cue_templates: Vec<String>,
    /// Emotion cues that are not lexicon words, per non-Other category.
    pub cue_words: [Vec<String>; 5],
}

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for TemplateBank {
    fn default() -> Self {
        TemplateBank {
            post_templates: owned(&[
                "my {N} is {E} today",
                "i think the new {N} looks {E}",
                "this {N} made me feel {E}",
                "why is everyone so {E} about the {N}",
                "just saw a {E} {N} downtown",
                "the {N} at work was {E} again",
                "honestly the {N} is {E}",
                "my friend says the {N} is {E}",
                "look at this {E} {N}",
                "the whole {N} story is {E}",
                "woke up and the {N} was {E}",
                "can you believe the {N} is so {E}",
            ]),
            response_templates: [
                owned(&["that makes me so {E}", "i am really {E} about it", "seriously , this makes me {E}", "i feel {E} just hearing that"]),
                owned(&["ugh , that is {E}", "that sounds {E} to me", "how {E} , i can not stand it"]),
                owned(&["that makes me so {E}", "i am {E} to hear that", "wow , i feel {E} now"]),
                owned(&["that is so {E}", "what a {E} thing", "i think it is {E}"]),
                owned(&["that makes me feel {E}", "i am so {E} to hear that", "oh no , that is {E}"]),
                owned(&["i see , tell me more", "what happened next", "ok , thanks for telling me", "let me think about that"]),
            ],
            nouns: owned(&[
                "weather", "movie", "coffee", "dog", "cat", "boss", "phone", "game", "song", "dinner", "train", "party",
                "book", "city", "class", "team", "car", "neighbor", "show", "market",
            ]),
            neutral_words: owned(&["normal", "usual", "ordinary", "fine", "okay", "quiet", "typical", "regular", "average", "plain"]),
            cue_templates: owned(&[
                "i could not stop {C} after the {N}",
                "the {N} left me {C}",
                "there was so much {C} at the {N}",
                "after the {N} it was all {C}",
            ]),
            cue_words: [
                owned(&["scream", "slammed", "yelling", "punch", "shouting"]),
                owned(&["vomit", "puke", "gag", "stench", "smells"]),
                owned(&["smiling", "dancing", "grin", "partying", "singing"]),
                owned(&["crush", "favorite", "treasure", "worship", "hearts"]),
                owned(&["tears", "sobbing", "funeral", "goodbye", "alone"]),
            ],
        }
    }
}

impl TemplateBank {
    /// Checks the structural requirements the generator relies on.
    pub fn validate(&self, lexicon: &EmotionLexicon) -> Result<(), CorpusError> {
        let cfg = |m: String| Err(CorpusError::Config(m));
        let lexical = |t: &str| tokenize(t).into_iter().filter(|w| lexicon.contains(w)).collect::<Vec<_>>();
        if self.post_templates.len() < 3 {
            return cfg(format!("need at least 3 post templates, got {}", self.post_templates.len()));
        }
        for t in &self.post_templates {
            if !t.contains(NOUN_SLOT) || !t.contains(EMOTION_SLOT) {
                return cfg(format!("post template {t:?} needs {NOUN_SLOT} and {EMOTION_SLOT}"));
            }
            if !lexical(t).is_empty() {
                return cfg(format!("post template {t:?} contains lexicon words"));
            }
        }
        for cat in EmotionCategory::ALL {
            let ts = &self.response_templates[cat.index()];
            if ts.len() < 3 {
                return cfg(format!("need at least 3 {cat} response templates, got {}", ts.len()));
            }
            for t in ts {
                if !lexical(t).is_empty() {
                    return cfg(format!("response template {t:?} contains fixed lexicon words"));
                }
                if (cat == EmotionCategory::Other) == t.contains(EMOTION_SLOT) {
                    return cfg(format!("{cat} response template {t:?}: {EMOTION_SLOT} is required exactly for non-Other"));
                }
            }
            if cat != EmotionCategory::Other && lexicon.words_of(cat).is_empty() {
                return cfg(format!("lexicon has no {cat} words"));
            }
        }
        if self.nouns.is_empty() || self.neutral_words.is_empty() {
            return cfg("nouns and neutral words must be non-empty".into());
        }
        for w in self.nouns.iter().chain(&self.neutral_words).chain(self.cue_words.iter().flatten()) {
            if lexicon.contains(w) {
                return cfg(format!("filler {w:?} is a lexicon word"));
            }
        }
        if self.cue_templates.is_empty() || self.cue_words.iter().any(|c| c.is_empty()) {
            return cfg("cue templates and cue words must be non-empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_pairs: usize,
    /// Relative response-category weights, Angry..Other.
    pub mixture: [f64; 6],
    /// Responses per post.
    pub group_size: usize,
    /// Fraction of a post's responses that share the post's own emotion.
    pub empathy: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { seed: 7, n_pairs: 6000, mixture: REFERENCE_MIXTURE, group_size: 5, empathy: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub dialogue: RawDialogue,
    pub post_template: usize,
    pub post_emotion: EmotionCategory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub pairs: Vec<SyntheticPair>,
    /// Response emotion histogram, Angry..Other.
    pub counts: [usize; 6],
}

impl SyntheticCorpus {
    pub fn dialogues(&self) -> Vec<RawDialogue> {
        self.pairs.iter().map(|p| p.dialogue.clone()).collect()
    }
}

/// Exact integer split of `n` by `weights` (largest remainder, ties to the earlier category).
pub fn apportion(n: usize, weights: &[f64; 6]) -> Result<[usize; 6], CorpusError> {
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || total <= 0.0 {
        return Err(CorpusError::Config(format!("invalid mixture {weights:?}")));
    }
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts = [0usize; 6];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    Ok(counts)
}

fn fill(template: &str, noun: &str, emotion_word: &str) -> String {
    template.replace(NOUN_SLOT, noun).replace(EMOTION_SLOT, emotion_word)
}

fn weighted_pick<R: Rng>(rng: &mut R, remaining: &[usize; 6], exclude: Option<usize>) -> Option<usize> {
    let total: usize = remaining.iter().enumerate().filter(|(i, _)| Some(*i) != exclude).map(|(_, c)| c).sum();
    if total == 0 {
        return None;
    }
    let mut x = rng.gen_range(0..total);
    for (i, &c) in remaining.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        if x < c {
            return Some(i);
        }
        x -= c;
    }
    unreachable!("weighted pick out of range")
}

/// Deterministic synthetic dialogue corpus.
///
/// The response histogram equals [`apportion`] of the mixture, and with at least
/// two categories present every post has responses in two or more categories.
pub fn generate_synthetic_corpus(
    config: &SyntheticConfig,
    bank: &TemplateBank,
    lexicon: &EmotionLexicon,
) -> Result<SyntheticCorpus, CorpusError> {
    bank.validate(lexicon)?;
    if config.group_size < 2 {
        return Err(CorpusError::Config("group size must be at least 2".into()));
    }
    if !(0.0..=1.0).contains(&config.empathy) {
        return Err(CorpusError::Config(format!("empathy {} outside [0, 1]", config.empathy)));
    }
    let counts = apportion(config.n_pairs, &config.mixture)?;
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(CorpusError::Config("mixture must yield at least two categories".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let words: Vec<Vec<&str>> = EmotionCategory::ALL.iter().map(|&c| lexicon.words_of(c)).collect();

    let mut response_of: HashMap<(usize, EmotionCategory), String> = HashMap::new();
    for t in 0..bank.post_templates.len() {
        for cat in EmotionCategory::ALL {
            let templates = &bank.response_templates[cat.index()];
            let r = &templates[rng.gen_range(0..templates.len())];
            let word = if cat == EmotionCategory::Other { "" } else { words[cat.index()][rng.gen_range(0..words[cat.index()].len())] };
            response_of.insert((t, cat), fill(r, "", word));
        }
    }

    let n_empathetic = ((config.empathy * config.group_size as f64).round() as usize).clamp(1, config.group_size - 1);
    let mut remaining = counts;
    let mut groups: Vec<(EmotionCategory, Vec<EmotionCategory>)> = Vec::new();
    let mut leftovers: Vec<EmotionCategory> = Vec::new();
    while let Some(own) = weighted_pick(&mut rng, &remaining, None) {
        let mut members = Vec::with_capacity(config.group_size);
        let k = n_empathetic.min(remaining[own]);
        remaining[own] -= k;
        members.extend(std::iter::repeat(EmotionCategory::ALL[own]).take(k));
        while members.len() < config.group_size {
            let Some(c) = weighted_pick(&mut rng, &remaining, Some(own)) else { break };
            remaining[c] -= 1;
            members.push(EmotionCategory::ALL[c]);
        }
        if members.len() == k {
            leftovers.extend(members);
            break;
        }
        groups.push((EmotionCategory::ALL[own], members));
    }
    for c in EmotionCategory::ALL {
        leftovers.extend(std::iter::repeat(c).take(remaining[c.index()]));
    }
    for cat in leftovers {
        let hosts: Vec<usize> = (0..groups.len()).filter(|&g| groups[g].0 != cat).collect();
        match hosts.choose(&mut rng) {
            Some(&g) => groups[g].1.push(cat),
            None => return Err(CorpusError::Config("cannot place responses into multi-category posts".into())),
        }
    }

    let mut pairs = Vec::with_capacity(config.n_pairs);
    for (own, members) in groups {
        let t = rng.gen_range(0..bank.post_templates.len());
        let noun = &bank.nouns[rng.gen_range(0..bank.nouns.len())];
        let post_word = if own == EmotionCategory::Other {
            bank.neutral_words[rng.gen_range(0..bank.neutral_words.len())].as_str()
        } else {
            words[own.index()][rng.gen_range(0..words[own.index()].len())]
        };
        let post = fill(&bank.post_templates[t], noun, post_word);
        for cat in members {
            pairs.push(SyntheticPair {
                dialogue: RawDialogue::new(&post, &response_of[&(t, cat)], Some(cat)),
                post_template: t,
                post_emotion: own,
            });
        }
    }
    Ok(SyntheticCorpus { pairs, counts })
}

/// Labeled sentences for classifier training.
///
/// A quarter of them express a non-Other emotion only through cue words that
/// are absent from the lexicon; a lexicon classifier gets those wrong.
pub fn generate_classifier_sentences(
    seed: u64,
    n: usize,
    bank: &TemplateBank,
    lexicon: &EmotionLexicon,
) -> Result<Vec<LabeledSentence>, CorpusError> {
    bank.validate(lexicon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<Vec<&str>> = EmotionCategory::ALL.iter().map(|&c| lexicon.words_of(c)).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let noun = &bank.nouns[rng.gen_range(0..bank.nouns.len())];
        let kind = rng.gen_range(0..4);
        let (text, emotion) = if kind == 3 {
            let cat = EmotionCategory::ALL[rng.gen_range(0..5)];
            let cue = &bank.cue_words[cat.index()][rng.gen_range(0..bank.cue_words[cat.index()].len())];
            let t = &bank.cue_templates[rng.gen_range(0..bank.cue_templates.len())];
            (t.replace(NOUN_SLOT, noun).replace(CUE_SLOT, cue), cat)
        } else {
            let cat = EmotionCategory::ALL[rng.gen_range(0..6)];
            let word = if cat == EmotionCategory::Other {
                bank.neutral_words[rng.gen_range(0..bank.neutral_words.len())].as_str()
            } else {
                words[cat.index()][rng.gen_range(0..words[cat.index()].len())]
            };
            let t = if kind == 2 {
                &bank.post_templates[rng.gen_range(0..bank.post_templates.len())]
            } else {
                let ts = &bank.response_templates[cat.index()];
                &ts[rng.gen_range(0..ts.len())]
            };
            (fill(t, noun, word), cat)
        };
        out.push(LabeledSentence { tokens: tokenize(&text), emotion });
    }
    Ok(out)
}
