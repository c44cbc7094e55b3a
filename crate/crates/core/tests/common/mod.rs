#![allow(dead_code)]

use ecm_core::corpus::{tokenize, DialogueExample, EmotionCategory, EmotionLexicon, RawDialogue, Vocab};
use ecm_core::model::{EcmConfig, EcmModel};
use ecm_core::numerics::Scalar;

pub fn toy_lexicon() -> EmotionLexicon {
    EmotionLexicon::parse_tsv("happy\tHappy\nglad\tHappy\nsad\tSad\nangry\tAngry\ngross\tDisgust\ncute\tLike\n").unwrap()
}

pub fn toy_dialogues() -> Vec<RawDialogue> {
    use EmotionCategory::*;
    [
        ("the dog ran home", "i am happy", Happy),
        ("my cat is here", "so sad now", Sad),
        ("it is cold", "that is gross", Disgust),
        ("the dog is here", "so cute", Like),
        ("rain again", "i am angry now", Angry),
        ("what now", "i see", Other),
        ("my dog is glad", "i am glad too", Happy),
    ]
    .iter()
    .map(|(p, r, e)| RawDialogue::new(p, r, Some(*e)))
    .collect()
}

pub fn toy_vocab() -> Vocab {
    let d = toy_dialogues();
    let sents: Vec<Vec<String>> = d.iter().flat_map(|x| [x.post.clone(), x.response.clone()]).collect();
    Vocab::build(sents.iter().map(|s| s.as_slice()), 100, &toy_lexicon()).unwrap()
}

pub fn toy_examples(vocab: &Vocab) -> Vec<DialogueExample> {
    toy_dialogues().iter().map(|d| d.encode(vocab, 20)).collect()
}

pub fn tiny_config(vocab: &Vocab) -> EcmConfig {
    EcmConfig { hidden: 4, embed_dim: 3, emotion_dim: 2, attention_dim: 3, ..EcmConfig::default() }.for_vocab(vocab)
}

pub fn tiny_model<T: Scalar>(flags: (bool, bool, bool), seed: u64) -> EcmModel<T> {
    let vocab = toy_vocab();
    let cfg = tiny_config(&vocab).with_flags(flags.0, flags.1, flags.2);
    EcmModel::new(cfg, vocab, seed).unwrap()
}

pub fn toks(s: &str) -> Vec<String> {
    tokenize(s)
}

pub fn synthetic_data(n_pairs: usize, seed: u64) -> ecm_core::pipeline::PreparedData {
    use ecm_core::corpus::synthetic::{generate_synthetic_corpus, SyntheticConfig, TemplateBank};
    let lex = EmotionLexicon::builtin();
    let cfg = SyntheticConfig { seed, n_pairs, ..Default::default() };
    let corpus = generate_synthetic_corpus(&cfg, &TemplateBank::default(), &lex).unwrap();
    ecm_core::pipeline::prepare(&corpus.dialogues(), &lex, 2000, 20, [0.8, 0.1, 0.1], seed).unwrap()
}
