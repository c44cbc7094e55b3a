mod common;

use common::*;
use ecm_core::classifier::*;
use ecm_core::corpus::synthetic::{generate_classifier_sentences, generate_synthetic_corpus, SyntheticConfig, TemplateBank};
use ecm_core::corpus::{EmotionCategory, EmotionLexicon, LabeledSentence};
use ecm_core::EcmError;
use proptest::prelude::*;
use EmotionCategory::*;

fn small_config() -> ClassifierConfig {
    ClassifierConfig { embed_dim: 16, hidden: 16, epochs: 8, ..Default::default() }
}

fn sentences(seed: u64, n: usize) -> Vec<LabeledSentence> {
    generate_classifier_sentences(seed, n, &TemplateBank::default(), &EmotionLexicon::builtin()).unwrap()
}

#[test]
fn lexicon_examples() {
    let lex = toy_lexicon();
    assert_eq!(lexicon_classify(&lex, &toks("i am happy today")), Happy);
    assert_eq!(lexicon_classify(&lex, &toks("nothing to see")), Other);
    assert_eq!(lexicon_classify(&lex, &toks("happy glad but sad")), Happy);
    assert_eq!(lexicon_classify(&lex, &toks("sad and happy")), Happy);
    assert_eq!(lexicon_classify(&lex, &toks("cute and angry")), Angry);
    assert_eq!(lexicon_classify(&lex, &Vec::<String>::new()), Other);
}

#[test]
fn neural_classifier_on_synthetic_split() {
    let train = sentences(1, 2400);
    let held = sentences(2, 600);
    let (clf, report) = train_classifier(&train, &held, &small_config()).unwrap();
    let lexicon = evaluate_classifier(&LexiconClassifier { lexicon: EmotionLexicon::builtin() }, &held);
    assert!(report.accuracy >= 0.95, "neural {}", report.accuracy);
    assert!(report.accuracy >= lexicon.accuracy);
    assert_eq!(report.n, 600);
    let weighted: f64 = report.per_category.iter().map(|(c, a)| a * report.support[c] as f64).sum::<f64>() / 600.0;
    assert!((weighted - report.accuracy).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.ckpt");
    clf.save(&path).unwrap();
    let back = RecurrentClassifier::load(&path).unwrap();
    assert_eq!(evaluate_classifier(&back, &held), report);
}

#[test]
fn overfits_fifty_examples() {
    let train = sentences(3, 50);
    let cfg = ClassifierConfig { epochs: 60, batch_size: 5, ..small_config() };
    let (clf, _) = train_classifier(&train, &train, &cfg).unwrap();
    assert_eq!(evaluate_classifier(&clf, &train).accuracy, 1.0);
}

#[test]
fn single_category_is_an_error() {
    let train: Vec<LabeledSentence> = (0..10).map(|_| LabeledSentence { tokens: toks("so happy"), emotion: Happy }).collect();
    assert!(matches!(train_classifier(&train, &train, &small_config()), Err(EcmError::Training(_))));
}

#[test]
fn annotation() {
    let lex = EmotionLexicon::builtin();
    let cfg = SyntheticConfig { n_pairs: 800, ..Default::default() };
    let corpus = generate_synthetic_corpus(&cfg, &TemplateBank::default(), &lex).unwrap();
    let original = corpus.dialogues();
    let unlabeled: Vec<_> = original.iter().map(|d| ecm_core::corpus::RawDialogue { emotion: None, ..d.clone() }).collect();
    let clf = LexiconClassifier { lexicon: lex };
    let (labeled, table) = annotate_corpus(&unlabeled, &clf);
    assert_eq!(labeled, original);
    assert_eq!(table.total, 800);
    assert_eq!(table.counts.values().sum::<usize>(), 800);
    assert_eq!(table.counts.len(), 6);
    let (again, table2) = annotate_corpus(&labeled, &clf);
    assert_eq!(again, labeled);
    assert_eq!(table2, table);

    let (empty, t) = annotate_corpus(&[], &clf);
    assert!(empty.is_empty());
    assert_eq!(t.total, 0);
    assert!(t.counts.values().all(|&c| c == 0));
    assert!(t.render_text().contains("Total"));
}

fn untrained() -> RecurrentClassifier {
    let train = sentences(4, 40);
    let cfg = ClassifierConfig { epochs: 0, ..small_config() };
    train_classifier(&train, &train, &cfg).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distribution_sums_to_one(words in proptest::collection::vec("[a-z]{1,6}", 0..12)) {
        let clf = untrained();
        let p = clf.probabilities(&words);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(clf.classify(&words), clf.classify(&words));
    }

    #[test]
    fn lexicon_is_pure(words in proptest::collection::vec(prop::sample::select(vec!["happy", "sad", "glad", "gross", "x", "cute"]), 0..8)) {
        let lex = toy_lexicon();
        let a = lexicon_classify(&lex, &words);
        prop_assert_eq!(a, lexicon_classify(&lex, &words));
        if a == Other {
            prop_assert!(words.iter().all(|w| !lex.contains(w)));
        }
    }
}
