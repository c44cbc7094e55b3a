//! Sentence-level emotion classifiers used to annotate corpora and to score
//! generated responses.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, validate_layout};
use crate::corpus::{EmotionCategory, EmotionLexicon, LabeledSentence, RawDialogue, Vocab, PAD_ID, UNK_ID};
use crate::error::{EcmError, Result};
use crate::numerics::{gru_cell, Bound, GruParams, NumericsError, ParamSet, Scalar, Tape, Tensor, Var};
use crate::training::optim::{collect_gradients, sgd_step};

pub trait EmotionClassifier: Send + Sync {
    fn classify(&self, tokens: &[String]) -> EmotionCategory;
}

/// Majority vote over lexicon hits. No hits gives Other; ties go to the
/// earlier category in Angry, Disgust, Happy, Like, Sad order.
pub fn lexicon_classify<S: AsRef<str>>(lexicon: &EmotionLexicon, tokens: &[S]) -> EmotionCategory {
    let mut hits = [0usize; 6];
    for t in tokens {
        if let Some(c) = lexicon.get(t.as_ref()) {
            hits[c.index()] += 1;
        }
    }
    let mut best = EmotionCategory::Other;
    let mut best_hits = 0;
    for c in &EmotionCategory::ALL[..5] {
        if hits[c.index()] > best_hits {
            best = *c;
            best_hits = hits[c.index()];
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    pub lexicon: EmotionLexicon,
}

impl EmotionClassifier for LexiconClassifier {
    fn classify(&self, tokens: &[String]) -> EmotionCategory {
        lexicon_classify(&self.lexicon, tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub bidirectional: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: f64,
    pub seed: u64,
    pub max_vocab: usize,
    pub init_scale: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            embed_dim: 32,
            hidden: 32,
            bidirectional: true,
            epochs: 10,
            batch_size: 16,
            lr: 0.5,
            clip: 5.0,
            seed: 13,
            max_vocab: 2000,
            init_scale: 0.08,
        }
    }
}

/// GRU sentence encoder (one or two directions) with a 6-way softmax head.
#[derive(Debug, Clone)]
pub struct RecurrentClassifier {
    config: ClassifierConfig,
    vocab: Vocab,
    params: ParamSet<f32>,
}

fn gru_names(prefix: &str) -> [String; 4] {
    ["w_x", "u_zr", "u_n", "b"].map(|s| format!("{prefix}.{s}"))
}

fn bind_gru(b: &Bound<'_>, prefix: &str) -> Result<GruParams, NumericsError> {
    let [w_x, u_zr, u_n, bias] = gru_names(prefix);
    Ok(GruParams { w_x: b.var(&w_x)?, u_zr: b.var(&u_zr)?, u_n: b.var(&u_n)?, b: b.var(&bias)? })
}

impl RecurrentClassifier {
    pub fn new(config: ClassifierConfig, vocab: Vocab) -> Result<Self> {
        if config.embed_dim == 0 || config.hidden == 0 {
            return Err(EcmError::Config("classifier dimensions must be positive".into()));
        }
        let params = Self::init_params(&config, vocab.len(), &mut ChaCha8Rng::seed_from_u64(config.seed))?;
        Ok(RecurrentClassifier { config, vocab, params })
    }

    fn init_params(c: &ClassifierConfig, vocab_len: usize, rng: &mut ChaCha8Rng) -> Result<ParamSet<f32>> {
        let (e, h, s) = (c.embed_dim, c.hidden, c.init_scale);
        let mut p = ParamSet::new();
        p.insert_uniform("embed", &[vocab_len, e], s, rng)?;
        let dirs: &[&str] = if c.bidirectional { &["fwd", "bwd"] } else { &["fwd"] };
        for d in dirs {
            let [w_x, u_zr, u_n, b] = gru_names(d);
            p.insert_uniform(w_x, &[e, 3 * h], s, rng)?;
            p.insert_uniform(u_zr, &[h, 2 * h], s, rng)?;
            p.insert_uniform(u_n, &[h, h], s, rng)?;
            p.insert(b, Tensor::zeros(&[3 * h]))?;
        }
        p.insert_uniform("out.w", &[h * dirs.len(), 6], s, rng)?;
        p.insert("out.b", Tensor::zeros(&[6]))?;
        Ok(p)
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    fn encode(&self, tokens: &[String]) -> Vec<usize> {
        let ids = self.vocab.encode(tokens);
        if ids.is_empty() {
            vec![UNK_ID]
        } else {
            ids
        }
    }

    /// Log-probabilities `[B, 6]` for a batch of encoded sentences.
    fn log_probs<'p, T: Scalar>(b: &Bound<'_>, tape: &mut Tape<'p, T>, batch: &[Vec<usize>], bidirectional: bool) -> Result<Var, NumericsError> {
        let hidden = tape.value(b.var("fwd.u_n")?).rows();
        let embed = b.var("embed")?;
        let len = batch.iter().map(Vec::len).max().unwrap_or(0);
        let run = |tape: &mut Tape<'p, T>, g: &GruParams, order: &mut dyn Iterator<Item = usize>| -> Result<Var, NumericsError> {
            let mut h = tape.constant(Tensor::zeros(&[batch.len(), hidden]));
            for t in order {
                let ids: Vec<usize> = batch.iter().map(|s| s.get(t).copied().unwrap_or(PAD_ID)).collect();
                let x = tape.gather_rows(embed, &ids)?;
                let next = gru_cell(tape, x, h, g)?;
                if batch.iter().all(|s| t < s.len()) {
                    h = next;
                } else {
                    let m: Vec<f64> = batch.iter().map(|s| if t < s.len() { 1.0 } else { 0.0 }).collect();
                    let m = tape.constant(Tensor::from_f64(&[batch.len(), 1], &m)?);
                    let d = tape.sub(next, h)?;
                    let d = tape.scale_rows(d, m)?;
                    h = tape.add(h, d)?;
                }
            }
            Ok(h)
        };
        let fwd = bind_gru(b, "fwd")?;
        let mut feats = vec![run(tape, &fwd, &mut (0..len))?];
        if bidirectional {
            let bwd = bind_gru(b, "bwd")?;
            feats.push(run(tape, &bwd, &mut (0..len).rev())?);
        }
        let f = if feats.len() == 1 { feats[0] } else { tape.concat(&feats, 1)? };
        let logits = tape.matmul(f, b.var("out.w")?)?;
        let logits = tape.add_bias(logits, b.var("out.b")?)?;
        tape.log_softmax(logits)
    }

    /// Six-way distribution in [`EmotionCategory::ALL`] order.
    pub fn probabilities(&self, tokens: &[String]) -> [f64; 6] {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let lp = Self::log_probs(&b, &mut tape, &[self.encode(tokens)], self.config.bidirectional)
            .expect("classifier forward on validated parameters");
        let mut out = [0.0; 6];
        for (o, v) in out.iter_mut().zip(tape.value(lp).row(0)) {
            *o = v.as_f64().exp();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::json!({
            "kind": "classifier",
            "dtype": "f32",
            "config": self.config,
            "vocab": serde_json::from_str::<serde_json::Value>(&self.vocab.to_json()).expect("vocab json"),
        });
        save_checkpoint(path, &header, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, params) = load_checkpoint::<f32>(path)?;
        if header.get("kind").and_then(|k| k.as_str()) != Some("classifier") {
            return Err(EcmError::Checkpoint(format!("{} is not a classifier checkpoint", path.display())));
        }
        let config: ClassifierConfig =
            serde_json::from_value(header["config"].clone()).map_err(|e| EcmError::Checkpoint(format!("config: {e}")))?;
        let vocab = Vocab::from_json(&header["vocab"].to_string())?;
        let expected = Self::init_params(&config, vocab.len(), &mut ChaCha8Rng::seed_from_u64(0))?;
        validate_layout(&params, &expected)?;
        Ok(RecurrentClassifier { config, vocab, params })
    }
}

impl EmotionClassifier for RecurrentClassifier {
    fn classify(&self, tokens: &[String]) -> EmotionCategory {
        let p = self.probabilities(tokens);
        let mut best = 0;
        for i in 1..6 {
            if p[i] > p[best] {
                best = i;
            }
        }
        EmotionCategory::ALL[best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub accuracy: f64,
    /// Accuracy per gold category; absent categories are omitted.
    pub per_category: BTreeMap<EmotionCategory, f64>,
    pub support: BTreeMap<EmotionCategory, usize>,
    pub n: usize,
}

pub fn evaluate_classifier(clf: &dyn EmotionClassifier, data: &[LabeledSentence]) -> ClassifierReport {
    let mut hit = [0usize; 6];
    let mut support = [0usize; 6];
    for s in data {
        support[s.emotion.index()] += 1;
        if clf.classify(&s.tokens) == s.emotion {
            hit[s.emotion.index()] += 1;
        }
    }
    let total: usize = hit.iter().sum();
    ClassifierReport {
        accuracy: if data.is_empty() { 0.0 } else { total as f64 / data.len() as f64 },
        per_category: EmotionCategory::ALL
            .iter()
            .filter(|c| support[c.index()] > 0)
            .map(|&c| (c, hit[c.index()] as f64 / support[c.index()] as f64))
            .collect(),
        support: EmotionCategory::ALL.iter().filter(|c| support[c.index()] > 0).map(|&c| (c, support[c.index()])).collect(),
        n: data.len(),
    }
}

/// SGD with cross-entropy. The report is computed on `held_out`.
pub fn train_classifier(
    train: &[LabeledSentence],
    held_out: &[LabeledSentence],
    config: &ClassifierConfig,
) -> Result<(RecurrentClassifier, ClassifierReport)> {
    let mut seen = [false; 6];
    for s in train {
        seen[s.emotion.index()] = true;
    }
    if seen.iter().filter(|&&b| b).count() < 2 {
        return Err(EcmError::Training("classifier training needs labeled examples in at least two categories".into()));
    }
    if config.batch_size == 0 || !(config.lr >= 0.0) {
        return Err(EcmError::Config("classifier batch size must be >= 1 and lr >= 0".into()));
    }
    let vocab = Vocab::build(train.iter().map(|s| s.tokens.as_slice()), config.max_vocab, &EmotionLexicon::new())?;
    let mut clf = RecurrentClassifier::new(config.clone(), vocab)?;
    let encoded: Vec<(Vec<usize>, usize)> = train.iter().map(|s| (clf.encode(&s.tokens), s.emotion.index())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| encoded[i].0.clone()).collect();
            let gold: Vec<usize> = chunk.iter().map(|&i| encoded[i].1).collect();
            let (grads, loss) = {
                let mut tape = Tape::new();
                let bound = clf.params.bind(&mut tape);
                let lp = RecurrentClassifier::log_probs(&bound, &mut tape, &batch, config.bidirectional)?;
                let picked = tape.pick(lp, &gold)?;
                let total = tape.sum(picked)?;
                let loss = tape.affine(total, -1.0 / batch.len() as f64, 0.0)?;
                let mut g = tape.backward(loss)?;
                (collect_gradients(&bound, &mut g), tape.value(loss).data()[0].as_f64())
            };
            if !loss.is_finite() {
                return Err(EcmError::Diverged { epoch, batch_ids: chunk.to_vec(), lr: config.lr, loss });
            }
            sgd_step(&mut clf.params, grads, config.lr, Some(config.clip));
        }
    }
    let report = evaluate_classifier(&clf, held_out);
    Ok((clf, report))
}

/// Category histogram of an annotated corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTable {
    pub counts: BTreeMap<EmotionCategory, usize>,
    pub total: usize,
}

impl CategoryTable {
    pub fn from_labels(labels: impl IntoIterator<Item = EmotionCategory>) -> Self {
        let mut counts: BTreeMap<EmotionCategory, usize> = EmotionCategory::ALL.iter().map(|&c| (c, 0)).collect();
        let mut total = 0;
        for l in labels {
            *counts.get_mut(&l).expect("all categories present") += 1;
            total += 1;
        }
        CategoryTable { counts, total }
    }

    pub fn render_text(&self) -> String {
        let mut s = format!("{:<10}{:>10}\n", "Emotion", "Count");
        for (c, n) in &self.counts {
            s.push_str(&format!("{:<10}{:>10}\n", c.name(), n));
        }
        s.push_str(&format!("{:<10}{:>10}\n", "Total", self.total));
        s
    }
}

/// Labels every response with `clf`, replacing any existing label.
pub fn annotate_corpus(dialogues: &[RawDialogue], clf: &dyn EmotionClassifier) -> (Vec<RawDialogue>, CategoryTable) {
    let labeled: Vec<RawDialogue> = dialogues
        .iter()
        .map(|d| RawDialogue { emotion: Some(clf.classify(&d.response)), ..d.clone() })
        .collect();
    let table = CategoryTable::from_labels(labeled.iter().filter_map(|d| d.emotion));
    (labeled, table)
}
