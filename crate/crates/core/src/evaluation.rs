//! Perplexity, emotion accuracy, ablations and emotion interaction patterns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::EmotionClassifier;
use crate::corpus::{DialogueExample, EmotionCategory, Vocab};
use crate::error::{EcmError, Result};
use crate::inference::{beam_search_encoded, generate_all_emotions, DecodeConfig, Hypothesis};
use crate::model::{EcmConfig, EcmModel};
use crate::numerics::{Scalar, Tape};
use crate::training::{train, TrainConfig, TrainLog};

/// `exp(total teacher-forced NLL / target tokens)`, EOS counted as a target.
pub fn perplexity<T: Scalar>(model: &EcmModel<T>, examples: &[DialogueExample], batch_size: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(EcmError::Contract("perplexity of an empty corpus".into()));
    }
    let mut nll = 0.0;
    let mut tokens = 0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let batch: Vec<&DialogueExample> = chunk.iter().collect();
        let mut tape = Tape::new();
        let b = model.params().bind(&mut tape);
        let out = model.forward_loss(&mut tape, &b, &batch)?;
        nll += out.ce_sum;
        tokens += out.tokens;
    }
    Ok((nll / tokens as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub per_category: BTreeMap<EmotionCategory, f64>,
    /// Generations per requested category.
    pub support: BTreeMap<EmotionCategory, usize>,
    /// Requests whose beam produced nothing (all hypotheses had UNK).
    pub empty: usize,
    pub generations: usize,
}

/// Top-1 responses for every post and category, decoded to token strings.
/// An empty response means every hypothesis contained UNK.
pub fn generate_grid<T: Scalar>(model: &EcmModel<T>, posts: &[Vec<usize>], cfg: &DecodeConfig) -> Result<Vec<BTreeMap<EmotionCategory, Option<Hypothesis>>>> {
    posts.iter().map(|p| generate_all_emotions(model, p, cfg)).collect()
}

/// Scores a generation grid: a hit is a response that `scorer` assigns to the requested category.
pub fn score_grid(grid: &[BTreeMap<EmotionCategory, Option<Hypothesis>>], vocab: &Vocab, scorer: &dyn EmotionClassifier) -> AccuracyReport {
    let mut hit = [0usize; 6];
    let mut n = [0usize; 6];
    let mut empty = 0;
    for row in grid {
        for (&e, h) in row {
            n[e.index()] += 1;
            match h {
                Some(h) => {
                    if scorer.classify(&vocab.decode(&h.tokens)) == e {
                        hit[e.index()] += 1;
                    }
                }
                None => empty += 1,
            }
        }
    }
    let total: usize = n.iter().sum();
    AccuracyReport {
        accuracy: if total == 0 { 0.0 } else { hit.iter().sum::<usize>() as f64 / total as f64 },
        per_category: EmotionCategory::ALL.iter().filter(|c| n[c.index()] > 0).map(|&c| (c, hit[c.index()] as f64 / n[c.index()] as f64)).collect(),
        support: EmotionCategory::ALL.iter().filter(|c| n[c.index()] > 0).map(|&c| (c, n[c.index()])).collect(),
        empty,
        generations: total,
    }
}

/// Fraction of (post, category) requests whose top response the scorer labels with that category.
pub fn emotion_accuracy<T: Scalar>(model: &EcmModel<T>, scorer: &dyn EmotionClassifier, posts: &[Vec<usize>], cfg: &DecodeConfig) -> Result<AccuracyReport> {
    Ok(score_grid(&generate_grid(model, posts, cfg)?, model.vocab(), scorer))
}

/// Mean `||M_{e,m}||` at the end of top-1 decodes, over posts and categories.
/// Zero for models without the internal memory.
pub fn mean_final_memory_norm<T: Scalar>(model: &EcmModel<T>, posts: &[Vec<usize>], cfg: &DecodeConfig) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for p in posts {
        let enc = model.encode_post(p)?;
        for e in EmotionCategory::ALL {
            let out = beam_search_encoded(model, &enc, Some(e), cfg)?;
            if let Some(step) = out.best().and_then(|h| h.trace.steps.last()) {
                sum += step.memory_norm;
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub perplexity: f64,
    /// Scored by the lexicon classifier.
    pub emotion_accuracy: f64,
    pub per_category: BTreeMap<EmotionCategory, f64>,
    /// Same generations scored by the neural classifier, when one is supplied.
    pub neural_accuracy: Option<f64>,
    /// Mean type selector over emitted emotion words; absent without the external memory.
    pub alpha_on_emotion_words: Option<f64>,
    pub posts: usize,
    pub generations: usize,
    pub empty_generations: usize,
    pub test_examples: usize,
}

/// Perplexity on `test` plus emotion accuracy over the distinct posts of `test`.
pub fn evaluate<T: Scalar>(
    model: &EcmModel<T>,
    test: &[DialogueExample],
    lexicon_scorer: &dyn EmotionClassifier,
    neural_scorer: Option<&dyn EmotionClassifier>,
    cfg: &DecodeConfig,
    max_posts: usize,
) -> Result<EvalReport> {
    let ppl = perplexity(model, test, 64)?;
    let posts = distinct_posts(test, max_posts);
    let grid = generate_grid(model, &posts, cfg)?;
    let acc = score_grid(&grid, model.vocab(), lexicon_scorer);
    let neural = neural_scorer.map(|s| score_grid(&grid, model.vocab(), s).accuracy);
    let alpha_on_emotion_words = model.config().use_emem.then(|| {
        let alphas: Vec<f64> = grid
            .iter()
            .flat_map(|row| row.values().flatten())
            .flat_map(|h| h.trace.steps.iter())
            .filter(|s| s.partition == crate::corpus::TokenKind::Emotion)
            .map(|s| s.alpha)
            .collect();
        if alphas.is_empty() {
            0.0
        } else {
            alphas.iter().sum::<f64>() / alphas.len() as f64
        }
    });
    Ok(EvalReport {
        perplexity: ppl,
        emotion_accuracy: acc.accuracy,
        per_category: acc.per_category,
        neural_accuracy: neural,
        alpha_on_emotion_words,
        posts: posts.len(),
        generations: acc.generations,
        empty_generations: acc.empty,
        test_examples: test.len(),
    })
}

/// First `max` distinct posts in order of appearance.
pub fn distinct_posts(examples: &[DialogueExample], max: usize) -> Vec<Vec<usize>> {
    let mut seen = std::collections::HashSet::new();
    examples.iter().filter(|e| seen.insert(e.post.clone())).take(max).map(|e| e.post.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub config: EcmConfig,
    pub report: EvalReport,
    pub log: TrainLog,
}

/// The full model and the three single-mechanism removals.
pub fn ablation_configs(full: &EcmConfig) -> Vec<(String, EcmConfig)> {
    vec![
        ("ECM".into(), full.clone().with_flags(true, true, true)),
        ("w/o Emb".into(), full.clone().with_flags(false, true, true)),
        ("w/o IMem".into(), full.clone().with_flags(true, false, true)),
        ("w/o EMem".into(), full.clone().with_flags(true, true, false)),
    ]
}

/// Trains every ablation from the same pretrained model with the same seeds and data.
#[allow(clippy::too_many_arguments)]
pub fn ablation_suite<T: Scalar>(
    pretrained: &EcmModel<T>,
    full: &EcmConfig,
    train_set: &[DialogueExample],
    valid: &[DialogueExample],
    test: &[DialogueExample],
    train_cfg: &TrainConfig,
    lexicon_scorer: &dyn EmotionClassifier,
    decode: &DecodeConfig,
    max_posts: usize,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, cfg) in ablation_configs(full) {
        let (mut model, _) = EcmModel::from_pretrained(pretrained, cfg.clone(), seed)?;
        let log = train(&mut model, train_set, valid, train_cfg)?;
        let report = evaluate(&model, test, lexicon_scorer, None, decode, max_posts)?;
        rows.push(AblationRow { name, config: cfg, report, log });
    }
    Ok(rows)
}

pub fn render_ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!("{:<10}{:>12}{:>12}{:>12}\n", "Method", "Perplexity", "Accuracy", "Alpha(emo)");
    for r in rows {
        let a = r.report.alpha_on_emotion_words.map_or("-".to_string(), |a| format!("{a:.3}"));
        s.push_str(&format!("{:<10}{:>12.2}{:>12.3}{:>12}\n", r.name, r.report.perplexity, r.report.emotion_accuracy, a));
    }
    s
}

pub fn render_report_text(name: &str, r: &EvalReport) -> String {
    let mut s = format!("{name}\n  perplexity        {:.3}\n  emotion accuracy  {:.3}\n", r.perplexity, r.emotion_accuracy);
    if let Some(n) = r.neural_accuracy {
        s.push_str(&format!("  neural accuracy   {n:.3}\n"));
    }
    for (c, a) in &r.per_category {
        s.push_str(&format!("    {:<8} {:.3}\n", c.name(), a));
    }
    s
}

/// `P(e_r | e_p)`; rows are post emotions, columns response emotions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EipMatrix {
    pub values: [[f64; 6]; 6],
    pub support: [usize; 6],
}

impl EipMatrix {
    /// Rows without any pair are all zero.
    pub fn empty_rows(&self) -> Vec<EmotionCategory> {
        EmotionCategory::ALL.iter().filter(|c| self.support[c.index()] == 0).copied().collect()
    }

    pub fn render_text(&self) -> String {
        let mut s = format!("{:<9}", "post\\resp");
        for c in EmotionCategory::ALL {
            s.push_str(&format!("{:>9}", c.name()));
        }
        s.push_str(&format!("{:>9}\n", "n"));
        for p in EmotionCategory::ALL {
            s.push_str(&format!("{:<9}", p.name()));
            for r in EmotionCategory::ALL {
                s.push_str(&format!("{:>9.3}", self.values[p.index()][r.index()]));
            }
            s.push_str(&format!("{:>9}\n", self.support[p.index()]));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("post_emotion");
        for c in EmotionCategory::ALL {
            s.push(',');
            s.push_str(c.name());
        }
        s.push('\n');
        for p in EmotionCategory::ALL {
            s.push_str(p.name());
            for r in EmotionCategory::ALL {
                s.push_str(&format!(",{}", self.values[p.index()][r.index()]));
            }
            s.push('\n');
        }
        s
    }
}

/// Row-normalized joint counts of `(post emotion, response emotion)` pairs.
pub fn eip_matrix(pairs: &[(EmotionCategory, EmotionCategory)]) -> EipMatrix {
    let mut counts = [[0usize; 6]; 6];
    let mut support = [0usize; 6];
    for &(p, r) in pairs {
        counts[p.index()][r.index()] += 1;
        support[p.index()] += 1;
    }
    let mut values = [[0.0; 6]; 6];
    for p in 0..6 {
        if support[p] > 0 {
            for r in 0..6 {
                values[p][r] = counts[p][r] as f64 / support[p] as f64;
            }
        }
    }
    EipMatrix { values, support }
}
