//! Beam search and greedy decoding with UNK filtering and per-token traces.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmotionCategory, TokenKind, EOS_ID, GO_ID, PAD_ID, UNK_ID};
use crate::error::{EcmError, Result};
use crate::model::{DecodeState, EcmModel, EncodedPost};
use crate::numerics::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub beam: usize,
    pub max_len: usize,
    /// Final score is `log p / (len + 1)^length_penalty`; 0 ranks by raw log-probability.
    pub length_penalty: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { beam: 4, max_len: 12, length_penalty: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub token: usize,
    pub partition: TokenKind,
    /// Type selector at this step; 0 without the external memory.
    pub alpha: f64,
    /// `||M_{e,t}||` after this step's write; 0 without the internal memory.
    pub memory_norm: f64,
    pub attention: Vec<f64>,
}

/// One entry per emitted token; the EOS step is not recorded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Emitted tokens, EOS excluded.
    pub tokens: Vec<usize>,
    /// Sum of stepwise log-probabilities, including the EOS step when `terminated`.
    pub log_prob: f64,
    /// Ranking score after the length penalty.
    pub score: f64,
    pub terminated: bool,
    pub trace: DecodeTrace,
}

impl Hypothesis {
    pub fn contains_unk(&self) -> bool {
        self.tokens.contains(&UNK_ID)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamOutput {
    /// Sorted by score, best first; hypotheses containing UNK are removed.
    pub hypotheses: Vec<Hypothesis>,
    /// Every completed hypothesis contained UNK.
    pub all_unk: bool,
}

impl BeamOutput {
    pub fn best(&self) -> Option<&Hypothesis> {
        self.hypotheses.first()
    }
}

/// Tokens that are never emitted: they are inputs only.
fn emittable(id: usize) -> bool {
    id != PAD_ID && id != GO_ID
}

fn finish(mut h: Hypothesis, penalty: f64) -> Hypothesis {
    h.score = if penalty == 0.0 { h.log_prob } else { h.log_prob / ((h.tokens.len() + 1) as f64).powf(penalty) };
    h
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

fn trace_step<T: Scalar>(model: &EcmModel<T>, token: usize, alpha: f64, memory_norm: f64, attention: &[T]) -> TraceStep {
    TraceStep {
        token,
        partition: model.vocab().kind(token),
        alpha,
        memory_norm,
        attention: attention.iter().map(|v| v.as_f64()).collect(),
    }
}

/// Beam search for one post and emotion.
///
/// At each step every live hypothesis is expanded over the vocabulary and the
/// best `beam` candidates overall are kept; candidates ending in EOS move to
/// the completed pool. Hypotheses still live at `max_len` complete without EOS.
pub fn beam_search<T: Scalar>(model: &EcmModel<T>, post: &[usize], emotion: Option<EmotionCategory>, cfg: &DecodeConfig) -> Result<BeamOutput> {
    if cfg.beam == 0 || cfg.max_len == 0 {
        return Err(EcmError::Config("beam width and max_len must be >= 1".into()));
    }
    let enc = model.encode_post(post)?;
    beam_search_encoded(model, &enc, emotion, cfg)
}

pub fn beam_search_encoded<T: Scalar>(
    model: &EcmModel<T>,
    enc: &EncodedPost<T>,
    emotion: Option<EmotionCategory>,
    cfg: &DecodeConfig,
) -> Result<BeamOutput> {
    let mut state: DecodeState<T> = model.initial_state(enc, &[emotion])?;
    let mut live = vec![Hypothesis { tokens: vec![], log_prob: 0.0, score: 0.0, terminated: false, trace: DecodeTrace::default() }];
    let mut done: Vec<Hypothesis> = Vec::new();
    let vocab = model.vocab().len();
    for _ in 0..cfg.max_len {
        let prev: Vec<usize> = live.iter().map(|h| h.tokens.last().copied().unwrap_or(GO_ID)).collect();
        let out = model.decode_step(enc, &state, &prev)?;
        let norms = out.state.memory_norms();
        let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(live.len() * vocab);
        for (i, h) in live.iter().enumerate() {
            for (v, lp) in out.log_probs.row(i).iter().enumerate().filter(|(v, _)| emittable(*v)) {
                cands.push((h.log_prob + lp.as_f64(), i, v));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(cfg.beam);
        let mut next_live = Vec::new();
        let mut rows = Vec::new();
        for (score, i, v) in cands {
            let parent = &live[i];
            if v == EOS_ID {
                done.push(finish(Hypothesis { log_prob: score, terminated: true, ..parent.clone() }, cfg.length_penalty));
            } else {
                let mut h = parent.clone();
                h.tokens.push(v);
                h.log_prob = score;
                h.trace.steps.push(trace_step(model, v, out.alpha[i], norms[i], out.attention.row(i)));
                next_live.push(h);
                rows.push(i);
            }
        }
        if next_live.is_empty() {
            live.clear();
            break;
        }
        state = out.state.select(&rows);
        live = next_live;
        let best_done = done.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        if cfg.length_penalty == 0.0 && best_done >= best_live {
            live.clear();
            break;
        }
    }
    done.extend(live.into_iter().map(|h| finish(h, cfg.length_penalty)));
    let total = done.len();
    let mut kept: Vec<Hypothesis> = done.into_iter().filter(|h| !h.contains_unk()).collect();
    kept.sort_by(rank);
    Ok(BeamOutput { all_unk: total > 0 && kept.is_empty(), hypotheses: kept })
}

/// Argmax decoding. The result may contain UNK.
pub fn greedy<T: Scalar>(model: &EcmModel<T>, post: &[usize], emotion: Option<EmotionCategory>, max_len: usize) -> Result<Hypothesis> {
    let enc = model.encode_post(post)?;
    let mut state = model.initial_state(&enc, &[emotion])?;
    let mut h = Hypothesis { tokens: vec![], log_prob: 0.0, score: 0.0, terminated: false, trace: DecodeTrace::default() };
    let mut prev = GO_ID;
    for _ in 0..max_len {
        let out = model.decode_step(&enc, &state, &[prev])?;
        let row = out.log_probs.row(0);
        let mut best = None;
        for (v, lp) in row.iter().enumerate().filter(|(v, _)| emittable(*v)) {
            if best.map_or(true, |(_, b): (usize, f64)| lp.as_f64() > b) {
                best = Some((v, lp.as_f64()));
            }
        }
        let (v, lp) = best.expect("vocabulary has emittable tokens");
        h.log_prob += lp;
        if v == EOS_ID {
            h.terminated = true;
            break;
        }
        let norm = out.state.memory_norms()[0];
        h.tokens.push(v);
        h.trace.steps.push(trace_step(model, v, out.alpha[0], norm, out.attention.row(0)));
        state = out.state;
        prev = v;
    }
    Ok(finish(h, 0.0))
}

/// Top beam response for each of the six categories. `None` marks a category
/// whose hypotheses all contained UNK.
pub fn generate_all_emotions<T: Scalar>(
    model: &EcmModel<T>,
    post: &[usize],
    cfg: &DecodeConfig,
) -> Result<BTreeMap<EmotionCategory, Option<Hypothesis>>> {
    if cfg.beam == 0 || cfg.max_len == 0 {
        return Err(EcmError::Config("beam width and max_len must be >= 1".into()));
    }
    let enc = model.encode_post(post)?;
    let mut out = BTreeMap::new();
    for e in EmotionCategory::ALL {
        let r = beam_search_encoded(model, &enc, Some(e), cfg)?;
        out.insert(e, r.hypotheses.into_iter().next());
    }
    Ok(out)
}
