//! Wire types shared by the `chat` subcommand and the HTTP service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use ecm_core::corpus::{tokenize, EmotionCategory, TokenKind};
use ecm_core::inference::{beam_search_encoded, DecodeConfig, Hypothesis};
use ecm_core::model::EcmModel;

pub const MAX_BEAM: usize = 64;
pub const MAX_DECODE_LEN: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequest {
    pub post: String,
    pub emotion: String,
    #[serde(default)]
    pub beam: Option<usize>,
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatAllRequest {
    pub post: String,
    #[serde(default)]
    pub beam: Option<usize>,
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub token: String,
    pub partition: TokenKind,
    pub alpha: f64,
    pub memory_norm: f64,
    /// Attention over the post tokens.
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub emotion: EmotionCategory,
    /// Tokens joined by single spaces; empty when every hypothesis contained UNK.
    pub response: String,
    pub tokens: Vec<String>,
    /// Ranking score of the returned hypothesis (total log-probability unless a length penalty is set).
    pub score: Option<f64>,
    pub log_prob: Option<f64>,
    /// False when decoding hit the length limit before EOS.
    pub terminated: bool,
    pub all_unk: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

/// Request validation failures; everything else is a server error.
#[derive(Debug, Clone, PartialEq)]
pub enum ApiError {
    UnknownEmotion(String),
    BadRequest(String),
    Internal(String),
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApiError::UnknownEmotion(e) => write!(f, "unknown emotion {e:?}"),
            ApiError::BadRequest(m) | ApiError::Internal(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for ApiError {}

pub fn parse_emotion(name: &str) -> Result<EmotionCategory, ApiError> {
    name.parse().map_err(|_| ApiError::UnknownEmotion(name.to_string()))
}

/// Applies per-request overrides to the default decode settings.
pub fn decode_config(defaults: &DecodeConfig, beam: Option<usize>, max_len: Option<usize>) -> Result<DecodeConfig, ApiError> {
    let cfg = DecodeConfig { beam: beam.unwrap_or(defaults.beam), max_len: max_len.unwrap_or(defaults.max_len), ..defaults.clone() };
    if !(1..=MAX_BEAM).contains(&cfg.beam) {
        return Err(ApiError::BadRequest(format!("beam must be in 1..={MAX_BEAM}")));
    }
    if !(1..=MAX_DECODE_LEN).contains(&cfg.max_len) {
        return Err(ApiError::BadRequest(format!("max_len must be in 1..={MAX_DECODE_LEN}")));
    }
    Ok(cfg)
}

fn encode_post(model: &EcmModel<f32>, post: &str) -> Result<Vec<usize>, ApiError> {
    let tokens = tokenize(post);
    if tokens.is_empty() {
        return Err(ApiError::BadRequest("post is empty after tokenization".into()));
    }
    let mut ids = model.vocab().encode(&tokens);
    ids.truncate(model.config().max_len.max(1));
    Ok(ids)
}

fn to_response(model: &EcmModel<f32>, emotion: EmotionCategory, best: Option<&Hypothesis>, all_unk: bool, trace: bool) -> ChatResponse {
    let vocab = model.vocab();
    match best {
        Some(h) => {
            let tokens = vocab.decode(&h.tokens);
            ChatResponse {
                emotion,
                response: tokens.join(" "),
                score: Some(h.score),
                log_prob: Some(h.log_prob),
                terminated: h.terminated,
                all_unk,
                trace: trace.then(|| {
                    h.trace
                        .steps
                        .iter()
                        .map(|s| TraceEntry {
                            token: vocab.token(s.token).to_string(),
                            partition: s.partition,
                            alpha: s.alpha,
                            memory_norm: s.memory_norm,
                            attention: s.attention.clone(),
                        })
                        .collect()
                }),
                tokens,
            }
        }
        None => ChatResponse {
            emotion,
            response: String::new(),
            tokens: Vec::new(),
            score: None,
            log_prob: None,
            terminated: false,
            all_unk,
            trace: trace.then(Vec::new),
        },
    }
}

/// Top-ranked response for each requested emotion.
pub fn respond(model: &EcmModel<f32>, post: &str, emotions: &[EmotionCategory], cfg: &DecodeConfig, trace: bool) -> Result<Vec<ChatResponse>, ApiError> {
    let ids = encode_post(model, post)?;
    let enc = model.encode_post(&ids).map_err(|e| ApiError::Internal(e.to_string()))?;
    emotions
        .iter()
        .map(|&e| {
            let out = beam_search_encoded(model, &enc, Some(e), cfg).map_err(|e| ApiError::Internal(e.to_string()))?;
            Ok(to_response(model, e, out.best(), out.all_unk, trace))
        })
        .collect()
}

pub fn respond_all(model: &EcmModel<f32>, post: &str, cfg: &DecodeConfig, trace: bool) -> Result<BTreeMap<EmotionCategory, ChatResponse>, ApiError> {
    let all = respond(model, post, &EmotionCategory::ALL, cfg, trace)?;
    Ok(all.into_iter().map(|r| (r.emotion, r)).collect())
}
