//! The generator: GRU encoder, additive attention, and a GRU decoder with
//! switchable emotion embedding, internal memory and external memory.

mod decode;
mod forward;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, validate_layout};
use crate::corpus::{EmotionCategory, Vocab};
use crate::error::{EcmError, Result};
use crate::numerics::{ParamSet, Scalar, Tensor};

pub use decode::{DecodeState, EncodedPost, StepResult};
pub use forward::{LossOutput, Source, StepOutput, StepState};

/// How the type-selector supervision treats generic-word steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaLoss {
    /// `-[q log a + (1 - q) log(1 - a)]`
    Bce,
    /// `-q log a` only.
    EmotionOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcmConfig {
    pub hidden: usize,
    pub layers: usize,
    pub embed_dim: usize,
    pub emotion_dim: usize,
    pub attention_dim: usize,
    /// Full vocabulary size.
    pub vocab_size: usize,
    /// Generic output vocabulary, specials included.
    pub generic_vocab: usize,
    pub emotion_vocab: usize,
    pub use_emb: bool,
    pub use_imem: bool,
    pub use_emem: bool,
    /// Posts and responses are truncated to this many tokens.
    pub max_len: usize,
    pub max_decode_len: usize,
    pub init_scale: f64,
    pub alpha_loss: AlphaLoss,
    /// Adds the final internal-memory norm to the loss.
    pub memory_loss: bool,
}

impl Default for EcmConfig {
    fn default() -> Self {
        EcmConfig {
            hidden: 64,
            layers: 1,
            embed_dim: 32,
            emotion_dim: 32,
            attention_dim: 64,
            vocab_size: 0,
            generic_vocab: 0,
            emotion_vocab: 0,
            use_emb: true,
            use_imem: true,
            use_emem: true,
            max_len: 20,
            max_decode_len: 12,
            init_scale: 0.08,
            alpha_loss: AlphaLoss::Bce,
            memory_loss: true,
        }
    }
}

impl EcmConfig {
    /// Plain attention seq2seq.
    pub fn seq2seq() -> Self {
        EcmConfig { use_emb: false, use_imem: false, use_emem: false, ..Default::default() }
    }

    /// Emotion category embedding only.
    pub fn emb() -> Self {
        EcmConfig { use_emb: true, use_imem: false, use_emem: false, ..Default::default() }
    }

    pub fn with_flags(mut self, use_emb: bool, use_imem: bool, use_emem: bool) -> Self {
        self.use_emb = use_emb;
        self.use_imem = use_imem;
        self.use_emem = use_emem;
        self
    }

    /// Copies the vocabulary sizes from `vocab`.
    pub fn for_vocab(mut self, vocab: &Vocab) -> Self {
        self.vocab_size = vocab.len();
        self.generic_vocab = vocab.generic_output_size();
        self.emotion_vocab = vocab.emotion_output_size();
        self
    }

    pub fn needs_emotion(&self) -> bool {
        self.use_emb || self.use_imem
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("embed_dim", self.embed_dim),
            ("attention_dim", self.attention_dim),
            ("max_len", self.max_len),
            ("max_decode_len", self.max_decode_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(EcmError::Config(format!("{name} must be positive")));
        }
        if self.use_emb && self.emotion_dim == 0 {
            return Err(EcmError::Config("emotion_dim must be positive".into()));
        }
        if self.generic_vocab + self.emotion_vocab != self.vocab_size || self.generic_vocab <= crate::corpus::UNK_ID {
            return Err(EcmError::Config(format!(
                "vocab sizes inconsistent: generic {} + emotion {} != {}",
                self.generic_vocab, self.emotion_vocab, self.vocab_size
            )));
        }
        if self.use_emem && self.emotion_vocab == 0 {
            return Err(EcmError::Config("external memory needs a non-empty emotion vocabulary".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(EcmError::Config("init_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if (self.vocab_size, self.generic_vocab, self.emotion_vocab)
            != (vocab.len(), vocab.generic_output_size(), vocab.emotion_output_size())
        {
            return Err(EcmError::Config(format!(
                "config vocab sizes ({}, {}, {}) do not match vocabulary ({}, {}, {})",
                self.vocab_size,
                self.generic_vocab,
                self.emotion_vocab,
                vocab.len(),
                vocab.generic_output_size(),
                vocab.emotion_output_size()
            )));
        }
        Ok(())
    }
}

pub(crate) fn gru_names(prefix: &str, layer: usize) -> [String; 4] {
    ["w_x", "u_zr", "u_n", "b"].map(|s| format!("{prefix}.{layer}.{s}"))
}

/// Parameter layout, in insertion order, for a configuration.
fn layout(c: &EcmConfig) -> Vec<(String, Vec<usize>)> {
    let (h, e, a, v) = (c.hidden, c.embed_dim, c.attention_dim, c.vocab_size);
    let mut out: Vec<(String, Vec<usize>)> = vec![("embed".into(), vec![v, e])];
    for l in 0..c.layers {
        let input = if l == 0 { e } else { h };
        let [w_x, u_zr, u_n, b] = gru_names("enc", l);
        out.extend([(w_x, vec![input, 3 * h]), (u_zr, vec![h, 2 * h]), (u_n, vec![h, h]), (b, vec![3 * h])]);
    }
    out.push(("att.w".into(), vec![h, a]));
    out.push(("att.u".into(), vec![h, a]));
    out.push(("att.v".into(), vec![a, 1]));
    for l in 0..c.layers {
        let [w_x, u_zr, u_n, b] = gru_names("dec", l);
        if l == 0 {
            out.push(("dec.0.w_in".into(), vec![h + e, 3 * h]));
            if c.use_emb {
                out.push(("dec.0.w_in_emo".into(), vec![c.emotion_dim, 3 * h]));
            }
            if c.use_imem {
                out.push(("dec.0.w_in_mem".into(), vec![h, 3 * h]));
            }
        } else {
            out.push((w_x, vec![h, 3 * h]));
        }
        out.extend([(u_zr, vec![h, 2 * h]), (u_n, vec![h, h]), (b, vec![3 * h])]);
    }
    if c.use_emb {
        out.push(("emotion.embed".into(), vec![6, c.emotion_dim]));
    }
    if c.use_imem {
        out.push(("imem.bank".into(), vec![6, h]));
        out.push(("imem.w_read".into(), vec![e + 2 * h, h]));
        out.push(("imem.w_write".into(), vec![h, h]));
    }
    if c.use_emem {
        out.push(("out.w_generic".into(), vec![h, c.generic_vocab]));
        out.push(("out.w_emotion".into(), vec![h, c.emotion_vocab]));
        out.push(("out.v_u".into(), vec![h, 1]));
    } else {
        out.push(("out.w".into(), vec![h, v]));
    }
    out
}

fn init_params<T: Scalar>(c: &EcmConfig, seed: u64) -> Result<ParamSet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::new();
    for (name, shape) in layout(c) {
        p.insert_uniform(name, &shape, c.init_scale, &mut rng)?;
    }
    Ok(p)
}

/// All trainable parameters plus the vocabulary they are laid out for.
#[derive(Debug, Clone, PartialEq)]
pub struct EcmModel<T = f32> {
    config: EcmConfig,
    vocab: Vocab,
    params: ParamSet<T>,
}

impl<T: Scalar> EcmModel<T> {
    /// Fresh model with every parameter drawn from seeded `uniform(-s, s)`.
    pub fn new(config: EcmConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        config.check_vocab(&vocab)?;
        let params = init_params(&config, seed)?;
        Ok(EcmModel { config, vocab, params })
    }

    /// Model for `config` whose parameters are copied from `base` wherever the
    /// name and shape agree. With the external memory on, the generic output
    /// projection starts from the generic columns of the base output layer.
    /// Returns the model and the names that were copied.
    pub fn from_pretrained(base: &EcmModel<T>, config: EcmConfig, seed: u64) -> Result<(Self, Vec<String>)> {
        if config.vocab_size != base.config.vocab_size || config.generic_vocab != base.config.generic_vocab {
            return Err(EcmError::Config("pretrained model was built for a different vocabulary".into()));
        }
        let mut model = EcmModel::new(config, base.vocab.clone(), seed)?;
        let mut copied = Vec::new();
        let names: Vec<String> = model.params.names().to_vec();
        for name in names {
            let target = model.params.get_mut(&name).expect("own name");
            if let Some(src) = base.params.get(&name).filter(|s| s.shape() == target.shape()) {
                *target = src.clone();
                copied.push(name);
            }
        }
        if model.config.use_emem {
            if let Some(w) = base.params.get("out.w") {
                let g = model.config.generic_vocab;
                let (h, v) = (w.rows(), w.cols());
                let mut data = Vec::with_capacity(h * g);
                for r in 0..h {
                    data.extend_from_slice(&w.data()[r * v..r * v + g]);
                }
                *model.params.get_mut("out.w_generic").expect("emem layout") = Tensor::new(vec![h, g], data)?;
                copied.push("out.w_generic".into());
            }
        }
        Ok((model, copied))
    }

    pub fn config(&self) -> &EcmConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> EcmModel<U> {
        EcmModel { config: self.config.clone(), vocab: self.vocab.clone(), params: self.params.cast() }
    }

    pub(crate) fn emotion_indices(&self, emotions: &[Option<EmotionCategory>]) -> Result<Vec<usize>> {
        emotions
            .iter()
            .map(|e| match e {
                Some(e) => Ok(e.index()),
                None if self.config.needs_emotion() => {
                    Err(EcmError::Contract("emotion category required by the emotion mechanisms".into()))
                }
                None => Ok(EmotionCategory::Other.index()),
            })
            .collect()
    }

    pub fn header(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "ecm",
            "dtype": T::DTYPE,
            "config": self.config,
            "vocab": serde_json::from_str::<serde_json::Value>(&self.vocab.to_json()).expect("vocab json"),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.header(), &self.params)
    }

    /// Loads a generator checkpoint, validating every tensor shape against its config.
    pub fn load(path: &Path) -> Result<Self> {
        let (header, params) = load_checkpoint::<T>(path)?;
        Self::from_parts(header, params)
    }

    pub fn from_parts(header: serde_json::Value, params: ParamSet<T>) -> Result<Self> {
        if header.get("kind").and_then(|k| k.as_str()) != Some("ecm") {
            return Err(EcmError::Checkpoint("not a generator checkpoint".into()));
        }
        let config: EcmConfig =
            serde_json::from_value(header["config"].clone()).map_err(|e| EcmError::Checkpoint(format!("config: {e}")))?;
        config.validate()?;
        let vocab = Vocab::from_json(&header["vocab"].to_string())?;
        config.check_vocab(&vocab)?;
        let mut expected = ParamSet::<f64>::new();
        for (name, shape) in layout(&config) {
            expected.insert(name, Tensor::zeros(&shape))?;
        }
        validate_layout(&params, &expected)?;
        Ok(EcmModel { config, vocab, params })
    }
}
