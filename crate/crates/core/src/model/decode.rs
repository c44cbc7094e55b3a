use crate::corpus::{EmotionCategory, EOS_ID, GO_ID};
use crate::error::{EcmError, Result};
use crate::numerics::{Scalar, Tape, Tensor};

use super::forward::{Source, StepState};
use super::EcmModel;

/// Encoder results for a single post, detached from any tape.
#[derive(Debug, Clone)]
pub struct EncodedPost<T> {
    outputs: Vec<Tensor<T>>,
    keys: Vec<Tensor<T>>,
    finals: Vec<Tensor<T>>,
}

impl<T: Scalar> EncodedPost<T> {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

/// Decoder state for `B` hypotheses of one post.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeState<T> {
    /// Per layer, `[B, H]`.
    pub s: Vec<Tensor<T>>,
    /// Internal memory `M_{e,t}`, `[B, H]`, when enabled.
    pub memory: Option<Tensor<T>>,
    pub emotions: Vec<EmotionCategory>,
    pub t: usize,
}

impl<T: Scalar> DecodeState<T> {
    pub fn batch(&self) -> usize {
        self.emotions.len()
    }

    /// Reorders or duplicates hypotheses.
    pub fn select(&self, rows: &[usize]) -> Self {
        DecodeState {
            s: self.s.iter().map(|s| s.select_rows(rows)).collect(),
            memory: self.memory.as_ref().map(|m| m.select_rows(rows)),
            emotions: rows.iter().map(|&r| self.emotions[r]).collect(),
            t: self.t,
        }
    }

    /// L2 norm of each row's internal memory; zeros without it.
    pub fn memory_norms(&self) -> Vec<f64> {
        match &self.memory {
            Some(m) => (0..m.rows()).map(|r| m.row(r).iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()).collect(),
            None => vec![0.0; self.batch()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepResult<T> {
    pub state: DecodeState<T>,
    /// `[B, V]`
    pub log_probs: Tensor<T>,
    /// Type selector per row; 0 without the external memory.
    pub alpha: Vec<f64>,
    /// `[B, n]`
    pub attention: Tensor<T>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<T: Scalar> EcmModel<T> {
    pub fn encode_post(&self, post: &[usize]) -> Result<EncodedPost<T>> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let src = self.encode(&mut tape, &b, &[post])?;
        let take = |vs: &[crate::numerics::Var]| vs.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>();
        Ok(EncodedPost { outputs: take(&src.outputs), keys: take(&src.keys), finals: take(&src.finals) })
    }

    /// State before the first decoder step, one row per requested emotion.
    pub fn initial_state(&self, enc: &EncodedPost<T>, emotions: &[Option<EmotionCategory>]) -> Result<DecodeState<T>> {
        let idx = self.emotion_indices(emotions)?;
        let rows = vec![0; emotions.len()];
        let memory = if self.config.use_imem { Some(self.params.get("imem.bank").expect("imem layout").select_rows(&idx)) } else { None };
        Ok(DecodeState {
            s: enc.finals.iter().map(|f| f.select_rows(&rows)).collect(),
            memory,
            emotions: idx.iter().map(|&i| EmotionCategory::ALL[i]).collect(),
            t: 0,
        })
    }

    /// Advances every row of `state` by one token.
    pub fn decode_step(&self, enc: &EncodedPost<T>, state: &DecodeState<T>, y_prev: &[usize]) -> Result<StepResult<T>> {
        let bsz = state.batch();
        if y_prev.len() != bsz {
            return Err(EcmError::Contract(format!("{} previous tokens for {bsz} hypotheses", y_prev.len())));
        }
        if let Some(&bad) = y_prev.iter().find(|&&y| y >= self.config.vocab_size) {
            return Err(EcmError::Contract(format!("token id {bad} outside the vocabulary")));
        }
        let rows = vec![0; bsz];
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let src = Source {
            outputs: enc.outputs.iter().map(|o| tape.constant(o.select_rows(&rows))).collect(),
            keys: enc.keys.iter().map(|k| tape.constant(k.select_rows(&rows))).collect(),
            mask: None,
            finals: Vec::new(),
        };
        let st = StepState {
            s: state.s.iter().map(|s| tape.constant(s.clone())).collect(),
            memory: state.memory.as_ref().map(|m| tape.constant(m.clone())),
        };
        let emotions: Vec<usize> = state.emotions.iter().map(|e| e.index()).collect();
        let w_in = self.decoder_input_weight(&mut tape, &b)?;
        let out = self.step(&mut tape, &b, &src, w_in, &st, y_prev, &emotions, None)?;
        let alpha = match out.alpha_logit {
            Some(z) => tape.value(z).data().iter().map(|v| sigmoid(v.as_f64())).collect(),
            None => vec![0.0; bsz],
        };
        Ok(StepResult {
            state: DecodeState {
                s: out.state.s.iter().map(|&v| tape.value(v).clone()).collect(),
                memory: out.state.memory.map(|v| tape.value(v).clone()),
                emotions: state.emotions.clone(),
                t: state.t + 1,
            },
            log_probs: tape.value(out.log_probs).clone(),
            alpha,
            attention: tape.value(out.attention).clone(),
        })
    }

    /// Output distribution (probabilities) and type selector for decoder states `[B, H]`.
    pub fn output_distribution(&self, states: &Tensor<T>) -> Result<(Tensor<T>, Vec<f64>)> {
        if states.rank() != 2 || states.cols() != self.config.hidden {
            return Err(EcmError::Contract(format!("states must be [B, {}], got {:?}", self.config.hidden, states.shape())));
        }
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let s = tape.constant(states.clone());
        let (lp, z) = self.output_layer(&mut tape, &b, s)?;
        let probs = tape.value(lp).map(|v| v.exp());
        let alpha = match z {
            Some(z) => tape.value(z).data().iter().map(|v| sigmoid(v.as_f64())).collect(),
            None => vec![0.0; states.rows()],
        };
        Ok((probs, alpha))
    }

    /// Teacher-forced `log P(y_t | y_<t)` for every token of `response`,
    /// followed by the EOS step, computed on a single tape.
    pub fn teacher_forced_log_probs(&self, post: &[usize], response: &[usize], emotion: Option<EmotionCategory>) -> Result<Vec<f64>> {
        let emo = self.emotion_indices(&[emotion])?;
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let src = self.encode(&mut tape, &b, &[post])?;
        let mut state = self.start_state(&mut tape, &b, &src, &emo)?;
        let w_in = self.decoder_input_weight(&mut tape, &b)?;
        let mut out = Vec::with_capacity(response.len() + 1);
        let mut prev = GO_ID;
        for &y in response.iter().chain(std::iter::once(&EOS_ID)) {
            let step = self.step(&mut tape, &b, &src, w_in, &state, &[prev], &emo, None)?;
            out.push(tape.value(step.log_probs).get2(0, y).as_f64());
            state = step.state;
            prev = y;
        }
        Ok(out)
    }
}
