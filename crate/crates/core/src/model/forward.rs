use crate::corpus::{DialogueExample, EOS_ID, GO_ID, PAD_ID};
use crate::error::{EcmError, Result};
use crate::numerics::{gru_cell, Bound, GruParams, NumericsError, Scalar, Tape, Tensor, Var};

use super::{gru_names, AlphaLoss, EcmModel};

/// Additive constant that removes padded source positions from the attention softmax.
const MASKED_SCORE: f64 = -1e9;
const NORM_EPS: f64 = 1e-8;

/// Encoder outputs for a batch, on a tape.
#[derive(Debug, Clone)]
pub struct Source {
    /// Top-layer state per source position, each `[B, H]`.
    pub outputs: Vec<Var>,
    /// `outputs[j] U_a`, each `[B, A]`.
    pub keys: Vec<Var>,
    /// `[B, n]` additive mask, present only when some row is padded.
    pub mask: Option<Var>,
    /// Final state per layer, each `[B, H]`.
    pub finals: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct StepState {
    /// Decoder state per layer, each `[B, H]`.
    pub s: Vec<Var>,
    /// Internal memory `M_{e,t}`, `[B, H]`.
    pub memory: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: StepState,
    /// `[B, V]` log-probabilities over the full vocabulary.
    pub log_probs: Var,
    /// Pre-sigmoid type selector, `[B, 1]`.
    pub alpha_logit: Option<Var>,
    /// `[B, n]`
    pub attention: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LossOutput {
    /// Sum of the enabled terms divided by the number of target tokens.
    pub loss: Var,
    pub ce_sum: f64,
    pub alpha_sum: f64,
    /// Sum over examples of the final memory norm (whether or not it is in the loss).
    pub mem_sum: f64,
    pub tokens: usize,
    pub examples: usize,
}

fn gru(b: &Bound<'_>, prefix: &str, layer: usize, w_x: Option<Var>) -> Result<GruParams, NumericsError> {
    let [wx, u_zr, u_n, bias] = gru_names(prefix, layer);
    Ok(GruParams {
        w_x: match w_x {
            Some(w) => w,
            None => b.var(&wx)?,
        },
        u_zr: b.var(&u_zr)?,
        u_n: b.var(&u_n)?,
        b: b.var(&bias)?,
    })
}

fn col_mask<T: Scalar>(tape: &mut Tape<'_, T>, active: &[bool]) -> Result<Option<Var>, NumericsError> {
    if active.iter().all(|&a| a) {
        return Ok(None);
    }
    let m: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    Ok(Some(tape.constant(Tensor::from_f64(&[active.len(), 1], &m)?)))
}

/// `old + mask * (new - old)`; rows with mask 0 keep their previous value.
fn blend<T: Scalar>(tape: &mut Tape<'_, T>, old: Var, new: Var, mask: Option<Var>) -> Result<Var, NumericsError> {
    match mask {
        None => Ok(new),
        Some(m) => {
            let d = tape.sub(new, old)?;
            let d = tape.scale_rows(d, m)?;
            tape.add(old, d)
        }
    }
}

impl<T: Scalar> EcmModel<T> {
    /// Runs the encoder stack over right-padded posts.
    pub fn encode<'p>(&self, tape: &mut Tape<'p, T>, b: &Bound<'_>, posts: &[&[usize]]) -> Result<Source> {
        let c = &self.config;
        if posts.is_empty() || posts.iter().any(|p| p.is_empty()) {
            return Err(EcmError::Contract("posts must be non-empty".into()));
        }
        let n = posts.iter().map(|p| p.len()).max().unwrap_or(0);
        let embed = b.var("embed")?;
        let layers: Vec<GruParams> = (0..c.layers).map(|l| gru(b, "enc", l, None)).collect::<Result<_, _>>()?;
        let zeros = tape.constant(Tensor::zeros(&[posts.len(), c.hidden]));
        let mut h = vec![zeros; c.layers];
        let mut outputs = Vec::with_capacity(n);
        for t in 0..n {
            let ids: Vec<usize> = posts.iter().map(|p| p.get(t).copied().unwrap_or(PAD_ID)).collect();
            let active: Vec<bool> = posts.iter().map(|p| t < p.len()).collect();
            let mask = col_mask(tape, &active)?;
            let mut x = tape.gather_rows(embed, &ids)?;
            for (l, g) in layers.iter().enumerate() {
                let next = gru_cell(tape, x, h[l], g)?;
                h[l] = blend(tape, h[l], next, mask)?;
                x = h[l];
            }
            outputs.push(x);
        }
        let att_u = b.var("att.u")?;
        let keys = outputs.iter().map(|&o| tape.matmul(o, att_u)).collect::<Result<Vec<_>, _>>()?;
        let mask = if posts.iter().all(|p| p.len() == n) {
            None
        } else {
            let m: Vec<f64> = posts
                .iter()
                .flat_map(|p| (0..n).map(move |j| if j < p.len() { 0.0 } else { MASKED_SCORE }))
                .collect();
            Some(tape.constant(Tensor::from_f64(&[posts.len(), n], &m)?))
        };
        Ok(Source { outputs, keys, mask, finals: h })
    }

    /// Additive attention of `query` `[B, H]` over the source. Returns the context and the weights.
    pub fn attend(&self, tape: &mut Tape<'_, T>, b: &Bound<'_>, src: &Source, query: Var) -> Result<(Var, Var)> {
        let ws = tape.matmul(query, b.var("att.w")?)?;
        let v = b.var("att.v")?;
        let mut scores = Vec::with_capacity(src.keys.len());
        for &k in &src.keys {
            let e = tape.add(ws, k)?;
            let e = tape.tanh(e)?;
            scores.push(tape.matmul(e, v)?);
        }
        let mut s = if scores.len() == 1 { scores[0] } else { tape.concat(&scores, 1)? };
        if let Some(m) = src.mask {
            s = tape.add(s, m)?;
        }
        let w = tape.softmax(s, 1)?;
        let mut ctx = None;
        for (j, &h) in src.outputs.iter().enumerate() {
            let wj = if src.outputs.len() == 1 { w } else { tape.slice_cols(w, j, 1)? };
            let term = tape.scale_rows(h, wj)?;
            ctx = Some(match ctx {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        Ok((ctx.expect("non-empty source"), w))
    }

    /// Decoder start: encoder final states, and the bank row of each emotion.
    pub fn start_state(&self, tape: &mut Tape<'_, T>, b: &Bound<'_>, src: &Source, emotions: &[usize]) -> Result<StepState> {
        let memory = if self.config.use_imem { Some(tape.gather_rows(b.var("imem.bank")?, emotions)?) } else { None };
        Ok(StepState { s: src.finals.clone(), memory })
    }

    /// Layer-0 input weight: the `[c; e(y)]` block stacked over the enabled emotion blocks.
    pub fn decoder_input_weight(&self, tape: &mut Tape<'_, T>, b: &Bound<'_>) -> Result<Var> {
        let mut blocks = vec![b.var("dec.0.w_in")?];
        if self.config.use_emb {
            blocks.push(b.var("dec.0.w_in_emo")?);
        }
        if self.config.use_imem {
            blocks.push(b.var("dec.0.w_in_mem")?);
        }
        Ok(if blocks.len() == 1 { blocks[0] } else { tape.concat(&blocks, 0)? })
    }

    /// One decoder step. `active` marks rows that are still inside their target sequence.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        tape: &mut Tape<'_, T>,
        b: &Bound<'_>,
        src: &Source,
        w_in: Var,
        state: &StepState,
        y_prev: &[usize],
        emotions: &[usize],
        active: Option<&[bool]>,
    ) -> Result<StepOutput> {
        let c = &self.config;
        let top = *state.s.last().expect("at least one layer");
        let (ctx, attention) = self.attend(tape, b, src, top)?;
        let ey = tape.gather_rows(b.var("embed")?, y_prev)?;
        let mut parts = vec![ctx, ey];
        if c.use_emb {
            parts.push(tape.gather_rows(b.var("emotion.embed")?, emotions)?);
        }
        let memory = match state.memory {
            Some(m) if c.use_imem => {
                let gate_in = tape.concat(&[ey, top, ctx], 1)?;
                let gr = tape.matmul(gate_in, b.var("imem.w_read")?)?;
                let gr = tape.sigmoid(gr)?;
                parts.push(tape.mul(gr, m)?);
                Some(m)
            }
            _ if c.use_imem => return Err(EcmError::Contract("internal memory state missing".into())),
            _ => None,
        };
        let mask = match active {
            Some(a) => col_mask(tape, a)?,
            None => None,
        };
        let mut x = tape.concat(&parts, 1)?;
        let mut s = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let g = gru(b, "dec", l, (l == 0).then_some(w_in))?;
            let next = gru_cell(tape, x, state.s[l], &g)?;
            let next = blend(tape, state.s[l], next, mask)?;
            s.push(next);
            x = next;
        }
        let st = x;
        let memory = match memory {
            Some(m) => {
                let gw = tape.matmul(st, b.var("imem.w_write")?)?;
                let gw = tape.sigmoid(gw)?;
                let written = tape.mul(gw, m)?;
                Some(blend(tape, m, written, mask)?)
            }
            None => None,
        };
        let (log_probs, alpha_logit) = self.output_layer(tape, b, st)?;
        Ok(StepOutput { state: StepState { s, memory }, log_probs, alpha_logit, attention })
    }

    /// Log-distribution over the full vocabulary from decoder states `[B, H]`.
    ///
    /// With the external memory the generic and emotion softmaxes are mixed by
    /// `alpha = sigmoid(s v_u)`, computed in log space.
    pub fn output_layer(&self, tape: &mut Tape<'_, T>, b: &Bound<'_>, st: Var) -> Result<(Var, Option<Var>)> {
        if !self.config.use_emem {
            let logits = tape.matmul(st, b.var("out.w")?)?;
            return Ok((tape.log_softmax(logits)?, None));
        }
        let z = tape.matmul(st, b.var("out.v_u")?)?;
        let log_alpha = tape.log_sigmoid(z)?;
        let neg = tape.affine(z, -1.0, 0.0)?;
        let log_not_alpha = tape.log_sigmoid(neg)?;
        let g = tape.matmul(st, b.var("out.w_generic")?)?;
        let g = tape.log_softmax(g)?;
        let g = tape.add_col(g, log_not_alpha)?;
        let e = tape.matmul(st, b.var("out.w_emotion")?)?;
        let e = tape.log_softmax(e)?;
        let e = tape.add_col(e, log_alpha)?;
        Ok((tape.concat(&[g, e], 1)?, Some(z)))
    }

    /// Teacher-forced loss over a batch. Targets are the response followed by EOS.
    pub fn forward_loss(&self, tape: &mut Tape<'_, T>, b: &Bound<'_>, batch: &[&DialogueExample]) -> Result<LossOutput> {
        let c = &self.config;
        if batch.is_empty() {
            return Err(EcmError::Contract("empty batch".into()));
        }
        if c.use_emem {
            if let Some(ex) = batch.iter().find(|ex| ex.q.len() != ex.response.len()) {
                return Err(EcmError::Contract(format!(
                    "emotion-word flags missing: {} flags for {} response tokens",
                    ex.q.len(),
                    ex.response.len()
                )));
            }
        }
        let emotions = self.emotion_indices(&batch.iter().map(|e| e.emotion).collect::<Vec<_>>())?;
        let posts: Vec<&[usize]> = batch.iter().map(|e| e.post.as_slice()).collect();
        let src = self.encode(tape, b, &posts)?;
        let mut state = self.start_state(tape, b, &src, &emotions)?;
        let w_in = self.decoder_input_weight(tape, b)?;
        let steps = batch.iter().map(|e| e.response.len() + 1).max().unwrap_or(1);
        let mut ce_terms = Vec::with_capacity(steps);
        let mut alpha_terms = Vec::new();
        let mut tokens = 0;
        for t in 0..steps {
            let y_prev: Vec<usize> =
                batch.iter().map(|e| if t == 0 { GO_ID } else { e.response.get(t - 1).copied().unwrap_or(PAD_ID) }).collect();
            let active: Vec<bool> = batch.iter().map(|e| t <= e.response.len()).collect();
            let gold: Vec<usize> =
                batch.iter().map(|e| if t < e.response.len() { e.response[t] } else if t == e.response.len() { EOS_ID } else { PAD_ID }).collect();
            let q: Vec<bool> = batch.iter().map(|e| e.q.get(t).copied().unwrap_or(false)).collect();
            tokens += active.iter().filter(|&&a| a).count();
            let out = self.step(tape, b, &src, w_in, &state, &y_prev, &emotions, Some(&active))?;
            let m: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
            let mvar = tape.constant(Tensor::from_f64(&[batch.len(), 1], &m)?);
            let picked = tape.pick(out.log_probs, &gold)?;
            ce_terms.push(tape.mul(picked, mvar)?);
            if let Some(z) = out.alpha_logit {
                let la = tape.log_sigmoid(z)?;
                let wq: Vec<f64> = (0..batch.len()).map(|i| if q[i] { m[i] } else { 0.0 }).collect();
                let wq = tape.constant(Tensor::from_f64(&[batch.len(), 1], &wq)?);
                alpha_terms.push(tape.mul(la, wq)?);
                if c.alpha_loss == AlphaLoss::Bce {
                    let neg = tape.affine(z, -1.0, 0.0)?;
                    let lna = tape.log_sigmoid(neg)?;
                    let wg: Vec<f64> = (0..batch.len()).map(|i| if q[i] { 0.0 } else { m[i] }).collect();
                    let wg = tape.constant(Tensor::from_f64(&[batch.len(), 1], &wg)?);
                    alpha_terms.push(tape.mul(lna, wg)?);
                }
            }
            state = out.state;
        }
        let ce = tape.concat(&ce_terms, 1)?;
        let ce = tape.sum(ce)?;
        let ce_sum = -tape.value(ce).data()[0].as_f64();
        let mut total = tape.affine(ce, -1.0, 0.0)?;
        let mut alpha_sum = 0.0;
        if !alpha_terms.is_empty() {
            let a = tape.concat(&alpha_terms, 1)?;
            let a = tape.sum(a)?;
            alpha_sum = -tape.value(a).data()[0].as_f64();
            total = tape.sub(total, a)?;
        }
        let mut mem_sum = 0.0;
        if let Some(m) = state.memory {
            let norms = tape.row_l2_norm(m, NORM_EPS)?;
            let norms = tape.sum(norms)?;
            mem_sum = tape.value(norms).data()[0].as_f64();
            if c.memory_loss {
                total = tape.add(total, norms)?;
            }
        }
        let loss = tape.affine(total, 1.0 / tokens as f64, 0.0)?;
        Ok(LossOutput { loss, ce_sum, alpha_sum, mem_sum, tokens, examples: batch.len() })
    }
}
