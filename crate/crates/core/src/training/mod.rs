//! Mini-batch SGD with global-norm clipping, early stopping on validation
//! perplexity, and the seq2seq-then-ECM schedule.

pub mod optim;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DialogueExample, Vocab};
use crate::error::{EcmError, Result};
use crate::evaluation::perplexity;
use crate::model::{EcmConfig, EcmModel};
use crate::numerics::{NumericsError, Scalar, Tape};

use optim::{collect_gradients, sgd_step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Upper bound on epochs; training usually stops earlier on patience.
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation-perplexity improvement.
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm threshold; `None` disables clipping.
    pub clip: Option<f64>,
    pub stage: Stage,
    /// Per-epoch checkpoints go here when set.
    pub checkpoint_dir: Option<PathBuf>,
    /// TrainLog CSV, rewritten after each epoch when set.
    pub log_path: Option<PathBuf>,
    /// Keep the parameters of the best validation epoch at the end.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            lr: 0.5,
            max_epochs: 30,
            patience: 3,
            seed: 1,
            clip: Some(5.0),
            stage: Stage::Finetune,
            checkpoint_dir: None,
            log_path: None,
            restore_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(EcmError::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(EcmError::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if self.clip.is_some_and(|c| !(c > 0.0)) {
            return Err(EcmError::Config("clip threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Cross-entropy per target token.
    pub ce: f64,
    /// Type-selector loss per target token.
    pub alpha_bce: f64,
    /// Mean final internal-memory norm per example.
    pub mem_norm: f64,
    pub val_ppl: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<EpochLog>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,ce,alpha_bce,mem_norm,val_ppl,seconds";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{TRAIN_LOG_HEADER}\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{},{},{},{:.3}\n", e.epoch, e.ce, e.alpha_bce, e.mem_norm, e.val_ppl, e.seconds));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| EcmError::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| EcmError::io(path, e))
    }

    /// Equality of everything but wall time.
    pub fn same_metrics(&self, other: &TrainLog) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.ce.to_bits() == b.ce.to_bits()
                    && a.alpha_bce.to_bits() == b.alpha_bce.to_bits()
                    && a.mem_norm.to_bits() == b.mem_norm.to_bits()
                    && a.val_ppl.to_bits() == b.val_ppl.to_bits()
            })
    }

    pub fn best_val_ppl(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.val_ppl).fold(None, |m, v| Some(m.map_or(v, |m: f64| m.min(v))))
    }
}

/// Component sums returned by one optimizer step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub ce_sum: f64,
    pub alpha_sum: f64,
    pub mem_sum: f64,
    pub tokens: usize,
    pub examples: usize,
    pub grad_norm: f64,
}

/// Forward, backward and one SGD update on `batch`.
pub fn sgd_batch<T: Scalar>(model: &mut EcmModel<T>, batch: &[&DialogueExample], lr: f64, clip: Option<f64>) -> Result<StepStats> {
    let (grads, mut stats) = {
        let mut tape = Tape::new();
        let b = model.params().bind(&mut tape);
        let out = model.forward_loss(&mut tape, &b, batch)?;
        let loss = tape.value(out.loss).data()[0].as_f64();
        let mut g = tape.backward(out.loss)?;
        let stats = StepStats {
            loss,
            ce_sum: out.ce_sum,
            alpha_sum: out.alpha_sum,
            mem_sum: out.mem_sum,
            tokens: out.tokens,
            examples: out.examples,
            grad_norm: 0.0,
        };
        (collect_gradients(&b, &mut g), stats)
    };
    stats.grad_norm = sgd_step(model.params_mut(), grads, lr, clip);
    Ok(stats)
}

/// Trains in place. Batches follow a seeded shuffle, so two runs with the same
/// seed produce the same log apart from wall time.
pub fn train<T: Scalar>(model: &mut EcmModel<T>, train: &[DialogueExample], valid: &[DialogueExample], config: &TrainConfig) -> Result<TrainLog> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(EcmError::Config("training and validation sets must be non-empty".into()));
    }
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| EcmError::io(dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, EcmModel<T>)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut acc = StepStats::default();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&DialogueExample> = chunk.iter().map(|&i| &train[i]).collect();
            let diverged = |loss: f64| EcmError::Diverged { epoch, batch_ids: chunk.to_vec(), lr: config.lr, loss };
            let s = match sgd_batch(model, &batch, config.lr, config.clip) {
                Ok(s) => s,
                Err(EcmError::Numerics(NumericsError::NonFinite { .. })) => return Err(diverged(f64::NAN)),
                Err(e) => return Err(e),
            };
            if !s.loss.is_finite() || !s.grad_norm.is_finite() {
                return Err(diverged(s.loss));
            }
            acc.ce_sum += s.ce_sum;
            acc.alpha_sum += s.alpha_sum;
            acc.mem_sum += s.mem_sum;
            acc.tokens += s.tokens;
            acc.examples += s.examples;
        }
        let val_ppl = perplexity(model, valid, 64)?;
        log.entries.push(EpochLog {
            epoch,
            ce: acc.ce_sum / acc.tokens as f64,
            alpha_bce: acc.alpha_sum / acc.tokens as f64,
            mem_norm: acc.mem_sum / acc.examples as f64,
            val_ppl,
            seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(dir) = &config.checkpoint_dir {
            model.save(&dir.join(format!("epoch-{epoch:03}.ckpt")))?;
        }
        if let Some(path) = &config.log_path {
            log.write_csv(path)?;
        }
        if best.as_ref().map_or(true, |(b, _)| val_ppl < *b) {
            best = Some((val_ppl, model.clone()));
            since_best = 0;
            if let Some(dir) = &config.checkpoint_dir {
                model.save(&dir.join("best.ckpt"))?;
            }
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    if config.restore_best {
        if let Some((_, m)) = best {
            *model = m;
        }
    }
    Ok(log)
}

/// Encoded examples together with the vocabulary their ids refer to.
#[derive(Debug, Clone)]
pub struct EncodedCorpus<'a> {
    pub vocab: &'a Vocab,
    pub train: &'a [DialogueExample],
    pub valid: &'a [DialogueExample],
}

#[derive(Debug, Clone)]
pub struct TwoStageOutcome<T> {
    pub pretrained: EcmModel<T>,
    pub model: EcmModel<T>,
    pub pretrain_log: TrainLog,
    pub finetune_log: TrainLog,
    /// Parameters carried over from the pretrained model.
    pub copied: Vec<String>,
}

/// Stage 1 trains a plain seq2seq on `unlabeled`; stage 2 copies its shared
/// parameters into a model with `ecm_config` and trains on `labeled`.
pub fn pretrain_then_finetune<T: Scalar>(
    unlabeled: &EncodedCorpus<'_>,
    labeled: &EncodedCorpus<'_>,
    ecm_config: &EcmConfig,
    pretrain: &TrainConfig,
    finetune: &TrainConfig,
    seed: u64,
) -> Result<TwoStageOutcome<T>> {
    if unlabeled.vocab != labeled.vocab {
        return Err(EcmError::Config("pretraining and finetuning corpora use different vocabularies".into()));
    }
    let base_cfg = ecm_config.clone().with_flags(false, false, false);
    let mut pretrained = EcmModel::<T>::new(base_cfg, unlabeled.vocab.clone(), seed)?;
    let pretrain_log = train(&mut pretrained, unlabeled.train, unlabeled.valid, pretrain)?;
    let (mut model, copied) = EcmModel::from_pretrained(&pretrained, ecm_config.clone(), seed.wrapping_add(1))?;
    let finetune_log = train(&mut model, labeled.train, labeled.valid, finetune)?;
    Ok(TwoStageOutcome { pretrained, model, pretrain_log, finetune_log, copied })
}
