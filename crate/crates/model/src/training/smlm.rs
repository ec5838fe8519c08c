use super::{bucket_batches, stream_seed, Stepper, Task, TrainConfig};
use crate::backbone::{log_softmax_last, Backbone};
use crate::vocab::Vocab;
use crate::{ModelError, Result};
use argmine_core::corpus::SerializedThread;
use argmine_core::markers::{mask_thread, MarkerLexicon, MaskPolicy, MaskedBatch};
use candle_core::{Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmlmSplit {
    pub train: Vec<SerializedThread>,
    pub heldout: Vec<SerializedThread>,
}

/// Reserves `fraction` of the threads (at least one when there are two or
/// more and the fraction is positive) for held-out marker accuracy.
pub fn split_heldout(threads: Vec<SerializedThread>, fraction: f64, seed: u64) -> SmlmSplit {
    let n = threads.len();
    let mut k = (fraction * n as f64).ceil() as usize;
    if fraction > 0.0 && n >= 2 {
        k = k.clamp(1, n - 1);
    } else {
        k = 0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(seed, "heldout", 0)));
    let mut held = vec![false; n];
    order[..k].iter().for_each(|&i| held[i] = true);
    let (mut train, mut heldout) = (Vec::new(), Vec::new());
    for (i, t) in threads.into_iter().enumerate() {
        if held[i] {
            heldout.push(t);
        } else {
            train.push(t);
        }
    }
    SmlmSplit { train, heldout }
}

/// Summed cross-entropy over `positions` of `logits` `[n, V]`. Rows outside
/// `positions` never enter the computation.
pub fn masked_lm_loss(logits: &Tensor, positions: &[usize], targets: &[u32]) -> Result<Tensor> {
    if positions.len() != targets.len() {
        return Err(ModelError::Batch("masked positions and targets differ in length".into()));
    }
    if positions.is_empty() {
        return Ok(Tensor::new(0f32, logits.device())?);
    }
    let m = positions.len();
    let idx = Tensor::from_vec(positions.iter().map(|&p| p as u32).collect(), m, logits.device())?;
    let lp = log_softmax_last(&logits.index_select(&idx, 0)?)?;
    let t = Tensor::from_vec(targets.to_vec(), (m, 1), logits.device())?;
    Ok(lp.gather(&t, 1)?.sum_all()?.neg()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedLmMetrics {
    pub masked: usize,
    /// Mean cross-entropy per masked token (0 when nothing was masked).
    pub loss: f64,
    pub perplexity: f64,
    pub accuracy: f64,
}

struct Masked {
    ids: Vec<u32>,
    positions: Vec<usize>,
    targets: Vec<u32>,
}

fn masked(vocab: &Vocab, batch: &MaskedBatch) -> Masked {
    Masked {
        ids: vocab.ids(&batch.input_tokens),
        positions: batch.masked_positions().collect(),
        targets: batch.target_tokens.values().map(|t| vocab.id(t)).collect(),
    }
}

fn mask(lexicon: &MarkerLexicon, st: &SerializedThread, policy: MaskPolicy, seed: u64) -> Result<MaskedBatch> {
    mask_thread(lexicon, st, policy, seed).map_err(|e| ModelError::Batch(format!("thread {}: {e}", st.thread_id)))
}

/// Held-out marker prediction under selective masking.
pub fn evaluate_masked(
    b: &dyn Backbone,
    vocab: &Vocab,
    lexicon: &MarkerLexicon,
    threads: &[SerializedThread],
) -> Result<MaskedLmMetrics> {
    let (mut total, mut count, mut correct) = (0f64, 0usize, 0usize);
    for st in threads.iter().filter(|t| !t.tokens.is_empty()) {
        let m = masked(vocab, &mask(lexicon, st, MaskPolicy::Selective, 0)?);
        if m.positions.is_empty() {
            continue;
        }
        let logits = b.mlm_logits(&b.encode(&m.ids, &st.global_attention)?)?;
        total += f64::from(masked_lm_loss(&logits, &m.positions, &m.targets)?.to_scalar::<f32>()?);
        let idx = Tensor::from_vec(m.positions.iter().map(|&p| p as u32).collect(), m.positions.len(), &Device::Cpu)?;
        let pred = logits.index_select(&idx, 0)?.argmax(1)?.to_vec1::<u32>()?;
        correct += pred.iter().zip(&m.targets).filter(|(p, t)| p == t).count();
        count += m.positions.len();
    }
    let loss = if count > 0 { total / count as f64 } else { 0.0 };
    Ok(MaskedLmMetrics {
        masked: count,
        loss,
        perplexity: loss.exp(),
        accuracy: if count > 0 { correct as f64 / count as f64 } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmlmEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub masked_tokens: usize,
    pub skipped_batches: usize,
    pub steps: usize,
    pub heldout: MaskedLmMetrics,
    pub checkpoint: Option<PathBuf>,
    /// Set on the checkpoint recommended for downstream finetuning.
    pub default: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmlmReport {
    pub initial: MaskedLmMetrics,
    pub epochs: Vec<SmlmEpoch>,
    pub default_epoch: Option<usize>,
    pub skipped_batches: usize,
}

/// Pretrains `b` in place. `on_epoch(epoch, b)` runs after every epoch when
/// checkpointing is enabled and may return the path it wrote.
#[allow(clippy::too_many_arguments)]
pub fn train_smlm(
    b: &dyn Backbone,
    vocab: &Vocab,
    lexicon: &MarkerLexicon,
    split: &SmlmSplit,
    policy: MaskPolicy,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &dyn Backbone) -> Result<Option<PathBuf>>,
) -> Result<SmlmReport> {
    cfg.expect(Task::Smlm)?;
    let initial = evaluate_masked(b, vocab, lexicon, &split.heldout)?;
    let default_epoch = match cfg.epochs {
        0 => None,
        e => Some(cfg.default_epoch.clamp(1, e)),
    };
    let items: Vec<(&str, usize)> = split.train.iter().map(|t| (t.thread_id.as_str(), t.len())).collect();
    let mut stepper = Stepper::new(b.params().vars(), cfg);
    let mut report = SmlmReport { initial, epochs: Vec::new(), default_epoch, skipped_batches: 0 };
    for epoch in 1..=cfg.epochs {
        let batches = bucket_batches(&items, cfg.tokens_per_batch, stream_seed(cfg.seed, "smlm-epoch", epoch as u64))?;
        let (mut total, mut count, mut skipped) = (0f64, 0usize, 0usize);
        for batch in batches {
            let mut any = false;
            for i in batch {
                let st = &split.train[i];
                if st.tokens.is_empty() {
                    continue;
                }
                let seed = stream_seed(cfg.seed, "mask", (epoch as u64) << 32 | i as u64);
                let m = masked(vocab, &mask(lexicon, st, policy, seed)?);
                if m.positions.is_empty() {
                    continue;
                }
                let logits = b.mlm_logits(&b.encode(&m.ids, &st.global_attention)?)?;
                let loss = masked_lm_loss(&logits, &m.positions, &m.targets)?;
                total += f64::from(loss.to_scalar::<f32>()?);
                count += m.positions.len();
                stepper.backward(&loss)?;
                any = true;
            }
            if any {
                stepper.end_batch()?;
            } else {
                skipped += 1;
            }
        }
        stepper.flush()?;
        let heldout = evaluate_masked(b, vocab, lexicon, &split.heldout)?;
        let checkpoint = if cfg.checkpoint_every_epoch { on_epoch(epoch, b)? } else { None };
        report.skipped_batches += skipped;
        report.epochs.push(SmlmEpoch {
            epoch,
            train_loss: if count > 0 { total / count as f64 } else { 0.0 },
            masked_tokens: count,
            skipped_batches: skipped,
            steps: stepper.steps,
            heldout,
            checkpoint,
            default: Some(epoch) == default_epoch,
        });
    }
    Ok(report)
}
