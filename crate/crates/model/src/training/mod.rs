//! Training schedules: selective-MLM pretraining and ACI/RTP finetuning.
//!
//! Objectives are sums over items; a batch is a set of items whose token
//! counts fit the budget, and `grad_accum` batches make one optimizer step.

mod downstream;
mod optim;
mod smlm;

pub use downstream::{
    evaluate_aci, evaluate_rtp, train_downstream, AciExample, DownstreamData, DownstreamHead, EpochRecord, LedgerSummary,
    RtpExample, RtpInstance, RunLedger,
};
pub use optim::{Adam, GradAccumulator};
pub use smlm::{evaluate_masked, masked_lm_loss, split_heldout, train_smlm, MaskedLmMetrics, SmlmEpoch, SmlmReport, SmlmSplit};

use crate::{ModelError, Result};
use candle_core::Var;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Smlm,
    Aci,
    Rtp,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "smlm" => Ok(Task::Smlm),
            "aci" => Ok(Task::Aci),
            "rtp" => Ok(Task::Rtp),
            _ => Err(format!("unknown task {s:?} (expected smlm|aci|rtp)")),
        }
    }
}

/// Input granularity; decides the default token budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Thread,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub tokens_per_batch: usize,
    pub grad_accum: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub checkpoint_every_epoch: bool,
    #[serde(default)]
    pub warmup_steps: usize,
    #[serde(default)]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub freeze_backbone: bool,
    /// sMLM epoch whose checkpoint is flagged for downstream use.
    #[serde(default = "default_epoch")]
    pub default_epoch: usize,
    #[serde(default = "heldout_fraction")]
    pub heldout_fraction: f64,
    /// Epochs averaged for the reported score.
    #[serde(default = "report_last")]
    pub report_last: usize,
}

fn default_epoch() -> usize {
    4
}

fn heldout_fraction() -> f64 {
    0.01
}

fn report_last() -> usize {
    5
}

impl TrainConfig {
    pub fn defaults(task: Task, granularity: Granularity) -> Self {
        let smlm = task == Task::Smlm;
        Self {
            task,
            tokens_per_batch: match granularity {
                Granularity::Thread => 8192,
                Granularity::Comment => 1024,
            },
            grad_accum: if smlm { 3 } else { 4 },
            learning_rate: if smlm { 1e-6 } else { 2e-5 },
            epochs: if smlm { 10 } else { 30 },
            seed: 0,
            checkpoint_every_epoch: smlm,
            warmup_steps: 0,
            clip_norm: None,
            freeze_backbone: false,
            default_epoch: default_epoch(),
            heldout_fraction: heldout_fraction(),
            report_last: report_last(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.tokens_per_batch == 0 {
            return bad("tokens_per_batch must be positive");
        }
        if self.grad_accum == 0 {
            return bad("grad_accum must be positive");
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return bad("heldout_fraction must lie in [0, 1)");
        }
        if self.report_last == 0 {
            return bad("report_last must be positive");
        }
        Ok(())
    }

    fn expect(&self, task: Task) -> Result<()> {
        self.validate()?;
        if self.task != task {
            return Err(ModelError::Config(format!("config is for {:?}, not {task:?}", self.task)));
        }
        Ok(())
    }
}

/// Independent seed for a named randomness stream.
pub fn stream_seed(seed: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Groups items of similar length into batches of at most `budget` tokens.
/// Items are length-sorted (stable), packed greedily, and the batch order is
/// shuffled under `seed`. Returns item indices.
pub fn bucket_batches<S: AsRef<str>>(items: &[(S, usize)], budget: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if let Some((id, len)) = items.iter().find(|(_, len)| *len > budget) {
        return Err(ModelError::Batch(format!(
            "thread {} has {len} tokens, over the batch budget of {budget}",
            id.as_ref()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&i| items[i].1);
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut used = 0;
    for i in order {
        let len = items[i].1;
        match batches.last_mut() {
            Some(b) if used + len <= budget => {
                b.push(i);
                used += len;
            }
            _ => {
                batches.push(vec![i]);
                used = len;
            }
        }
    }
    batches.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(seed, "batch", 0)));
    Ok(batches)
}

/// Gradient accumulation and optimizer stepping for one parameter owner.
struct Stepper {
    vars: Vec<Var>,
    acc: GradAccumulator,
    opt: Adam,
    grad_accum: usize,
    warmup: usize,
    clip: Option<f64>,
    pending: usize,
    steps: usize,
}

impl Stepper {
    fn new(vars: Vec<Var>, cfg: &TrainConfig) -> Self {
        Self {
            acc: GradAccumulator::new(vars.len()),
            opt: Adam::new(&vars, cfg.learning_rate),
            vars,
            grad_accum: cfg.grad_accum,
            warmup: cfg.warmup_steps,
            clip: cfg.clip_norm,
            pending: 0,
            steps: 0,
        }
    }

    fn backward(&mut self, loss: &candle_core::Tensor) -> Result<()> {
        let grads = loss.backward()?;
        self.acc.add(&self.vars, &grads)
    }

    fn end_batch(&mut self) -> Result<()> {
        self.pending += 1;
        if self.pending >= self.grad_accum {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.pending = 0;
        if self.acc.is_empty() {
            return Ok(());
        }
        if let Some(c) = self.clip {
            let norm = self.acc.global_norm();
            if norm > c {
                self.acc.scale((c / norm) as f32);
            }
        }
        let scale = if self.warmup > 0 { ((self.steps + 1) as f64 / self.warmup as f64).min(1.0) } else { 1.0 };
        let grads = self.acc.take();
        self.opt.step(&self.vars, &grads, scale)?;
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_halves_share_a_batch() {
        let items = [("a", 4096), ("b", 4096)];
        assert_eq!(bucket_batches(&items, 8192, 0).unwrap(), vec![vec![0, 1]]);
    }

    #[test]
    fn oversize_item_names_thread() {
        let err = bucket_batches(&[("ok", 10), ("huge", 9000)], 8192, 0).unwrap_err();
        assert!(err.to_string().contains("huge"), "{err}");
    }

    #[test]
    fn defaults_follow_task() {
        let s = TrainConfig::defaults(Task::Smlm, Granularity::Thread);
        assert_eq!((s.tokens_per_batch, s.grad_accum, s.learning_rate, s.epochs), (8192, 3, 1e-6, 10));
        let a = TrainConfig::defaults(Task::Aci, Granularity::Comment);
        assert_eq!((a.tokens_per_batch, a.grad_accum, a.learning_rate, a.epochs), (1024, 4, 2e-5, 30));
        assert!(TrainConfig { grad_accum: 0, ..a.clone() }.validate().is_err());
        assert!(TrainConfig { learning_rate: f64::NAN, ..a }.validate().is_err());
    }

    proptest! {
        #[test]
        fn batches_respect_budget(lens in prop::collection::vec(0usize..300, 0..60), budget in 300usize..1000, seed: u64) {
            let items: Vec<(String, usize)> = lens.iter().enumerate().map(|(i, &l)| (format!("t{i}"), l)).collect();
            let batches = bucket_batches(&items, budget, seed).unwrap();
            let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
            seen.sort();
            prop_assert_eq!(seen, (0..items.len()).collect::<Vec<_>>());
            for b in &batches {
                prop_assert!(!b.is_empty());
                prop_assert!(b.iter().map(|&i| lens[i]).sum::<usize>() <= budget);
            }
            prop_assert_eq!(&batches, &bucket_batches(&items, budget, seed).unwrap());
        }
    }
}
