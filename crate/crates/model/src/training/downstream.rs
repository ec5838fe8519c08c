use super::{bucket_batches, stream_seed, Stepper, Task, TrainConfig};
use crate::backbone::{log_softmax_last, Backbone};
use crate::heads::{aci_forward, aci_loss, rtp_forward, AciHead, RtpHead, RtpInput, RtpMode};
use crate::prompt::{build_prompt, PromptInstance};
use crate::vocab::Vocab;
use crate::{ModelError, Result};
use argmine_core::corpus::SerializedThread;
use argmine_core::crf::decode;
use argmine_core::evaluation::{mean_std, Prf, SpanCounts, SpanMatchReport, TokenAccuracy};
use argmine_core::labels::{BioSequence, LabeledThread};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AciExample {
    pub thread: SerializedThread,
    pub gold: BioSequence,
}

impl From<&LabeledThread> for AciExample {
    fn from(lt: &LabeledThread) -> Self {
        Self { thread: lt.thread.clone(), gold: lt.bio.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RtpInstance {
    Prompt(PromptInstance),
    /// Token ranges of the referred-to and the referring component.
    MeanPool { thread: SerializedThread, first: (usize, usize), second: (usize, usize) },
}

impl RtpInstance {
    pub fn len(&self) -> usize {
        match self {
            RtpInstance::Prompt(p) => p.len(),
            RtpInstance::MeanPool { thread, .. } => thread.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_input(&self) -> RtpInput<'_> {
        match self {
            RtpInstance::Prompt(p) => RtpInput::Prompt(p),
            RtpInstance::MeanPool { thread, first, second } => {
                RtpInput::MeanPool { thread, first: *first, second: *second }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtpExample {
    pub id: String,
    pub thread_id: String,
    pub source: String,
    pub target: String,
    pub input: RtpInstance,
    pub label: usize,
}

impl RtpExample {
    /// One example per relation of `lt` whose class is in `classes`.
    pub fn from_labeled(lt: &LabeledThread, mode: RtpMode, classes: &[String], max_positions: usize) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for edge in &lt.relations {
            let Some(label) = classes.iter().position(|c| *c == edge.coarse_class) else { continue };
            let find = |id: &str| {
                lt.component(id)
                    .ok_or_else(|| ModelError::Prompt(format!("relation endpoint {id} missing from thread {}", lt.thread.thread_id)))
            };
            let (source, target) = (find(&edge.source_component_id)?, find(&edge.target_component_id)?);
            let input = match mode {
                RtpMode::Prompt { k } => {
                    let mut p = build_prompt(&lt.thread, source, target, k, max_positions)?;
                    p.label = Some(edge.coarse_class.clone());
                    RtpInstance::Prompt(p)
                }
                RtpMode::MeanPool => RtpInstance::MeanPool {
                    thread: lt.thread.clone(),
                    first: (target.token_start, target.token_end),
                    second: (source.token_start, source.token_end),
                },
            };
            let id = format!("{}:{}->{}", lt.thread.thread_id, edge.source_component_id, edge.target_component_id);
            out.push(RtpExample {
                id,
                thread_id: lt.thread.thread_id.clone(),
                source: edge.source_component_id.clone(),
                target: edge.target_component_id.clone(),
                input,
                label,
            });
        }
        Ok(out)
    }
}

pub enum DownstreamData {
    Aci { train: Vec<AciExample>, test: Vec<AciExample> },
    Rtp { train: Vec<RtpExample>, test: Vec<RtpExample> },
}

#[derive(Clone, Copy)]
pub enum DownstreamHead<'a> {
    Aci(&'a AciHead),
    Rtp(&'a RtpHead),
}

impl DownstreamHead<'_> {
    fn vars(&self) -> Vec<candle_core::Var> {
        match self {
            DownstreamHead::Aci(h) => h.params().vars(),
            DownstreamHead::Rtp(h) => h.params().vars(),
        }
    }
}

pub fn evaluate_aci(
    b: &dyn Backbone,
    vocab: &Vocab,
    head: &AciHead,
    examples: &[AciExample],
    mode: TokenAccuracy,
) -> Result<(SpanMatchReport, Vec<BioSequence>)> {
    let t = head.transitions()?;
    let mut counts = SpanCounts::new(head.schema, mode);
    let mut preds = Vec::with_capacity(examples.len());
    for ex in examples {
        let pred = if ex.thread.is_empty() {
            BioSequence::all_o(0)
        } else {
            decode(&aci_forward(b, vocab, head, &ex.thread)?, &t)?
        };
        counts.add(&ex.gold, &pred)?;
        preds.push(pred);
    }
    Ok((counts.report(), preds))
}

/// Micro scores over single-label predictions, and the predicted indices.
pub fn evaluate_rtp(b: &dyn Backbone, vocab: &Vocab, head: &RtpHead, examples: &[RtpExample]) -> Result<(Prf, Vec<usize>)> {
    let mut preds = Vec::with_capacity(examples.len());
    for ex in examples {
        let scores = rtp_forward(b, vocab, head, &ex.input.as_input())?.to_vec1::<f32>()?;
        // First maximum wins ties.
        let best = scores
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc })
            .0;
        preds.push(best);
    }
    let right = preds.iter().zip(examples).filter(|(p, e)| **p == e.label).count();
    let wrong = examples.len() - right;
    Ok((Prf::from_counts(right, wrong, wrong), preds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub micro_f1: f64,
    pub token_accuracy: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub last_epochs: usize,
    /// Per seed: mean micro-F1 over its last `last_epochs` epochs.
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub task: Task,
    pub selection_rule: String,
    pub report_last: usize,
    pub records: Vec<EpochRecord>,
    pub checkpoints: Vec<String>,
}

impl RunLedger {
    pub fn new(task: Task, report_last: usize) -> Self {
        Self {
            task,
            selection_rule: format!("mean over seeds of the micro-F1 averaged over the last {report_last} epochs"),
            report_last,
            records: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    pub fn merge(&mut self, other: RunLedger) -> Result<()> {
        if other.task != self.task || other.report_last != self.report_last {
            return Err(ModelError::Config("cannot merge ledgers of different runs".into()));
        }
        self.records.extend(other.records);
        self.checkpoints.extend(other.checkpoints);
        Ok(())
    }

    pub fn summary(&self) -> LedgerSummary {
        let mut by_seed: BTreeMap<u64, Vec<&EpochRecord>> = BTreeMap::new();
        for r in &self.records {
            by_seed.entry(r.seed).or_default().push(r);
        }
        let per_seed: Vec<(u64, f64)> = by_seed
            .into_iter()
            .map(|(seed, mut rs)| {
                rs.sort_by_key(|r| r.epoch);
                let tail = &rs[rs.len().saturating_sub(self.report_last)..];
                (seed, tail.iter().map(|r| r.micro_f1).sum::<f64>() / tail.len() as f64)
            })
            .collect();
        let scores: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
        let (mean, std) = if scores.is_empty() { (0.0, 0.0) } else { mean_std(&scores) };
        LedgerSummary { last_epochs: self.report_last, per_seed, mean, std }
    }

    /// One JSON record per line, then the summary.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        s.push_str(&serde_json::to_string(&serde_json::json!({ "summary": self.summary(), "selection_rule": self.selection_rule }))?);
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self) -> String {
        let sum = self.summary();
        let mut s = format!("{:<8} {:>10}\n", "seed", "micro-F1");
        for (seed, f) in &sum.per_seed {
            let _ = writeln!(s, "{seed:<8} {f:>10.4}");
        }
        let _ = writeln!(s, "{:<8} {:>10.4} ± {:.4}  ({})", "mean", sum.mean, sum.std, self.selection_rule);
        s
    }
}

/// Finetunes backbone (unless frozen) and head in place, evaluating on the
/// test split after every epoch.
pub fn train_downstream(
    b: &dyn Backbone,
    vocab: &Vocab,
    head: DownstreamHead,
    data: &DownstreamData,
    cfg: &TrainConfig,
) -> Result<RunLedger> {
    let task = match (head, data) {
        (DownstreamHead::Aci(_), DownstreamData::Aci { .. }) => Task::Aci,
        (DownstreamHead::Rtp(_), DownstreamData::Rtp { .. }) => Task::Rtp,
        _ => return Err(ModelError::Config("head does not match the data's task".into())),
    };
    cfg.expect(task)?;
    let items: Vec<(String, usize)> = match data {
        DownstreamData::Aci { train, .. } => train.iter().map(|e| (e.thread.thread_id.clone(), e.thread.len())).collect(),
        DownstreamData::Rtp { train, .. } => train.iter().map(|e| (e.id.clone(), e.input.len())).collect(),
    };
    if items.is_empty() {
        return Err(ModelError::Config("the train split is empty".into()));
    }
    let mut vars = head.vars();
    if !cfg.freeze_backbone {
        vars.extend(b.params().vars());
    }
    let mut stepper = Stepper::new(vars, cfg);
    let mut ledger = RunLedger::new(task, cfg.report_last);
    for epoch in 1..=cfg.epochs {
        let batches = bucket_batches(&items, cfg.tokens_per_batch, stream_seed(cfg.seed, "downstream-epoch", epoch as u64))?;
        let mut total = 0f64;
        for batch in batches {
            for i in batch {
                let loss = match (head, data) {
                    (DownstreamHead::Aci(h), DownstreamData::Aci { train, .. }) => {
                        let ex = &train[i];
                        if ex.thread.is_empty() {
                            continue;
                        }
                        let (nll, surrogate) =
                            aci_loss(b, h, &vocab.ids(&ex.thread.tokens), &ex.thread.global_attention, &ex.gold.indices())?;
                        total += nll;
                        surrogate
                    }
                    (DownstreamHead::Rtp(h), DownstreamData::Rtp { train, .. }) => {
                        let ex = &train[i];
                        let lp = log_softmax_last(&rtp_forward(b, vocab, h, &ex.input.as_input())?)?;
                        let loss = lp.get(ex.label)?.neg()?;
                        total += f64::from(loss.to_scalar::<f32>()?);
                        loss
                    }
                    _ => unreachable!(),
                };
                stepper.backward(&loss)?;
            }
            stepper.end_batch()?;
        }
        stepper.flush()?;
        let (micro_f1, token_accuracy) = match (head, data) {
            (DownstreamHead::Aci(h), DownstreamData::Aci { test, .. }) => {
                let (r, _) = evaluate_aci(b, vocab, h, test, TokenAccuracy::default())?;
                (r.micro.f1, Some(r.token_accuracy))
            }
            (DownstreamHead::Rtp(h), DownstreamData::Rtp { test, .. }) => (evaluate_rtp(b, vocab, h, test)?.0.f1, None),
            _ => unreachable!(),
        };
        ledger.records.push(EpochRecord {
            seed: cfg.seed,
            epoch,
            train_loss: total / items.len() as f64,
            micro_f1,
            token_accuracy,
            steps: stepper.steps,
        });
    }
    Ok(ledger)
}
