use crate::artifact::{self, ArtifactMeta, CODE_VERSION};
use crate::data::{self, Prepared};
use crate::manifest::Loaded;
use anyhow::{bail, Context, Result};
use argmine_core::corpus::io::write_jsonl;
use argmine_core::corpus::Fold;
use argmine_core::evaluation::{
    profile_outcomes, render_curve_svg, vicinity_counts, DistanceProfile, DistanceUnit, RelationOutcome,
    SpanCounts, SpanMatchReport, TokenAccuracy, DEFAULT_BINS,
};
use argmine_core::labels::{CorpusStats, LabeledThread, Schema};
use argmine_core::markers::{find_markers, mask_thread, MarkerLexicon, MaskPolicy, MaskedBatch};
use argmine_core::synthetic::{generate, SynthConfig};
use argmine_core::tokenize::{SurfaceTokenizer, Tokenizer};
use argmine_model::checkpoint::{self, Checkpoint, CheckpointMeta};
use argmine_model::training::{
    evaluate_aci, evaluate_rtp, split_heldout, train_downstream, train_smlm, AciExample, DownstreamData, DownstreamHead,
    RtpExample, RunLedger, SmlmReport, Task,
};
use argmine_model::{AciHead, Backbone, RtpHead, RtpMode, ToyTransformer, Vocab};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub struct Ctx {
    pub loaded: Loaded,
    pub out: PathBuf,
}

impl Ctx {
    pub fn new(manifest: &Path) -> Result<Self> {
        let loaded = Loaded::from_file(manifest)?;
        let out = loaded.output_dir();
        Ok(Self { loaded, out })
    }

    fn meta(&self, kind: &str, seed: u64) -> ArtifactMeta {
        ArtifactMeta::new(kind, &self.loaded, seed)
    }

    fn schema(&self) -> Schema {
        self.loaded.manifest.corpus.schema
    }

    #[allow(clippy::too_many_arguments)]
    fn checkpoint_meta(
        &self,
        kind: &str,
        b: &ToyTransformer,
        vocab: &Vocab,
        lexicon: &MarkerLexicon,
        seed: u64,
        epoch: Option<usize>,
        rtp: Option<&RtpHead>,
    ) -> CheckpointMeta {
        CheckpointMeta {
            kind: kind.into(),
            backbone: b.config().clone(),
            vocab: vocab.clone(),
            schema: Some(self.schema()),
            rtp_mode: rtp.map(|h| h.mode),
            rtp_classes: rtp.map(|h| h.classes.clone()),
            lexicon_hash: lexicon.hash(),
            tokenizer_fingerprint: SurfaceTokenizer::new().fingerprint(),
            manifest_hash: self.loaded.hash.clone(),
            seed,
            code_version: CODE_VERSION.into(),
            epoch,
            extra: serde_json::Value::Null,
        }
    }

    /// Backbone and its vocabulary: from `init`, else the manifest's plug-in
    /// checkpoint, else freshly initialized under `seed`.
    fn backbone(&self, init: Option<&Path>, prepared_vocab: &Vocab, seed: u64) -> Result<(ToyTransformer, Vocab)> {
        let plug = self.loaded.manifest.backbone.checkpoint.as_ref().map(|p| self.loaded.resolve(p));
        match init.map(Path::to_path_buf).or(plug) {
            Some(p) => {
                let ck = checkpoint::load(&p).with_context(|| format!("loading {}", p.display()))?;
                Ok((ck.backbone()?, ck.meta.vocab))
            }
            None => {
                let cfg = self.loaded.manifest.backbone.config(prepared_vocab.len(), seed);
                Ok((ToyTransformer::new(cfg)?, prepared_vocab.clone()))
            }
        }
    }
}

fn write_masked(ctx: &Ctx, prepared: &Prepared, lexicon: &MarkerLexicon, policy: MaskPolicy, seed: u64) -> Result<(usize, usize)> {
    let mut batches: Vec<MaskedBatch> = Vec::with_capacity(prepared.threads.len());
    for (i, t) in prepared.threads.iter().filter(|t| !t.thread.is_empty()).enumerate() {
        batches.push(mask_thread(lexicon, &t.thread, policy, seed.wrapping_add(i as u64))?);
    }
    let masked = batches.iter().map(|b| b.target_tokens.len()).sum();
    let name = format!("masked/{}-seed{seed}.json", if policy == MaskPolicy::Selective { "selective" } else { "random15" });
    artifact::write(&ctx.out.join(name), ctx.meta("masked", seed), &batches)?;
    Ok((batches.len(), masked))
}

pub fn mask(ctx: &Ctx, policy: MaskPolicy, lexicon: Option<&Path>, seed: Option<u64>) -> Result<String> {
    let prepared = data::load(&ctx.loaded)?;
    let lex = match lexicon {
        Some(p) => MarkerLexicon::parse(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => ctx.loaded.lexicon()?,
    };
    let seed = ctx.loaded.seed(seed)?;
    let (threads, masked) = write_masked(ctx, &prepared, &lex, policy, seed)?;
    Ok(format!("masked {masked} tokens in {threads} threads ({policy:?}, seed {seed})\n"))
}

pub fn pretrain_smlm(ctx: &Ctx, seed: Option<u64>, split: Option<&str>, init: Option<&Path>) -> Result<String> {
    let prepared = data::load(&ctx.loaded)?;
    let seed = ctx.loaded.seed(seed)?;
    let m = &ctx.loaded.manifest;
    let cfg = m.smlm.config(Task::Smlm, seed)?;
    let policy = m.smlm.policy.unwrap_or(MaskPolicy::Selective);
    let lexicon = ctx.loaded.lexicon()?;
    let threads: Vec<_> = match split {
        Some(s) => prepared.fold(prepared.plan(s, seed)?, Fold::Train).into_iter().map(|t| t.thread).collect(),
        None => prepared.threads.iter().map(|t| t.thread.clone()).collect(),
    };
    let sm = split_heldout(threads, cfg.heldout_fraction, seed);
    let (b, vocab) = ctx.backbone(init, &prepared.vocab, seed)?;
    let dir = ctx.out.join(format!("smlm/seed{seed}"));
    let mut on_epoch = |epoch: usize, _: &dyn Backbone| -> argmine_model::Result<Option<PathBuf>> {
        let path = dir.join(format!("epoch{epoch}.amck"));
        let meta = ctx.checkpoint_meta("backbone", &b, &vocab, &lexicon, seed, Some(epoch), None);
        checkpoint::save(&path, &meta, &[b.params()])?;
        Ok(Some(path))
    };
    let report = train_smlm(&b, &vocab, &lexicon, &sm, policy, &cfg, &mut on_epoch)?;
    artifact::write(&dir.join("report.json"), ctx.meta("smlm-report", seed), &report)?;
    let text = render_smlm(&report);
    artifact::write_text(&dir.join("report.txt"), &ctx.meta("smlm-report", seed), &text)?;
    Ok(text)
}

fn render_smlm(r: &SmlmReport) -> String {
    let mut s = format!("{:<6} {:>10} {:>10} {:>10} {:>8}\n", "epoch", "train CE", "held ppl", "held acc", "skipped");
    s.push_str(&format!("{:<6} {:>10} {:>10.4} {:>10.4} {:>8}\n", "init", "-", r.initial.perplexity, r.initial.accuracy, "-"));
    for e in &r.epochs {
        let flag = if e.default { "  <- default" } else { "" };
        s.push_str(&format!(
            "{:<6} {:>10.4} {:>10.4} {:>10.4} {:>8}{flag}\n",
            e.epoch, e.train_loss, e.heldout.perplexity, e.heldout.accuracy, e.skipped_batches
        ));
    }
    if let Some(e) = r.epochs.iter().find(|e| e.default) {
        if let Some(p) = &e.checkpoint {
            s.push_str(&format!("default checkpoint: {}\n", p.display()));
        }
    }
    s
}

fn rtp_classes(schema: Schema) -> Vec<String> {
    schema.relation_classes().iter().map(|c| c.to_string()).collect()
}

fn rtp_examples(threads: &[LabeledThread], mode: RtpMode, classes: &[String], max_positions: usize) -> Result<Vec<RtpExample>> {
    let mut out = Vec::new();
    for t in threads {
        out.extend(RtpExample::from_labeled(t, mode, classes, max_positions)?);
    }
    Ok(out)
}

/// Finetunes one model per seed on the split's train fold and writes the
/// merged ledger.
pub fn train(ctx: &Ctx, task: Task, seeds: &[u64], split: &str, init: Option<&Path>) -> Result<String> {
    let prepared = data::load(&ctx.loaded)?;
    let seeds: Vec<u64> = if seeds.is_empty() { vec![ctx.loaded.seed(None)?] } else { seeds.to_vec() };
    let m = &ctx.loaded.manifest;
    let section = if task == Task::Aci { &m.aci } else { &m.rtp };
    let lexicon = ctx.loaded.lexicon()?;
    let name = if task == Task::Aci { "aci" } else { "rtp" };
    let dir = ctx.out.join(format!("{name}/{split}"));
    let mut ledger: Option<RunLedger> = None;
    let mut curves = Vec::new();
    for &seed in &seeds {
        let cfg = section.config(task, seed)?;
        let plan = prepared.plan(split, seed)?;
        let (train_t, test_t) = (prepared.fold(plan, Fold::Train), prepared.fold(plan, Fold::Test));
        let (b, vocab) = ctx.backbone(init, &prepared.vocab, seed)?;
        let hidden = b.config().hidden;
        let path = dir.join(format!("seed{seed}/model.amck"));
        let mut run = match task {
            Task::Aci => {
                let head = AciHead::new(hidden, ctx.schema(), seed)?;
                let ex = |ts: &[LabeledThread]| ts.iter().map(AciExample::from).collect::<Vec<_>>();
                let data = DownstreamData::Aci { train: ex(&train_t), test: ex(&test_t) };
                let run = train_downstream(&b, &vocab, DownstreamHead::Aci(&head), &data, &cfg)?;
                let meta = ctx.checkpoint_meta("aci", &b, &vocab, &lexicon, seed, Some(cfg.epochs), None);
                checkpoint::save(&path, &meta, &[b.params(), head.params()])?;
                run
            }
            Task::Rtp => {
                let mode = section.mode.unwrap_or(RtpMode::Prompt { k: argmine_model::prompt::DEFAULT_MASKS });
                let classes = rtp_classes(ctx.schema());
                let head = RtpHead::new(hidden, mode, classes.clone(), seed)?;
                let maxp = b.config().max_positions;
                let data = DownstreamData::Rtp {
                    train: rtp_examples(&train_t, mode, &classes, maxp)?,
                    test: rtp_examples(&test_t, mode, &classes, maxp)?,
                };
                let run = train_downstream(&b, &vocab, DownstreamHead::Rtp(&head), &data, &cfg)?;
                let meta = ctx.checkpoint_meta("rtp", &b, &vocab, &lexicon, seed, Some(cfg.epochs), Some(&head));
                checkpoint::save(&path, &meta, &[b.params(), head.params()])?;
                run
            }
            Task::Smlm => bail!("use pretrain-smlm for the sMLM task"),
        };
        run.checkpoints.push(path.display().to_string());
        curves.push(run.records.iter().map(|r| r.micro_f1).collect::<Vec<f64>>());
        match &mut ledger {
            Some(l) => l.merge(run)?,
            None => ledger = Some(run),
        }
    }
    let ledger = ledger.expect("at least one seed");
    let seed0 = seeds[0];
    artifact::write_jsonl(&dir.join("ledger.jsonl"), &ctx.meta("ledger", seed0), &ledger.to_jsonl()?)?;
    let table = ledger.render();
    artifact::write_text(&dir.join("ledger.txt"), &ctx.meta("ledger", seed0), &table)?;
    let svg = render_curve_svg(&format!("{name} {split}: test micro-F1 per epoch"), &curves);
    std::fs::write(dir.join("curve.svg"), svg)?;
    Ok(table)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EvalReport {
    Aci(SpanMatchReport),
    Rtp { report: argmine_core::evaluation::RelationReport, outcomes: Vec<RelationOutcome> },
}

fn eval_threads(ctx: &Ctx, split: &str, seed: u64, fold: Fold) -> Result<Vec<LabeledThread>> {
    let prepared = data::load(&ctx.loaded)?;
    Ok(prepared.fold(prepared.plan(split, seed)?, fold))
}

fn rtp_outcomes(ck: &Checkpoint, threads: &[LabeledThread], schema: Schema) -> Result<(argmine_core::evaluation::RelationReport, Vec<RelationOutcome>)> {
    let b = ck.backbone()?;
    let head = ck.rtp_head()?;
    let ex = rtp_examples(threads, head.mode, &head.classes, b.config().max_positions)?;
    let (_, preds) = evaluate_rtp(&b, &ck.meta.vocab, &head, &ex)?;
    let outcomes: Vec<RelationOutcome> = ex
        .iter()
        .zip(&preds)
        .map(|(e, &p)| RelationOutcome {
            thread_id: e.thread_id.clone(),
            source: e.source.clone(),
            target: e.target.clone(),
            gold: head.classes[e.label].clone(),
            pred: head.classes[p].clone(),
        })
        .collect();
    let gold: Vec<&str> = outcomes.iter().map(|o| o.gold.as_str()).collect();
    let pred: Vec<&str> = outcomes.iter().map(|o| o.pred.as_str()).collect();
    Ok((argmine_core::evaluation::relation_scores(&gold, &pred, schema)?, outcomes))
}

pub fn evaluate(ctx: &Ctx, task: Task, ckpt: &Path, split: &str, seed: Option<u64>, fold: Fold, acc: TokenAccuracy) -> Result<String> {
    let seed = ctx.loaded.seed(seed)?;
    let threads = eval_threads(ctx, split, seed, fold)?;
    let ck = checkpoint::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let schema = ck.meta.schema.unwrap_or(ctx.schema());
    let (report, text) = match task {
        Task::Aci => {
            let ex: Vec<AciExample> = threads.iter().map(AciExample::from).collect();
            let (r, _) = evaluate_aci(&ck.backbone()?, &ck.meta.vocab, &ck.aci_head()?, &ex, acc)?;
            let text = r.render();
            (EvalReport::Aci(r), text)
        }
        Task::Rtp => {
            let (r, outcomes) = rtp_outcomes(&ck, &threads, schema)?;
            let text = r.render();
            (EvalReport::Rtp { report: r, outcomes }, text)
        }
        Task::Smlm => bail!("evaluate supports aci and rtp"),
    };
    let name = format!("eval/{}-{split}-seed{seed}", if task == Task::Aci { "aci" } else { "rtp" });
    artifact::write(&ctx.out.join(format!("{name}.json")), ctx.meta("evaluation", seed), &report)?;
    artifact::write_text(&ctx.out.join(format!("{name}.txt")), &ctx.meta("evaluation", seed), &text)?;
    Ok(text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Analysis {
    Distance(DistanceProfile),
    MarkerVicinity { window: usize, near_components: usize, far_components: usize, near: SpanMatchReport, far: SpanMatchReport },
}

pub fn analyze_distance(ctx: &Ctx, ckpt: &Path, split: &str, seed: Option<u64>, unit: DistanceUnit) -> Result<String> {
    let seed = ctx.loaded.seed(seed)?;
    let threads = eval_threads(ctx, split, seed, Fold::Test)?;
    let ck = checkpoint::load(ckpt)?;
    let (_, outcomes) = rtp_outcomes(&ck, &threads, ck.meta.schema.unwrap_or(ctx.schema()))?;
    let profile = profile_outcomes(&threads, &outcomes, &DEFAULT_BINS, unit);
    let text = profile.render();
    write_analysis(ctx, "distance", split, seed, &Analysis::Distance(profile), &text)?;
    Ok(text)
}

pub fn analyze_vicinity(ctx: &Ctx, ckpt: &Path, split: &str, seed: Option<u64>, window: usize) -> Result<String> {
    let seed = ctx.loaded.seed(seed)?;
    let threads = eval_threads(ctx, split, seed, Fold::Test)?;
    let ck = checkpoint::load(ckpt)?;
    let head = ck.aci_head()?;
    let lexicon = ctx.loaded.lexicon()?;
    let ex: Vec<AciExample> = threads.iter().map(AciExample::from).collect();
    let (_, preds) = evaluate_aci(&ck.backbone()?, &ck.meta.vocab, &head, &ex, TokenAccuracy::default())?;
    let mut near = SpanCounts::new(head.schema, TokenAccuracy::default());
    let mut far = SpanCounts::new(head.schema, TokenAccuracy::default());
    let (mut n_near, mut n_far) = (0, 0);
    for (t, pred) in threads.iter().zip(&preds) {
        let matches = find_markers(&lexicon, &t.thread.tokens, &t.thread.special_flags);
        let (a, b) = argmine_core::evaluation::marker_vicinity_split(&t.components, &matches, window);
        n_near += a.len();
        n_far += b.len();
        vicinity_counts(&t.bio, pred, &matches, window, &mut near, &mut far)?;
    }
    let (near, far) = (near.report(), far.report());
    let text = format!(
        "near a marker ({n_near} gold components)\n{}\nfar from markers ({n_far} gold components)\n{}",
        near.render(),
        far.render()
    );
    let a = Analysis::MarkerVicinity { window, near_components: n_near, far_components: n_far, near, far };
    write_analysis(ctx, "marker-vicinity", split, seed, &a, &text)?;
    Ok(text)
}

fn write_analysis(ctx: &Ctx, kind: &str, split: &str, seed: u64, a: &Analysis, text: &str) -> Result<()> {
    let base = ctx.out.join(format!("analysis/{kind}-{split}-seed{seed}"));
    artifact::write(&base.with_extension("json"), ctx.meta("analysis", seed), a)?;
    artifact::write_text(&base.with_extension("txt"), &ctx.meta("analysis", seed), text)
}

pub fn stats(ctx: &Ctx) -> Result<String> {
    let prepared = data::load(&ctx.loaded)?;
    let stats = CorpusStats::compute(&prepared.threads, ctx.schema());
    let text = format!("{} threads, {} components\n{}", stats.threads, stats.components, stats.render());
    let seed = ctx.loaded.manifest.seed;
    artifact::write(&ctx.out.join("data/stats.json"), ctx.meta("stats", seed), &stats)?;
    artifact::write_text(&ctx.out.join("data/stats.txt"), &ctx.meta("stats", seed), &stats.render())?;
    Ok(text)
}

pub fn prepare(ctx: &Ctx) -> Result<String> {
    let p = data::prepare(&ctx.loaded)?;
    let warnings: usize = p.threads.iter().map(|t| t.warnings.len()).sum();
    Ok(format!(
        "{} threads, {} split plans, vocabulary of {} -> {}\n{warnings} alignment warnings\n",
        p.threads.len(),
        p.splits.len(),
        p.vocab.len(),
        ctx.out.join("data").display()
    ))
}

/// Writes a synthetic corpus as record files usable by `kind = "records"`.
pub fn synth(out: &Path, cfg: &SynthConfig) -> Result<String> {
    let c = generate(cfg);
    write_jsonl(&out.join("posts.jsonl"), &c.posts)?;
    write_jsonl(&out.join("components.jsonl"), &c.components)?;
    write_jsonl(&out.join("relations.jsonl"), &c.relations)?;
    Ok(format!(
        "{} posts, {} components, {} relations -> {}\n",
        c.posts.len(),
        c.components.len(),
        c.relations.len(),
        out.display()
    ))
}
