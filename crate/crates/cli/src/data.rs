//! Corpus ingestion into labeled threads, split plans and a vocabulary.

use crate::artifact::{self, ArtifactMeta};
use crate::manifest::{CorpusKind, Loaded};
use anyhow::{bail, Context, Result};
use argmine_core::corpus::io::{read_convokit, read_jsonl, records_to_posts, PostRecord};
use argmine_core::corpus::{
    extract_threads, make_splits, parse_ratio, serialize_thread, Fold, Post, QuoteMatcher, SerializeConfig, SplitPlan,
};
use argmine_core::labels::adapters::{chunk_document, parse_brat, read_inline_records, InlinePostRecord};
use argmine_core::labels::{build_labeled_thread, ComponentRecord, CorpusStats, LabeledThread, RelationRecord};
use argmine_core::synthetic::generate;
use argmine_core::tokenize::SurfaceTokenizer;
use argmine_model::{set_global_attention, Vocab};
use std::path::{Path, PathBuf};

pub struct Prepared {
    pub threads: Vec<LabeledThread>,
    pub splits: Vec<SplitPlan>,
    pub vocab: Vocab,
}

pub fn threads_path(out: &Path) -> PathBuf {
    out.join("data/threads.json")
}

pub fn splits_path(out: &Path) -> PathBuf {
    out.join("data/splits.json")
}

pub fn vocab_path(out: &Path) -> PathBuf {
    out.join("data/vocab.json")
}

struct Raw {
    posts: Vec<Post>,
    components: Vec<ComponentRecord>,
    relations: Vec<RelationRecord>,
}

fn read_raw(loaded: &Loaded, tok: &SurfaceTokenizer) -> Result<Raw> {
    let c = &loaded.manifest.corpus;
    let path = |p: &Option<PathBuf>| loaded.resolve(p.as_deref().expect("checked at load"));
    let matcher = QuoteMatcher::default();
    Ok(match c.kind {
        CorpusKind::Synthetic => {
            let s = generate(&c.synthetic);
            Raw { posts: records_to_posts(s.posts, &matcher)?, components: s.components, relations: s.relations }
        }
        CorpusKind::Records => Raw {
            posts: records_to_posts(read_jsonl::<PostRecord>(&path(&c.posts))?, &matcher)?,
            components: read_jsonl(&path(&c.components))?,
            relations: read_jsonl(&path(&c.relations))?,
        },
        CorpusKind::Inline => {
            let (records, standoff) = read_inline_records(read_jsonl::<InlinePostRecord>(&path(&c.posts))?)?;
            Raw { posts: records_to_posts(records, &matcher)?, components: standoff.components, relations: standoff.relations }
        }
        CorpusKind::Convokit => Raw { posts: read_convokit(&path(&c.posts))?, components: vec![], relations: vec![] },
        CorpusKind::Brat => {
            let dir = path(&c.dir);
            let mut txts: Vec<PathBuf> = std::fs::read_dir(&dir)
                .with_context(|| format!("listing {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                .collect();
            txts.sort();
            let mut raw = Raw { posts: vec![], components: vec![], relations: vec![] };
            for txt in txts {
                let ann = txt.with_extension("ann");
                let doc_id = txt.file_stem().unwrap_or_default().to_string_lossy().to_string();
                let text = std::fs::read_to_string(&txt)?;
                let doc = parse_brat(&std::fs::read_to_string(&ann).with_context(|| format!("reading {}", ann.display()))?)?;
                let (posts, comps) = chunk_document(&doc_id, &text, &doc, loaded.manifest.serialize.max_len, tok);
                raw.posts.extend(posts);
                raw.components.extend(comps);
                raw.relations.extend(doc.relations);
            }
            raw
        }
    })
}

/// Runs ingestion and writes `data/{threads,splits,vocab}.json` plus a
/// statistics table. Outputs depend only on the manifest.
pub fn prepare(loaded: &Loaded) -> Result<Prepared> {
    let m = &loaded.manifest;
    let tok = SurfaceTokenizer::new();
    let raw = read_raw(loaded, &tok)?;
    let threads = extract_threads(&raw.posts)?;
    if threads.is_empty() {
        bail!("the corpus yields no threads");
    }
    let scfg = SerializeConfig { max_len: m.serialize.max_len, user_tokens: m.serialize.user_tokens };
    let policy = loaded.global_policy()?;
    let mut labeled = Vec::with_capacity(threads.len());
    for t in &threads {
        let st = set_global_attention(&serialize_thread(t, &tok, &scfg)?, policy);
        labeled.push(build_labeled_thread(t, &st, &raw.components, &raw.relations, m.corpus.schema)?);
    }
    let mut splits = Vec::new();
    for r in &m.split.ratios {
        splits.extend(make_splits(&threads, parse_ratio(r)?, m.split.seeds)?);
    }
    let lexicon = loaded.lexicon()?;
    let vocab = Vocab::build(labeled.iter().map(|l| l.thread.tokens.as_slice()), &lexicon, m.serialize.user_tokens);
    let out = loaded.output_dir();
    let meta = |kind: &str| ArtifactMeta::new(kind, loaded, m.seed);
    artifact::write(&threads_path(&out), meta("threads"), &labeled)?;
    artifact::write(&splits_path(&out), meta("splits"), &splits)?;
    artifact::write(&vocab_path(&out), meta("vocab"), &vocab)?;
    let stats = CorpusStats::compute(&labeled, m.corpus.schema);
    artifact::write(&out.join("data/stats.json"), meta("stats"), &stats)?;
    artifact::write_text(&out.join("data/stats.txt"), &meta("stats"), &stats.render())?;
    Ok(Prepared { threads: labeled, splits, vocab })
}

pub fn load(loaded: &Loaded) -> Result<Prepared> {
    let out = loaded.output_dir();
    if !threads_path(&out).exists() {
        bail!("no prepared data under {}; run prepare-data first", out.display());
    }
    Ok(Prepared {
        threads: artifact::read_checked(&threads_path(&out), loaded)?.data,
        splits: artifact::read_checked(&splits_path(&out), loaded)?.data,
        vocab: artifact::read_checked(&vocab_path(&out), loaded)?.data,
    })
}

impl Prepared {
    /// Plan for `split` (a ratio name like `80-20`) under `seed`.
    pub fn plan(&self, split: &str, seed: u64) -> Result<&SplitPlan> {
        let name = format!("{split}-s{seed}");
        self.splits.iter().find(|p| p.seed == seed && (p.split_name == name || p.split_name == split)).with_context(|| {
            let have: Vec<&str> = self.splits.iter().map(|p| p.split_name.as_str()).collect();
            format!("no split {split} for seed {seed}; prepared: {}", have.join(", "))
        })
    }

    pub fn fold(&self, plan: &SplitPlan, fold: Fold) -> Vec<LabeledThread> {
        self.threads.iter().filter(|t| plan.fold_of(&t.thread.thread_id) == Some(fold)).cloned().collect()
    }
}
