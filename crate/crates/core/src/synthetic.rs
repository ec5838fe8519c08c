//! Marker-governed synthetic discussions for end-to-end runs without the
//! licensed corpora.
//!
//! Every sentence ends with `.`. A claim is the text after `i think`, a
//! premise the text after `because`, up to the full stop. Claims and
//! premises draw from disjoint word pools, so each marker is predictable
//! from the words that follow it. Replies relate their first component to a
//! component of the parent post, and the relation class is announced by
//! the first word of the referring component.

use crate::corpus::io::{records_to_posts, PostRecord};
use crate::corpus::{extract_threads, serialize_thread, CorpusError, QuoteMatcher, SerializeConfig};
use crate::labels::{build_labeled_thread, ComponentRecord, LabelError, LabeledThread, RelationRecord, Schema};
use crate::tokenize::Tokenizer;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const CLAIM_WORDS: &[&str] = &[
    "taxes", "rent", "cars", "schools", "parks", "prices", "wages", "roads", "trains", "farms", "unions", "banks",
];
pub const PREMISE_WORDS: &[&str] = &[
    "studies", "data", "records", "surveys", "reports", "figures", "charts", "audits", "polls", "ledgers", "trials",
    "census",
];
pub const FILLER_WORDS: &[&str] = &[
    "hello", "friend", "today", "weather", "coffee", "music", "morning", "thanks", "cheers", "anyway", "lunch", "folks",
];

/// `(coarse class, marker word, annotated fine type)`.
pub const RELATION_CUES: [(&str, &str, &str); 5] = [
    ("support", "therefore", "support"),
    ("agreement", "moreover", "agreement"),
    ("direct attack", "but", "rebuttal"),
    ("undercutter attack", "however", "undercutter"),
    ("partial", "yet", "partial attack"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub submissions: usize,
    /// Direct replies to each submission; each gets one nested reply too
    /// when `nested` is set.
    pub replies: usize,
    pub nested: bool,
    /// Sentences per post, inclusive range.
    pub sentences: (usize, usize),
    /// Words inside a component, excluding the relation cue.
    pub span_words: (usize, usize),
    pub quote_rate: f64,
    pub url_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            submissions: 20,
            replies: 2,
            nested: true,
            sentences: (2, 4),
            span_words: (2, 4),
            quote_rate: 0.2,
            url_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub posts: Vec<PostRecord>,
    pub components: Vec<ComponentRecord>,
    pub relations: Vec<RelationRecord>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Filler,
    Claim,
    Premise,
}

struct Builder {
    rng: ChaCha8Rng,
    cfg: SynthConfig,
    out: SynthCorpus,
    /// Shuffled relation classes still to hand out, for balance.
    classes: Vec<usize>,
}

struct Written {
    body: String,
    components: Vec<String>,
    fillers: Vec<(usize, usize)>,
    quotes: Option<Vec<[usize; 2]>>,
}

impl Builder {
    fn next_class(&mut self) -> usize {
        if self.classes.is_empty() {
            self.classes = (0..RELATION_CUES.len()).collect();
            self.classes.shuffle(&mut self.rng);
        }
        self.classes.pop().unwrap()
    }

    fn words(&mut self, pool: &[&str], range: (usize, usize)) -> Vec<String> {
        let n = self.rng.random_range(range.0..=range.1);
        (0..n).map(|_| pool.choose(&mut self.rng).unwrap().to_string()).collect()
    }

    /// Writes a post body. `cue` prefixes the first component with a
    /// relation marker and forces the post to contain a component.
    fn write_post(&mut self, post_id: &str, quote: Option<&str>, cue: Option<&str>) -> Written {
        let mut body = String::new();
        let mut quotes = None;
        if let Some(q) = quote {
            body.push_str("> ");
            let s = body.len();
            body.push_str(q);
            quotes = Some(vec![[s, body.len()]]);
            body.push('\n');
        }
        let n = self.rng.random_range(self.cfg.sentences.0..=self.cfg.sentences.1);
        let mut kinds: Vec<Kind> = (0..n)
            .map(|_| *[Kind::Filler, Kind::Claim, Kind::Premise].choose(&mut self.rng).unwrap())
            .collect();
        if cue.is_some() && !kinds.iter().any(|k| *k != Kind::Filler) {
            kinds[0] = Kind::Claim;
        }
        let mut components = Vec::new();
        let mut fillers = Vec::new();
        let mut cue = cue;
        for kind in kinds {
            if !body.is_empty() && !body.ends_with('\n') {
                body.push(' ');
            }
            let sentence_start = body.len();
            match kind {
                Kind::Filler => {
                    body.push_str(&self.words(FILLER_WORDS, (2, 5)).join(" "));
                    if self.rng.random_bool(self.cfg.url_rate) {
                        body.push_str(" https://example.org/");
                        body.push_str(FILLER_WORDS.choose(&mut self.rng).unwrap());
                    }
                    fillers.push((sentence_start, body.len()));
                }
                Kind::Claim | Kind::Premise => {
                    let (lead, pool, ctype) = match kind {
                        Kind::Claim => ("i think ", CLAIM_WORDS, "claim"),
                        _ => ("because ", PREMISE_WORDS, "premise"),
                    };
                    body.push_str(lead);
                    let start = body.len();
                    if let Some(c) = cue.take() {
                        body.push_str(c);
                        body.push(' ');
                    }
                    body.push_str(&self.words(pool, self.cfg.span_words).join(" "));
                    let id = format!("{post_id}:{}", components.len());
                    self.out.components.push(ComponentRecord {
                        component_id: id.clone(),
                        post_id: post_id.into(),
                        char_start: start,
                        char_end: body.len(),
                        ctype: ctype.into(),
                    });
                    components.push(id);
                }
            }
            body.push('.');
        }
        Written { body, components, fillers, quotes }
    }

    fn post(&mut self, post_id: String, parent: Option<&(String, Written)>, author: String) -> (String, Written) {
        let quote = match parent {
            Some((_, w)) if !w.fillers.is_empty() && self.rng.random_bool(self.cfg.quote_rate) => {
                let &(s, e) = w.fillers.choose(&mut self.rng).unwrap();
                Some(w.body[s..e].to_string())
            }
            _ => None,
        };
        let class = parent.filter(|(_, w)| !w.components.is_empty()).map(|_| self.next_class());
        let cue = class.map(|c| RELATION_CUES[c].1);
        let w = self.write_post(&post_id, quote.as_deref(), cue);
        if let (Some(c), Some((_, pw))) = (class, parent) {
            let target = pw.components.choose(&mut self.rng).unwrap().clone();
            self.out.relations.push(RelationRecord {
                source_id: w.components[0].clone(),
                target_id: target,
                fine_type: RELATION_CUES[c].2.into(),
            });
        }
        self.out.posts.push(PostRecord {
            post_id: post_id.clone(),
            parent_id: parent.map(|(id, _)| id.clone()),
            author_id: author,
            body: w.body.clone(),
            quotes: w.quotes.clone(),
            is_submission: parent.is_none(),
        });
        (post_id, w)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

impl SynthCorpus {
    /// Runs the generated forest through extraction, serialization and
    /// alignment under the CMV schema.
    pub fn labeled_threads(&self, tok: &dyn Tokenizer, cfg: &SerializeConfig) -> Result<Vec<LabeledThread>, SynthError> {
        let posts = records_to_posts(self.posts.clone(), &QuoteMatcher::default())?;
        let mut out = Vec::new();
        for t in extract_threads(&posts)? {
            let st = serialize_thread(&t, tok, cfg)?;
            out.push(build_labeled_thread(&t, &st, &self.components, &self.relations, Schema::Cmv)?);
        }
        Ok(out)
    }
}

/// Generates a forest of `submissions` trees; thread count is
/// `submissions * replies` (each reply branch is one leaf path).
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        cfg: cfg.clone(),
        out: SynthCorpus::default(),
        classes: vec![],
    };
    for s in 0..cfg.submissions {
        let root = b.post(format!("s{s}"), None, format!("u{s}.0"));
        for r in 0..cfg.replies {
            let reply = b.post(format!("s{s}.r{r}"), Some(&root), format!("u{s}.{}", r + 1));
            if cfg.nested {
                let author = if b.rng.random_bool(0.5) { format!("u{s}.0") } else { format!("u{s}.x{r}") };
                b.post(format!("s{s}.r{r}.n"), Some(&reply), author);
            }
        }
    }
    b.out
}
