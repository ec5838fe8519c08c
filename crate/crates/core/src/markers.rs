//! Discourse-marker lexicon, marker matching over token sequences, and
//! masked-LM batch construction (selective marker masking or uniform random
//! masking).

use crate::corpus::{SerializedThread, SpecialFlag, MASK};
use crate::tokenize::{continues_word, normalize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum MarkerError {
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
    #[error("phrase {phrase:?} listed under both {first} and {second}")]
    DuplicatePhrase {
        phrase: String,
        first: Category,
        second: Category,
    },
    #[error("cannot mask an empty token sequence")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Opinion,
    Causation,
    Rebuttal,
    Factual,
    Assumption,
    Summary,
    Misc,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Opinion,
        Category::Causation,
        Category::Rebuttal,
        Category::Factual,
        Category::Assumption,
        Category::Summary,
        Category::Misc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Opinion => "Opinion",
            Category::Causation => "Causation",
            Category::Rebuttal => "Rebuttal",
            Category::Factual => "Factual",
            Category::Assumption => "Assumption",
            Category::Summary => "Summary",
            Category::Misc => "Misc",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().trim_end_matches('.').to_ascii_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.name().to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown marker category {s:?}"))
    }
}

/// The shipped lexicon in file form.
pub const DEFAULT_LEXICON: &str = "\
[Opinion]
i agree
i disagree
i think
in my opinion
imo
imho

[Causation]
because
since
as
therefore
if
so
according to
hence
thus
consequently

[Rebuttal]
in contrast
yet
though
in spite of
but
regardless of
however
on the contrary

[Factual]
moreover
in addition
further to this
in fact
also
firstly
secondly
lastly

[Assumption]
in the event of
as long as
so long as
provided that
assuming that
given that

[Summary]
tldr

[Misc]
why
where
what
how
when
while
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerLexicon {
    categories: BTreeMap<Category, Vec<String>>,
    disabled: BTreeSet<Category>,
    index: HashMap<Vec<String>, Category>,
    longest: usize,
}

impl Default for MarkerLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("built-in lexicon is well formed")
    }
}

impl MarkerLexicon {
    /// Parses `[Category]` sections with one phrase per line. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, MarkerError> {
        let mut categories: BTreeMap<Category, Vec<String>> = BTreeMap::new();
        let mut current = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let cat = name
                    .parse()
                    .map_err(|reason| MarkerError::Lexicon { line: i + 1, reason })?;
                categories.entry(cat).or_default();
                current = Some(cat);
                continue;
            }
            let cat = current.ok_or_else(|| MarkerError::Lexicon {
                line: i + 1,
                reason: "phrase before any [Category] header".into(),
            })?;
            let phrase = line.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
            categories.entry(cat).or_default().push(phrase);
        }
        Self::from_categories(categories)
    }

    pub fn from_categories(categories: BTreeMap<Category, Vec<String>>) -> Result<Self, MarkerError> {
        let mut index = HashMap::new();
        let mut longest = 0;
        for (&cat, phrases) in &categories {
            for p in phrases {
                let words: Vec<String> = p.split_whitespace().map(str::to_lowercase).collect();
                if words.is_empty() {
                    return Err(MarkerError::Lexicon {
                        line: 0,
                        reason: format!("empty phrase under {cat}"),
                    });
                }
                longest = longest.max(words.len());
                if let Some(first) = index.insert(words, cat) {
                    return Err(MarkerError::DuplicatePhrase {
                        phrase: p.clone(),
                        first,
                        second: cat,
                    });
                }
            }
        }
        Ok(Self {
            categories,
            disabled: BTreeSet::new(),
            index,
            longest,
        })
    }

    pub fn phrases(&self, cat: Category) -> &[String] {
        self.categories.get(&cat).map_or(&[], Vec::as_slice)
    }

    pub fn categories(&self) -> impl Iterator<Item = (Category, &[String])> {
        self.categories.iter().map(|(c, p)| (*c, p.as_slice()))
    }

    /// Number of words in the longest phrase.
    pub fn longest_phrase(&self) -> usize {
        self.longest
    }

    pub fn set_enabled(&mut self, cat: Category, enabled: bool) {
        if enabled {
            self.disabled.remove(&cat);
        } else {
            self.disabled.insert(cat);
        }
    }

    pub fn is_enabled(&self, cat: Category) -> bool {
        !self.disabled.contains(&cat)
    }

    pub fn lookup(&self, words: &[String]) -> Option<Category> {
        self.index.get(words).copied().filter(|c| self.is_enabled(*c))
    }

    /// Canonical file rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (cat, phrases) in &self.categories {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{cat}]\n"));
            for p in phrases {
                out.push_str(p);
                out.push('\n');
            }
        }
        out
    }

    /// SHA-256 of the canonical rendering plus the disabled set.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        for c in &self.disabled {
            h.update(format!("-{c}").as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerMatch {
    pub token_start: usize,
    pub token_end: usize,
    pub phrase: String,
    pub category: Category,
}

struct Word {
    text: String,
    start: usize,
    end: usize,
    barrier: bool,
}

fn words(tokens: &[String], flags: &[SpecialFlag]) -> Vec<Word> {
    let mut out: Vec<Word> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        let special = flags.get(i).is_some_and(|f| f.is_special());
        if special {
            out.push(Word { text: String::new(), start: i, end: i + 1, barrier: true });
            continue;
        }
        let core = normalize(tok);
        if core.is_empty() {
            // Whitespace-only piece: no content, but it still separates words.
            continue;
        }
        match out.last_mut() {
            Some(w) if !w.barrier && w.end == i && continues_word(&tokens[i - 1], tok) => {
                w.text.push_str(&core);
                w.end = i + 1;
            }
            _ => out.push(Word { text: core, start: i, end: i + 1, barrier: false }),
        }
    }
    out
}

/// Longest-match-first, case-insensitive lexicon matching over whole words.
/// Matches never overlap and never include special tokens.
pub fn find_markers(lexicon: &MarkerLexicon, tokens: &[String], flags: &[SpecialFlag]) -> Vec<MarkerMatch> {
    let words = words(tokens, flags);
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let mut matched = None;
        let max = lexicon.longest_phrase().min(words.len() - i);
        for n in (1..=max).rev() {
            let span = &words[i..i + n];
            if span.iter().any(|w| w.barrier) {
                continue;
            }
            let key: Vec<String> = span.iter().map(|w| w.text.clone()).collect();
            if let Some(cat) = lexicon.lookup(&key) {
                matched = Some((n, key.join(" "), cat));
                break;
            }
        }
        match matched {
            Some((n, phrase, category)) => {
                out.push(MarkerMatch {
                    token_start: words[i].start,
                    token_end: words[i + n - 1].end,
                    phrase,
                    category,
                });
                i += n;
            }
            None => i += 1,
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskPolicy {
    Selective,
    Random15,
}

impl FromStr for MaskPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "selective" => Ok(MaskPolicy::Selective),
            "random15" => Ok(MaskPolicy::Random15),
            _ => Err(format!("unknown mask policy {s:?} (expected selective|random15)")),
        }
    }
}

pub const RANDOM_MASK_RATE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedBatch {
    pub input_tokens: Vec<String>,
    /// Masked position to original token.
    pub target_tokens: BTreeMap<usize, String>,
    pub policy: MaskPolicy,
}

impl MaskedBatch {
    /// Puts the original tokens back.
    pub fn unmask(&self) -> Vec<String> {
        let mut out = self.input_tokens.clone();
        for (&i, t) in &self.target_tokens {
            out[i] = t.clone();
        }
        out
    }

    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.target_tokens.keys().copied()
    }
}

/// Masks every marker occurrence (selective) or each non-special token
/// independently with probability 0.15 (random15). Special tokens are never
/// masked. `seed` only affects the random policy.
pub fn build_masked_batch(
    lexicon: &MarkerLexicon,
    tokens: &[String],
    flags: &[SpecialFlag],
    policy: MaskPolicy,
    seed: u64,
) -> Result<MaskedBatch, MarkerError> {
    if tokens.is_empty() {
        return Err(MarkerError::EmptyInput);
    }
    let mut target_tokens = BTreeMap::new();
    match policy {
        MaskPolicy::Selective => {
            for m in find_markers(lexicon, tokens, flags) {
                for i in m.token_start..m.token_end {
                    target_tokens.insert(i, tokens[i].clone());
                }
            }
        }
        MaskPolicy::Random15 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (i, tok) in tokens.iter().enumerate() {
                // One draw per position keeps the stream aligned with indices.
                let draw: f64 = rng.random();
                let special = flags.get(i).is_some_and(|f| f.is_special());
                if !special && draw < RANDOM_MASK_RATE {
                    target_tokens.insert(i, tok.clone());
                }
            }
        }
    }
    let mut input_tokens = tokens.to_vec();
    for &i in target_tokens.keys() {
        input_tokens[i] = MASK.to_string();
    }
    Ok(MaskedBatch {
        input_tokens,
        target_tokens,
        policy,
    })
}

/// Convenience wrapper over a serialized thread.
pub fn mask_thread(
    lexicon: &MarkerLexicon,
    st: &SerializedThread,
    policy: MaskPolicy,
    seed: u64,
) -> Result<MaskedBatch, MarkerError> {
    build_masked_batch(lexicon, &st.tokens, &st.special_flags, policy, seed)
}
