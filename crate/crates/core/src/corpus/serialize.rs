use super::{CorpusError, Result, Thread};
use crate::tokenize::Tokenizer;
use serde::{Deserialize, Serialize};

pub const STARTQ: &str = "[STARTQ]";
pub const ENDQ: &str = "[ENDQ]";
pub const URL: &str = "[URL]";
pub const MASK: &str = "[MASK]";

pub fn user_token(i: usize) -> String {
    format!("[USER-{i}]")
}

/// Parses `[USER-i]` back to `i`.
pub fn parse_user_token(tok: &str) -> Option<usize> {
    tok.strip_prefix("[USER-")?.strip_suffix(']')?.parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SpecialFlag {
    User,
    StartQ,
    EndQ,
    Url,
    None,
}

impl SpecialFlag {
    pub fn is_special(self) -> bool {
        self != SpecialFlag::None
    }
}

/// Char span of a token inside one post body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub post: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializeConfig {
    pub max_len: usize,
    /// Size of the `[USER-i]` vocabulary.
    pub user_tokens: usize,
}

impl Default for SerializeConfig {
    fn default() -> Self {
        Self {
            max_len: 4096,
            user_tokens: 12,
        }
    }
}

/// A thread flattened into one token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedThread {
    pub thread_id: String,
    pub tokens: Vec<String>,
    #[serde(rename = "alignment")]
    pub char_alignment: Vec<Option<Alignment>>,
    #[serde(rename = "flags")]
    pub special_flags: Vec<SpecialFlag>,
    pub global_attention: Vec<bool>,
    /// Token range `[start, end)` of every post that survived truncation.
    pub post_spans: Vec<(usize, usize)>,
    /// Thread user index of each surviving post's author.
    pub post_users: Vec<usize>,
    pub post_ids: Vec<String>,
    pub truncated: bool,
}

impl SerializedThread {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the post containing token `i`.
    pub fn post_of(&self, i: usize) -> Option<usize> {
        self.post_spans.iter().position(|&(s, e)| s <= i && i < e)
    }

    /// Concatenated surface of all non-special tokens.
    pub fn strip_special(&self) -> String {
        self.tokens
            .iter()
            .zip(&self.special_flags)
            .filter(|(_, f)| !f.is_special())
            .map(|(t, _)| t.as_str())
            .collect()
    }

    /// Detokenized body of one post; URLs come back as the `[URL]` sentinel
    /// when `url_sentinel` is set and are dropped otherwise.
    pub fn post_text(&self, post: usize, url_sentinel: bool) -> String {
        let (s, e) = self.post_spans[post];
        let mut out = String::new();
        for i in s..e {
            match self.special_flags[i] {
                SpecialFlag::None => out.push_str(&self.tokens[i]),
                SpecialFlag::Url if url_sentinel => out.push_str(URL),
                _ => {}
            }
        }
        out
    }

    /// Structural invariants: parallel lengths, a leading user token per
    /// post, and balanced quote delimiters (a trailing open quote is allowed
    /// only when the sequence was truncated).
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        if self.char_alignment.len() != n
            || self.special_flags.len() != n
            || self.global_attention.len() != n
        {
            return Err("per-token vectors differ in length".into());
        }
        for (p, &(s, e)) in self.post_spans.iter().enumerate() {
            if s >= e || e > n {
                return Err(format!("post {p} has empty or out-of-range span"));
            }
            if self.special_flags[s] != SpecialFlag::User
                || parse_user_token(&self.tokens[s]) != Some(self.post_users[p])
            {
                return Err(format!("post {p} does not start with its user token"));
            }
            let mut open = false;
            for i in s..e {
                match self.special_flags[i] {
                    SpecialFlag::StartQ if open => return Err(format!("nested quote at {i}")),
                    SpecialFlag::StartQ => open = true,
                    SpecialFlag::EndQ if !open => return Err(format!("unmatched ENDQ at {i}")),
                    SpecialFlag::EndQ => open = false,
                    SpecialFlag::User if i != s => return Err(format!("user token inside post at {i}")),
                    _ => {}
                }
            }
            let last_post = p + 1 == self.post_spans.len();
            if open && !(self.truncated && last_post) {
                return Err(format!("post {p} leaves a quote open"));
            }
        }
        Ok(())
    }
}

struct Builder {
    tokens: Vec<String>,
    align: Vec<Option<Alignment>>,
    flags: Vec<SpecialFlag>,
}

impl Builder {
    fn special(&mut self, tok: String, flag: SpecialFlag, align: Option<Alignment>) {
        self.tokens.push(tok);
        self.flags.push(flag);
        self.align.push(align);
    }

    fn text(&mut self, tok: &dyn Tokenizer, chars: &[char], from: usize, to: usize, post: usize) {
        if from >= to {
            return;
        }
        let seg: String = chars[from..to].iter().collect();
        for p in tok.tokenize(&seg) {
            self.tokens.push(p.text);
            self.flags.push(SpecialFlag::None);
            self.align.push(Some(Alignment {
                post,
                start: from + p.start,
                end: from + p.end,
            }));
        }
    }
}

fn emit_post(b: &mut Builder, tok: &dyn Tokenizer, post_idx: usize, user: usize, post: &super::Post) {
    b.special(user_token(user), SpecialFlag::User, None);
    let chars: Vec<char> = post.body.chars().collect();
    let mut quotes = post.quote_ranges.clone();
    let mut urls = post.url_ranges.clone();
    quotes.sort_unstable();
    urls.sort_unstable();
    let (mut qi, mut ui) = (0, 0);
    let mut open_quote: Option<usize> = None;
    let mut cursor = 0;
    loop {
        // Priority at equal positions: close quote, open quote, url.
        let close = open_quote;
        let open = if open_quote.is_none() { quotes.get(qi).map(|q| q.0) } else { None };
        let url = urls.get(ui).map(|u| u.0);
        let next = [close, open, url].into_iter().flatten().min();
        let Some(at) = next else {
            b.text(tok, &chars, cursor, chars.len(), post_idx);
            break;
        };
        let at = at.max(cursor);
        b.text(tok, &chars, cursor, at, post_idx);
        cursor = at;
        if close == Some(at) {
            b.special(ENDQ.into(), SpecialFlag::EndQ, None);
            open_quote = None;
        } else if open == Some(at) {
            b.special(STARTQ.into(), SpecialFlag::StartQ, None);
            open_quote = Some(quotes[qi].1);
            qi += 1;
        } else {
            let (s, e) = urls[ui];
            b.special(
                URL.into(),
                SpecialFlag::Url,
                Some(Alignment { post: post_idx, start: s, end: e }),
            );
            cursor = e;
            ui += 1;
        }
    }
}

fn finish(
    thread_id: String,
    b: Builder,
    starts: Vec<usize>,
    users: Vec<usize>,
    ids: Vec<String>,
    max_len: usize,
) -> SerializedThread {
    let full = b.tokens.len();
    let n = full.min(max_len);
    let mut post_spans = Vec::new();
    let mut post_users = Vec::new();
    let mut post_ids = Vec::new();
    for (k, &s) in starts.iter().enumerate() {
        if s >= n {
            break;
        }
        let e = starts.get(k + 1).copied().unwrap_or(full).min(n);
        post_spans.push((s, e));
        post_users.push(users[k]);
        post_ids.push(ids[k].clone());
    }
    let mut tokens = b.tokens;
    let mut flags = b.flags;
    let mut align = b.align;
    tokens.truncate(n);
    flags.truncate(n);
    align.truncate(n);
    let global_attention = flags.iter().map(|&f| f == SpecialFlag::User).collect();
    SerializedThread {
        thread_id,
        tokens,
        char_alignment: align,
        special_flags: flags,
        global_attention,
        post_spans,
        post_users,
        post_ids,
        truncated: full > n,
    }
}

/// Flattens a thread into `[USER-i] body [USER-j] body ...`, delimiting
/// quotes with `[STARTQ]`/`[ENDQ]` and replacing URLs with `[URL]`. The tail
/// beyond `max_len` tokens is dropped.
pub fn serialize_thread(
    t: &Thread,
    tok: &dyn Tokenizer,
    cfg: &SerializeConfig,
) -> Result<SerializedThread> {
    assert!(cfg.max_len >= 1, "max_len must be positive");
    if t.num_users() > cfg.user_tokens {
        return Err(CorpusError::UserCapacity {
            thread_id: t.thread_id.clone(),
            authors: t.num_users(),
            capacity: cfg.user_tokens,
        });
    }
    let mut b = Builder { tokens: vec![], align: vec![], flags: vec![] };
    let mut starts = Vec::with_capacity(t.posts.len());
    let mut users = Vec::with_capacity(t.posts.len());
    for (i, post) in t.posts.iter().enumerate() {
        starts.push(b.tokens.len());
        users.push(t.user_of(i));
        emit_post(&mut b, tok, i, t.user_of(i), post);
        if b.tokens.len() >= cfg.max_len {
            // Later posts cannot survive truncation.
            break;
        }
    }
    let ids = t.posts.iter().map(|p| p.post_id.clone()).collect();
    Ok(finish(t.thread_id.clone(), b, starts, users, ids, cfg.max_len))
}

/// Serializes a single post as its own sequence (comment-level regime). The
/// user token keeps the author's thread-level index; alignments refer to
/// post 0 of the result.
pub fn serialize_comment(
    t: &Thread,
    post: usize,
    tok: &dyn Tokenizer,
    cfg: &SerializeConfig,
) -> Result<SerializedThread> {
    let user = t.user_of(post);
    if user >= cfg.user_tokens {
        return Err(CorpusError::UserCapacity {
            thread_id: t.thread_id.clone(),
            authors: user + 1,
            capacity: cfg.user_tokens,
        });
    }
    let mut b = Builder { tokens: vec![], align: vec![], flags: vec![] };
    emit_post(&mut b, tok, 0, user, &t.posts[post]);
    let p = &t.posts[post];
    Ok(finish(p.post_id.clone(), b, vec![0], vec![user], vec![p.post_id.clone()], cfg.max_len))
}
