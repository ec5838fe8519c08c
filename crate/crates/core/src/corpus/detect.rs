use regex::Regex;
use std::sync::OnceLock;

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?|ftp)://[^\s<>\[\]]+").unwrap())
}

/// Char ranges of scheme-prefixed URLs, with trailing sentence punctuation
/// left out of the match.
pub fn detect_urls(body: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for m in url_pattern().find_iter(body) {
        let trimmed = m
            .as_str()
            .trim_end_matches(['.', ',', ';', ':', '!', '?', ')', '\'', '"']);
        if trimmed.contains("://") && !trimmed.ends_with("://") {
            let start = body[..m.start()].chars().count();
            out.push((start, start + trimmed.chars().count()));
        }
    }
    out
}

/// Finds quoted text in a reply by matching `>`-prefixed lines against the
/// parent body.
#[derive(Debug, Clone)]
pub struct QuoteMatcher {
    /// Shortest common substring accepted as a quote.
    pub min_chars: usize,
}

impl Default for QuoteMatcher {
    fn default() -> Self {
        Self { min_chars: 8 }
    }
}

impl QuoteMatcher {
    /// For each quote-marked line, the longest substring shared with the
    /// parent (earliest on ties) becomes a quote range.
    pub fn find(&self, body: &str, parent: &str) -> Vec<(usize, usize)> {
        let chars: Vec<char> = body.chars().collect();
        let parent: Vec<char> = parent.chars().collect();
        let mut out = Vec::new();
        let mut line_start = 0;
        while line_start <= chars.len() {
            let line_end = chars[line_start..]
                .iter()
                .position(|&c| c == '\n')
                .map_or(chars.len(), |p| line_start + p);
            let mut i = line_start;
            while i < line_end && chars[i].is_whitespace() {
                i += 1;
            }
            if i < line_end && chars[i] == '>' {
                i += 1;
                while i < line_end && chars[i].is_whitespace() {
                    i += 1;
                }
                let (off, len) = longest_common_substring(&chars[i..line_end], &parent);
                if len >= self.min_chars {
                    let s = i + off;
                    let mut e = s + len;
                    while e > s && chars[e - 1].is_whitespace() {
                        e -= 1;
                    }
                    if e > s {
                        out.push((s, e));
                    }
                }
            }
            line_start = line_end + 1;
        }
        out
    }
}

pub fn detect_quotes(body: &str, parent: &str) -> Vec<(usize, usize)> {
    QuoteMatcher::default().find(body, parent)
}

/// Returns (offset in `a`, length) of the longest substring of `a` that also
/// occurs in `b`.
fn longest_common_substring(a: &[char], b: &[char]) -> (usize, usize) {
    let mut best = (0, 0);
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            cur[j] = if a[i - 1] == b[j - 1] { prev[j - 1] + 1 } else { 0 };
            if cur[j] > best.1 {
                best = (i - cur[j], cur[j]);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}
