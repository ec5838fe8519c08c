//! Lossless surface tokenizer.
//!
//! Every piece keeps the whitespace that precedes it in its surface text, so
//! concatenating the surfaces of a tokenized string gives the string back.
//! Alignment offsets are character (Unicode scalar) indices of the piece's
//! non-whitespace core.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One token produced by a [`Tokenizer`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    /// Surface text including any leading whitespace (and, for the last
    /// piece of an input, trailing whitespace).
    pub text: String,
    /// Char offset of the first non-whitespace char.
    pub start: usize,
    /// Exclusive char offset of the core.
    pub end: usize,
}

impl Piece {
    /// The piece without surrounding whitespace.
    pub fn core(&self) -> &str {
        self.text.trim()
    }
}

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<Piece>;

    /// Stable identifier of the tokenization behaviour, recorded in
    /// checkpoints.
    fn fingerprint(&self) -> String;
}

/// Splits text into runs of alphanumeric chars and single punctuation chars.
///
/// With `max_piece_chars` set, long alphanumeric runs are further cut into
/// continuation pieces of at most that many chars, which stands in for a
/// subword vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceTokenizer {
    pub max_piece_chars: Option<usize>,
}

impl SurfaceTokenizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_piece_chars(n: usize) -> Self {
        Self {
            max_piece_chars: Some(n.max(1)),
        }
    }
}

impl Tokenizer for SurfaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<Piece> {
        let chars: Vec<char> = text.chars().collect();
        let mut pieces: Vec<Piece> = Vec::new();
        let mut pending_ws = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                pending_ws.push(c);
                i += 1;
                continue;
            }
            let run_end = if c.is_alphanumeric() {
                let mut j = i;
                while j < chars.len() && chars[j].is_alphanumeric() {
                    j += 1;
                }
                j
            } else {
                i + 1
            };
            let step = match self.max_piece_chars {
                Some(n) if c.is_alphanumeric() => n,
                _ => run_end - i,
            };
            let mut s = i;
            while s < run_end {
                let e = (s + step).min(run_end);
                let mut surface = std::mem::take(&mut pending_ws);
                surface.extend(&chars[s..e]);
                pieces.push(Piece {
                    text: surface,
                    start: s,
                    end: e,
                });
                s = e;
            }
            i = run_end;
        }
        if !pending_ws.is_empty() {
            match pieces.last_mut() {
                Some(last) => last.text.push_str(&pending_ws),
                None => pieces.push(Piece {
                    text: pending_ws,
                    start: chars.len(),
                    end: chars.len(),
                }),
            }
        }
        pieces
    }

    fn fingerprint(&self) -> String {
        let desc = format!("surface-v1;max_piece_chars={:?}", self.max_piece_chars);
        hex::encode(Sha256::digest(desc.as_bytes()))
    }
}

/// Lowercased core used for vocabulary lookup and marker matching.
pub fn normalize(surface: &str) -> String {
    surface.trim().to_lowercase()
}

/// Whether `next` continues the word that `prev` belongs to (no whitespace
/// between them and both touch on alphanumeric chars).
pub fn continues_word(prev: &str, next: &str) -> bool {
    let next_first = match next.chars().next() {
        Some(c) => c,
        None => return false,
    };
    if next_first.is_whitespace() || !next_first.is_alphanumeric() {
        return false;
    }
    matches!(prev.chars().last(), Some(c) if c.is_alphanumeric())
}
