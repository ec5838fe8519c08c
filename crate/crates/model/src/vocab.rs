use argmine_core::corpus::{user_token, ENDQ, MASK, STARTQ, URL};
use argmine_core::markers::MarkerLexicon;
use argmine_core::tokenize::normalize;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
/// The word joining user and component in the relation prompt.
pub const SAID: &str = "said";

/// Token inventory of the toy backbone. Special tokens are kept verbatim;
/// other tokens are keyed by their trimmed, lowercased core.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn specials(user_tokens: usize) -> Vec<String> {
        let mut s: Vec<String> = [PAD, UNK, MASK, STARTQ, ENDQ, URL].iter().map(|t| t.to_string()).collect();
        s.extend((0..user_tokens).map(user_token));
        s
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }

    /// Specials, the prompt word, every lexicon word, then corpus tokens by
    /// descending frequency (ties alphabetical).
    pub fn build<'a>(
        corpus: impl IntoIterator<Item = &'a [String]>,
        lexicon: &MarkerLexicon,
        user_tokens: usize,
    ) -> Self {
        let mut tokens = Self::specials(user_tokens);
        tokens.push(SAID.into());
        for (_, phrases) in lexicon.categories() {
            for p in phrases {
                tokens.extend(p.split_whitespace().map(String::from));
            }
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for seq in corpus {
            for t in seq {
                *counts.entry(Self::key(t)).or_default() += 1;
            }
        }
        let mut by_freq: Vec<_> = counts.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        tokens.extend(by_freq.into_iter().map(|(t, _)| t));
        let mut seen = std::collections::HashSet::new();
        tokens.retain(|t| seen.insert(t.clone()));
        Self::from_tokens(tokens)
    }

    /// Lookup key of a serialized token.
    pub fn key(token: &str) -> String {
        if token.starts_with('[') && token.ends_with(']') && token.len() > 2 {
            return token.to_string();
        }
        let k = normalize(token);
        if k.is_empty() {
            UNK.into()
        } else {
            k
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        let unk = self.index[UNK];
        self.index.get(&Self::key(token)).copied().unwrap_or(unk)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(&Self::key(token))
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_and_unknowns() {
        let corpus = vec![vec!["[USER-0]".to_string(), " Taxes".into(), " taxes".into(), " rent".into()]];
        let v = Vocab::build(corpus.iter().map(|s| s.as_slice()), &MarkerLexicon::default(), 4);
        assert_eq!(v.id(" TAXES"), v.id("taxes"));
        assert_eq!(v.token(v.id("[USER-3]")), "[USER-3]");
        assert_eq!(v.id("zebra"), v.id(UNK));
        assert!(v.contains("think") && v.contains(SAID));
        let w: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(w.fingerprint(), v.fingerprint());
        assert_eq!(w.id("rent"), v.id("rent"));
    }
}
