//! Line-delimited record formats.
//!
//! Canonical post records, one JSON object per line:
//!
//! ```text
//! {"post_id": "c1", "parent_id": "s1", "author_id": "alice",
//!  "body": "> quoted text\nreply", "quotes": [[2, 13]], "is_submission": false}
//! ```
//!
//! `parent_id` is omitted (or null) for submissions. `quotes` holds char
//! ranges of text quoted from the parent; when absent, quotes are found by
//! matching `>`-prefixed lines against the parent body. URLs are always
//! detected from the body.

use super::{detect_urls, CorpusError, Post, QuoteMatcher, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub author_id: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quotes: Option<Vec<[usize; 2]>>,
    pub is_submission: bool,
}

/// One utterance of a ConvoKit corpus export (`utterances.jsonl`).
#[derive(Debug, Clone, Deserialize)]
pub struct ConvoKitUtterance {
    pub id: String,
    #[serde(alias = "speaker")]
    pub user: String,
    #[serde(default)]
    pub reply_to: Option<String>,
    #[serde(default)]
    pub text: String,
}

impl From<ConvoKitUtterance> for PostRecord {
    fn from(u: ConvoKitUtterance) -> Self {
        PostRecord {
            is_submission: u.reply_to.is_none(),
            post_id: u.id,
            parent_id: u.reply_to,
            author_id: u.user,
            body: u.text,
            quotes: None,
        }
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CorpusError::Record { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, item: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(item).map_err(std::io::Error::from)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| CorpusError::Record { line: 0, source })
}

/// Normalizes records into validated posts, detecting URLs and, where the
/// record carries no quote annotation, quotes.
pub fn records_to_posts(records: Vec<PostRecord>, matcher: &QuoteMatcher) -> Result<Vec<Post>> {
    let bodies: HashMap<&str, &str> = records
        .iter()
        .map(|r| (r.post_id.as_str(), r.body.as_str()))
        .collect();
    let mut posts = Vec::with_capacity(records.len());
    for r in &records {
        let quote_ranges = match &r.quotes {
            Some(q) => q.iter().map(|&[s, e]| (s, e)).collect(),
            None => r
                .parent_id
                .as_deref()
                .and_then(|p| bodies.get(p))
                .map(|parent| matcher.find(&r.body, parent))
                .unwrap_or_default(),
        };
        let mut post = Post {
            post_id: r.post_id.clone(),
            author_id: r.author_id.clone(),
            parent_id: r.parent_id.clone(),
            body: r.body.clone(),
            quote_ranges,
            url_ranges: detect_urls(&r.body),
            is_submission: r.is_submission,
        };
        // A URL overlapping a quote boundary is kept out of the quote.
        let urls = post.url_ranges.clone();
        post.quote_ranges.retain(|&(qs, qe)| {
            !urls
                .iter()
                .any(|&(us, ue)| (us < qs && qs < ue) || (us < qe && qe < ue))
        });
        post.validate()?;
        posts.push(post);
    }
    Ok(posts)
}

pub fn read_posts(path: &Path) -> Result<Vec<Post>> {
    records_to_posts(read_jsonl(path)?, &QuoteMatcher::default())
}

pub fn read_convokit(path: &Path) -> Result<Vec<Post>> {
    let utts: Vec<ConvoKitUtterance> = read_jsonl(path)?;
    records_to_posts(utts.into_iter().map(Into::into).collect(), &QuoteMatcher::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_roundtrip_and_quote_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("posts.jsonl");
        let recs = vec![
            PostRecord {
                post_id: "s".into(),
                parent_id: None,
                author_id: "a".into(),
                body: "The tax should be abolished entirely. See https://x.org".into(),
                quotes: None,
                is_submission: true,
            },
            PostRecord {
                post_id: "c".into(),
                parent_id: Some("s".into()),
                author_id: "b".into(),
                body: "> The tax should be abolished\nNo.".into(),
                quotes: None,
                is_submission: false,
            },
        ];
        write_jsonl(&path, &recs).unwrap();
        let posts = read_posts(&path).unwrap();
        assert_eq!(posts[0].url_ranges, [(42, 55)]);
        assert_eq!(posts[1].quote_ranges, [(2, 29)]);
    }

    #[test]
    fn convokit_utterances() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("utterances.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"id":"s","user":"a","root":"s","reply_to":null,"text":"hi","meta":{}}"#,
                "\n",
                r#"{"id":"c","speaker":"b","root":"s","reply_to":"s","text":"yo","meta":{}}"#,
                "\n"
            ),
        )
        .unwrap();
        let posts = read_convokit(&path).unwrap();
        assert!(posts[0].is_submission);
        assert_eq!(posts[1].parent_id.as_deref(), Some("s"));
        assert_eq!(posts[1].author_id, "b");
    }

    #[test]
    fn bad_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"post_id\":\"x\"}\n").unwrap();
        match read_jsonl::<PostRecord>(&path) {
            Err(CorpusError::Record { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
