//! Discussion corpora: posts, root-to-leaf threads, serialization into a
//! single token stream, and submission-grouped dataset splits.

mod detect;
mod extract;
pub mod io;
mod serialize;
mod split;

pub use detect::{detect_quotes, detect_urls, QuoteMatcher};
pub use extract::extract_threads;
pub use serialize::{
    parse_user_token, serialize_comment, serialize_thread, user_token, Alignment, SerializeConfig, SerializedThread,
    SpecialFlag, ENDQ, MASK, STARTQ, URL,
};
pub use split::{make_splits, parse_ratio, ratio_name, Fold, SplitPlan};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("post {post_id}: parent {parent_id} is not in the corpus")]
    OrphanPost { post_id: String, parent_id: String },
    #[error("reply cycle detected through post {post_id}")]
    Cycle { post_id: String },
    #[error("duplicate post id {0}")]
    DuplicatePost(String),
    #[error("post {post_id}: {reason}")]
    InvalidPost { post_id: String, reason: String },
    #[error("thread {thread_id} has {authors} authors but only {capacity} user tokens are configured")]
    UserCapacity {
        thread_id: String,
        authors: usize,
        capacity: usize,
    },
    #[error("split error: {0}")]
    Split(String),
    #[error("line {line}: {source}")]
    Record {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// A submission or a comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub author_id: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    pub body: String,
    /// Char ranges of `body` quoted from the parent post.
    #[serde(default)]
    pub quote_ranges: Vec<(usize, usize)>,
    /// Char ranges of `body` covering URLs.
    #[serde(default)]
    pub url_ranges: Vec<(usize, usize)>,
    pub is_submission: bool,
}

impl Post {
    pub fn char_len(&self) -> usize {
        self.body.chars().count()
    }

    /// Checks the range and submission invariants, sorting both range lists.
    pub fn validate(&mut self) -> Result<()> {
        let invalid = |reason: String| CorpusError::InvalidPost {
            post_id: self.post_id.clone(),
            reason,
        };
        if self.is_submission != self.parent_id.is_none() {
            return Err(invalid(
                "a post is a submission exactly when it has no parent".into(),
            ));
        }
        let len = self.char_len();
        for (name, ranges) in [("quote", &mut self.quote_ranges), ("url", &mut self.url_ranges)] {
            ranges.sort_unstable();
            for w in ranges.windows(2) {
                if w[1].0 < w[0].1 {
                    return Err(CorpusError::InvalidPost {
                        post_id: self.post_id.clone(),
                        reason: format!("overlapping {name} ranges {:?} and {:?}", w[0], w[1]),
                    });
                }
            }
            if let Some(&(s, e)) = ranges.iter().find(|&&(s, e)| s >= e || e > len) {
                return Err(CorpusError::InvalidPost {
                    post_id: self.post_id.clone(),
                    reason: format!("{name} range ({s}, {e}) outside body of {len} chars"),
                });
            }
        }
        for &(us, ue) in &self.url_ranges {
            for &(qs, qe) in &self.quote_ranges {
                let straddles = (us < qs && qs < ue) || (us < qe && qe < ue);
                if straddles {
                    return Err(invalid(format!(
                        "url ({us}, {ue}) straddles quote boundary ({qs}, {qe})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A root-to-leaf path through a discussion tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thread {
    pub thread_id: String,
    pub posts: Vec<Post>,
    /// Author id to thread-local user index, assigned by first appearance.
    pub user_index: BTreeMap<String, usize>,
    pub submission_id: String,
}

impl Thread {
    /// Builds a thread from a chain of posts, assigning user indices.
    pub fn from_posts(thread_id: impl Into<String>, posts: Vec<Post>) -> Self {
        let mut user_index = BTreeMap::new();
        for p in &posts {
            let next = user_index.len();
            user_index.entry(p.author_id.clone()).or_insert(next);
        }
        let submission_id = posts.first().map(|p| p.post_id.clone()).unwrap_or_default();
        Self {
            thread_id: thread_id.into(),
            posts,
            user_index,
            submission_id,
        }
    }

    pub fn user_of(&self, post: usize) -> usize {
        self.user_index[&self.posts[post].author_id]
    }

    pub fn num_users(&self) -> usize {
        self.user_index.len()
    }

    pub fn post_index(&self, post_id: &str) -> Option<usize> {
        self.posts.iter().position(|p| p.post_id == post_id)
    }
}
