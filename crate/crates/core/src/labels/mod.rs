//! Argument components, relations, BIO projection and the relabeling rules
//! applied when ingesting annotated corpora.

pub mod adapters;
mod align;
mod bio;
mod relations;
mod stats;

pub use align::{align_annotations, AlignWarning, Aligned, CharSpan};
pub use bio::{BioSequence, Tag};
pub use relations::{fine_types, group_relation, split_discontiguous, RawComponent, RelationEdge};
pub use stats::{CorpusStats, LabeledThread, build_labeled_thread, ComponentRecord, RelationRecord};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("components {a} and {b} overlap")]
    Overlap { a: String, b: String },
    #[error("unknown component type {ctype:?} for schema {schema}")]
    UnknownType { ctype: String, schema: Schema },
    #[error("unknown relation type {fine_type:?}; valid types for {schema}: {valid}")]
    UnknownRelation {
        fine_type: String,
        schema: Schema,
        valid: String,
    },
    #[error("char span ({start}, {end}) of {component_id} lies outside post {post}")]
    OutOfRange {
        component_id: String,
        post: usize,
        start: usize,
        end: usize,
    },
    #[error("{0}")]
    Format(String),
}

/// Annotation scheme of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    /// Claim/premise components with five relation groups.
    Cmv,
    /// Background claim / own claim / data with three relation types.
    DrInventor,
}

impl Schema {
    pub fn component_types(self) -> &'static [&'static str] {
        match self {
            Schema::Cmv => &["claim", "premise"],
            Schema::DrInventor => &["BC", "OC", "Data"],
        }
    }

    /// Abbreviations used in statistics tables (`B-C`, `I-P`, `B-D`, ...).
    pub fn short_names(self) -> &'static [&'static str] {
        match self {
            Schema::Cmv => &["C", "P"],
            Schema::DrInventor => &["BC", "OC", "D"],
        }
    }

    pub fn relation_classes(self) -> &'static [&'static str] {
        match self {
            Schema::Cmv => &["support", "agreement", "direct attack", "undercutter attack", "partial"],
            Schema::DrInventor => &["support", "contradicts", "semantically same"],
        }
    }

    /// Fine type used to link the pieces of a discontiguous component.
    pub fn link_type(self) -> &'static str {
        match self {
            Schema::Cmv => "continue",
            Schema::DrInventor => "parts-of-same",
        }
    }

    pub fn type_index(self, ctype: &str) -> Result<usize, LabelError> {
        let key = ctype.trim();
        self.component_types()
            .iter()
            .position(|t| t.eq_ignore_ascii_case(key))
            .or_else(|| self.short_names().iter().position(|t| t.eq_ignore_ascii_case(key)))
            .ok_or_else(|| LabelError::UnknownType {
                ctype: ctype.to_string(),
                schema: self,
            })
    }

    pub fn class_index(self, class: &str) -> Result<usize, LabelError> {
        self.relation_classes()
            .iter()
            .position(|c| *c == class)
            .ok_or_else(|| LabelError::UnknownRelation {
                fine_type: class.to_string(),
                schema: self,
                valid: self.relation_classes().join(", "),
            })
    }

    /// `1 + 2 * types`: O plus a B and I label per component type.
    pub fn label_count(self) -> usize {
        1 + 2 * self.component_types().len()
    }

    pub fn label_names(self) -> Vec<String> {
        (0..self.label_count())
            .map(|i| Tag::from_index(i).name(self))
            .collect()
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schema::Cmv => "cmv",
            Schema::DrInventor => "dr_inventor",
        })
    }
}

impl FromStr for Schema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cmv" | "cmv_modes" => Ok(Schema::Cmv),
            "dr_inventor" | "drinventor" => Ok(Schema::DrInventor),
            _ => Err(format!("unknown schema {s:?} (expected cmv|dr_inventor)")),
        }
    }
}

/// A contiguous typed token span inside one serialized thread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSpan {
    pub component_id: String,
    pub thread_id: String,
    pub token_start: usize,
    pub token_end: usize,
    /// Index into [`Schema::component_types`].
    pub ctype: usize,
}

impl ComponentSpan {
    pub fn len(&self) -> usize {
        self.token_end - self.token_start
    }

    pub fn is_empty(&self) -> bool {
        self.token_end <= self.token_start
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.token_start..self.token_end
    }
}
