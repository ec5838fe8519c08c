use super::{CharSpan, LabelError, Schema};
use serde::{Deserialize, Serialize};

/// Directed relation: `source` refers to `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub source_component_id: String,
    pub target_component_id: String,
    pub fine_type: String,
    pub coarse_class: String,
}

impl RelationEdge {
    pub fn new(source: &str, target: &str, fine_type: &str, schema: Schema) -> Result<Self, LabelError> {
        Ok(Self {
            source_component_id: source.into(),
            target_component_id: target.into(),
            fine_type: fine_type.into(),
            coarse_class: group_relation(fine_type, schema)?.into(),
        })
    }
}

const CMV_GROUPS: &[(&str, &[&str])] = &[
    ("support", &["continue", "support"]),
    ("agreement", &["agreement", "understand"]),
    ("direct attack", &["attack", "rebuttal attack", "rebuttal", "disagreement"]),
    ("undercutter attack", &["undercutter", "undercutter attack"]),
    ("partial", &["partial agreement", "partial attack", "partial disagreement"]),
];

const DR_INVENTOR_GROUPS: &[(&str, &[&str])] = &[
    ("support", &["support", "supports"]),
    ("contradicts", &["contradicts"]),
    ("semantically same", &["semantically same", "parts of same"]),
];

fn groups(schema: Schema) -> &'static [(&'static str, &'static [&'static str])] {
    match schema {
        Schema::Cmv => CMV_GROUPS,
        Schema::DrInventor => DR_INVENTOR_GROUPS,
    }
}

/// Lowercase, with `_` and `-` read as spaces and whitespace collapsed.
fn normalize_type(s: &str) -> String {
    s.to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Every fine type the schema accepts.
pub fn fine_types(schema: Schema) -> Vec<&'static str> {
    groups(schema).iter().flat_map(|(_, f)| f.iter().copied()).collect()
}

/// Maps an annotated relation type onto its coarse class.
pub fn group_relation(fine_type: &str, schema: Schema) -> Result<&'static str, LabelError> {
    let key = normalize_type(fine_type);
    groups(schema)
        .iter()
        .find(|(_, members)| members.contains(&key.as_str()))
        .map(|(class, _)| *class)
        .ok_or_else(|| LabelError::UnknownRelation {
            fine_type: fine_type.into(),
            schema,
            valid: fine_types(schema).join(", "),
        })
}

/// A component as annotated, possibly made of several char ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComponent {
    pub component_id: String,
    pub ctype: usize,
    /// `(post, start_char, end_char)`, sorted and non-overlapping.
    pub ranges: Vec<(usize, usize, usize)>,
}

/// Id of the `k`-th piece of a split component.
pub fn piece_id(component_id: &str, k: usize) -> String {
    format!("{component_id}.{k}")
}

/// One component per contiguous range; consecutive pieces are linked by an
/// edge whose source is the later piece. A single-range component keeps its
/// id and gets no edges.
pub fn split_discontiguous(raw: &RawComponent, schema: Schema) -> (Vec<CharSpan>, Vec<RelationEdge>) {
    let single = raw.ranges.len() == 1;
    let spans: Vec<CharSpan> = raw
        .ranges
        .iter()
        .enumerate()
        .map(|(k, &(post, start, end))| CharSpan {
            component_id: if single { raw.component_id.clone() } else { piece_id(&raw.component_id, k) },
            post,
            start,
            end,
            ctype: raw.ctype,
        })
        .collect();
    let link = schema.link_type();
    let edges = spans
        .windows(2)
        .map(|w| {
            RelationEdge::new(&w[1].component_id, &w[0].component_id, link, schema)
                .expect("link type is part of every schema")
        })
        .collect();
    (spans, edges)
}
