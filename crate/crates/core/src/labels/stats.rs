use super::relations::piece_id;
use super::{
    align_annotations, split_discontiguous, AlignWarning, BioSequence, ComponentSpan, LabelError,
    RawComponent, RelationEdge, Schema, Tag,
};
use crate::corpus::{SerializedThread, Thread};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Standoff component annotation; several records with one id form a
/// discontiguous component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub component_id: String,
    pub post_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub ctype: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub source_id: String,
    pub target_id: String,
    pub fine_type: String,
}

/// A serialized thread with its aligned supervision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledThread {
    pub schema: Schema,
    pub thread: SerializedThread,
    pub components: Vec<ComponentSpan>,
    pub bio: BioSequence,
    pub relations: Vec<RelationEdge>,
    #[serde(default)]
    pub warnings: Vec<AlignWarning>,
}

impl LabeledThread {
    pub fn component(&self, id: &str) -> Option<&ComponentSpan> {
        self.components.iter().find(|c| c.component_id == id)
    }
}

/// Aligns the annotations that fall inside `thread` onto its serialization.
///
/// Discontiguous components are split into pieces linked by the schema's
/// link relation; other relations attach to the first piece of a split
/// component. Relations with an endpoint outside the thread, or dropped by
/// truncation, are left out.
pub fn build_labeled_thread(
    thread: &Thread,
    st: &SerializedThread,
    components: &[ComponentRecord],
    relations: &[RelationRecord],
    schema: Schema,
) -> Result<LabeledThread, LabelError> {
    let mut raw: Vec<RawComponent> = Vec::new();
    let mut by_id: HashMap<&str, usize> = HashMap::new();
    for rec in components {
        let Some(post) = thread.post_index(&rec.post_id) else { continue };
        let ctype = schema.type_index(&rec.ctype)?;
        let len = thread.posts[post].char_len();
        if rec.char_end > len {
            return Err(LabelError::OutOfRange {
                component_id: rec.component_id.clone(),
                post,
                start: rec.char_start,
                end: rec.char_end,
            });
        }
        let k = *by_id.entry(rec.component_id.as_str()).or_insert_with(|| {
            raw.push(RawComponent {
                component_id: rec.component_id.clone(),
                ctype,
                ranges: vec![],
            });
            raw.len() - 1
        });
        if raw[k].ctype != ctype {
            return Err(LabelError::Format(format!(
                "component {} has pieces of different types",
                rec.component_id
            )));
        }
        raw[k].ranges.push((post, rec.char_start, rec.char_end));
    }

    let mut char_spans = Vec::new();
    let mut edges = Vec::new();
    let mut first_piece: HashMap<String, String> = HashMap::new();
    for r in &mut raw {
        r.ranges.sort_unstable();
        if r.ranges.len() > 1 {
            first_piece.insert(r.component_id.clone(), piece_id(&r.component_id, 0));
        }
        let (spans, links) = split_discontiguous(r, schema);
        char_spans.extend(spans);
        edges.extend(links);
    }

    let aligned = align_annotations(st, &char_spans, schema)?;
    for rec in relations {
        if !by_id.contains_key(rec.source_id.as_str()) || !by_id.contains_key(rec.target_id.as_str()) {
            continue;
        }
        let resolve = |id: &str| first_piece.get(id).cloned().unwrap_or_else(|| id.to_string());
        edges.push(RelationEdge::new(
            &resolve(&rec.source_id),
            &resolve(&rec.target_id),
            &rec.fine_type,
            schema,
        )?);
    }
    let kept: std::collections::HashSet<&str> =
        aligned.spans.iter().map(|s| s.component_id.as_str()).collect();
    edges.retain(|e| {
        kept.contains(e.source_component_id.as_str()) && kept.contains(e.target_component_id.as_str())
    });

    Ok(LabeledThread {
        schema,
        thread: st.clone(),
        components: aligned.spans,
        bio: aligned.bio,
        relations: edges,
        warnings: aligned.warnings,
    })
}

/// Token-tag and relation-class counts, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub schema: Schema,
    pub threads: usize,
    pub components: usize,
    pub tag_counts: Vec<(String, usize)>,
    pub relation_counts: Vec<(String, usize)>,
}

impl CorpusStats {
    /// Counts tags over every token (special tokens included, as O) and
    /// relations by coarse class.
    pub fn compute(threads: &[LabeledThread], schema: Schema) -> Self {
        let mut tags = vec![0usize; schema.label_count()];
        let mut rels: BTreeMap<&str, usize> = BTreeMap::new();
        let mut components = 0;
        for t in threads {
            for tag in &t.bio.0 {
                tags[tag.index()] += 1;
            }
            components += t.components.len();
            for e in &t.relations {
                *rels.entry(e.coarse_class.as_str()).or_default() += 1;
            }
        }
        Self {
            schema,
            threads: threads.len(),
            components,
            tag_counts: tags
                .iter()
                .enumerate()
                .map(|(i, &n)| (Tag::from_index(i).short_name(schema), n))
                .collect(),
            relation_counts: schema
                .relation_classes()
                .iter()
                .map(|c| (c.to_string(), rels.get(c).copied().unwrap_or(0)))
                .collect(),
        }
    }

    pub fn tag(&self, name: &str) -> Option<usize> {
        self.tag_counts.iter().find(|(n, _)| n == name).map(|(_, c)| *c)
    }

    pub fn relation(&self, name: &str) -> Option<usize> {
        self.relation_counts.iter().find(|(n, _)| n == name).map(|(_, c)| *c)
    }

    /// Two-part table: tokens per tag, then relations per class.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<20} | {:>8}\n", "Component Type", "# Tokens"));
        out.push_str(&format!("{}\n", "-".repeat(31)));
        for (name, n) in &self.tag_counts {
            out.push_str(&format!("{name:<20} | {n:>8}\n"));
        }
        out.push_str(&format!("{:<20} | {:>8}\n", "Relation Types", "# Rel"));
        out.push_str(&format!("{}\n", "-".repeat(31)));
        for (name, n) in &self.relation_counts {
            out.push_str(&format!("{name:<20} | {n:>8}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{serialize_thread, Post, SerializeConfig};
    use crate::tokenize::SurfaceTokenizer;

    fn fixture() -> (Thread, SerializedThread) {
        let posts = vec![
            Post {
                post_id: "s".into(),
                author_id: "a".into(),
                parent_id: None,
                body: "taxes are bad because they hurt".into(),
                quote_ranges: vec![],
                url_ranges: vec![],
                is_submission: true,
            },
            Post {
                post_id: "c".into(),
                author_id: "b".into(),
                parent_id: Some("s".into()),
                body: "no they help people".into(),
                quote_ranges: vec![],
                url_ranges: vec![],
                is_submission: false,
            },
        ];
        let t = Thread::from_posts("c", posts);
        let st = serialize_thread(&t, &SurfaceTokenizer::new(), &SerializeConfig::default()).unwrap();
        (t, st)
    }

    fn comp(id: &str, post: &str, s: usize, e: usize, ty: &str) -> ComponentRecord {
        ComponentRecord {
            component_id: id.into(),
            post_id: post.into(),
            char_start: s,
            char_end: e,
            ctype: ty.into(),
        }
    }

    #[test]
    fn discontiguous_component_and_relations() {
        let (t, st) = fixture();
        let comps = vec![
            comp("c1", "s", 0, 13, "claim"),
            comp("p1", "s", 22, 31, "premise"),
            comp("c2", "c", 3, 7, "claim"),
            comp("c2", "c", 8, 19, "claim"),
        ];
        let rels = vec![
            RelationRecord { source_id: "p1".into(), target_id: "c1".into(), fine_type: "support".into() },
            RelationRecord { source_id: "c2".into(), target_id: "c1".into(), fine_type: "rebuttal".into() },
            RelationRecord { source_id: "zz".into(), target_id: "c1".into(), fine_type: "support".into() },
        ];
        let lt = build_labeled_thread(&t, &st, &comps, &rels, Schema::Cmv).unwrap();
        assert_eq!(lt.components.len(), 4);
        let classes: Vec<_> = lt.relations.iter().map(|e| e.coarse_class.as_str()).collect();
        assert_eq!(classes, ["support", "support", "direct attack"]);
        assert_eq!(lt.relations[0].fine_type, "continue");
        assert_eq!(lt.relations[2].source_component_id, "c2.0");

        let stats = CorpusStats::compute(&[lt], Schema::Cmv);
        assert_eq!(stats.tag("B-C"), Some(3));
        assert_eq!(stats.tag("B-P"), Some(1));
        assert_eq!(stats.tag("I-P"), Some(1));
        assert_eq!(stats.relation("support"), Some(2));
        assert_eq!(stats.relation("partial"), Some(0));
        let total: usize = stats.tag_counts.iter().map(|(_, n)| n).sum();
        assert_eq!(total, st.len());
        assert!(stats.render().contains("direct attack"));
    }

    #[test]
    fn unknown_relation_is_error() {
        let (t, st) = fixture();
        let comps = vec![comp("a", "s", 0, 5, "claim"), comp("b", "c", 0, 2, "premise")];
        let rels = vec![RelationRecord { source_id: "b".into(), target_id: "a".into(), fine_type: "meh".into() }];
        assert!(build_labeled_thread(&t, &st, &comps, &rels, Schema::Cmv).is_err());
    }
}
