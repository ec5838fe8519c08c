//! Readers that normalize released annotation formats into standoff
//! [`ComponentRecord`]s and [`RelationRecord`]s.
//!
//! * Inline-tagged posts (CMV-Modes style): component text wrapped in
//!   `<claim id=".." type="..">..</claim>` or
//!   `<premise id=".." ref=".." rel="..">..</premise>`. A `ref` attribute names
//!   the component(s) this one refers to; `rel` gives the relation type(s).
//! * brat standoff (`.ann`) as used by the Dr. Inventor release, plus greedy
//!   merging of consecutive sections up to a token budget.

use super::{ComponentRecord, LabelError, RelationRecord};
use crate::corpus::io::PostRecord;
use crate::corpus::Post;
use crate::tokenize::Tokenizer;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::OnceLock;

fn tag_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)<(/?)(claim|premise)\b([^>]*)>").unwrap())
}

fn attr_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"([A-Za-z_]+)\s*=\s*"([^"]*)""#).unwrap())
}

/// A post record whose body still carries inline component tags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InlinePostRecord {
    pub post_id: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    pub author_id: String,
    pub body: String,
    pub is_submission: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Standoff {
    pub components: Vec<ComponentRecord>,
    pub relations: Vec<RelationRecord>,
}

impl Standoff {
    pub fn extend(&mut self, other: Standoff) {
        self.components.extend(other.components);
        self.relations.extend(other.relations);
    }
}

/// Strips `<claim>`/`<premise>` tags from `body`, returning the plain text
/// and standoff annotations with char offsets into it.
pub fn parse_inline(post_id: &str, body: &str) -> Result<(String, Standoff), LabelError> {
    let mut plain = String::new();
    let mut plain_chars = 0usize;
    let mut out = Standoff::default();
    let mut open: Option<(String, usize, BTreeMap<String, String>)> = None;
    let mut last = 0;
    for cap in tag_pattern().captures_iter(body) {
        let m = cap.get(0).unwrap();
        let text = &body[last..m.start()];
        plain.push_str(text);
        plain_chars += text.chars().count();
        last = m.end();
        let closing = !cap[1].is_empty();
        let kind = cap[2].to_lowercase();
        if closing {
            let Some((okind, start, attrs)) = open.take() else {
                return Err(LabelError::Format(format!("{post_id}: stray </{kind}>")));
            };
            if okind != kind {
                return Err(LabelError::Format(format!("{post_id}: <{okind}> closed by </{kind}>")));
            }
            let id = attrs
                .get("id")
                .cloned()
                .ok_or_else(|| LabelError::Format(format!("{post_id}: <{kind}> without id")))?;
            out.components.push(ComponentRecord {
                component_id: id.clone(),
                post_id: post_id.into(),
                char_start: start,
                char_end: plain_chars,
                ctype: kind.clone(),
            });
            if let Some(refs) = attrs.get("ref") {
                let targets: Vec<&str> = refs.split([' ', ',', '_']).filter(|s| !s.is_empty()).collect();
                let rel = attrs.get("rel").map(String::as_str).unwrap_or("support");
                let rels: Vec<&str> = rel.split([',', '|']).map(str::trim).collect();
                for (k, target) in targets.iter().enumerate() {
                    let fine = if rels.len() == targets.len() { rels[k] } else { rels[0] };
                    // Repeated pieces of one component carry the same refs.
                    let dup = out
                        .relations
                        .iter()
                        .any(|r| r.source_id == id && r.target_id == *target);
                    if !dup {
                        out.relations.push(RelationRecord {
                            source_id: id.clone(),
                            target_id: target.to_string(),
                            fine_type: fine.to_string(),
                        });
                    }
                }
            }
        } else {
            if let Some((okind, ..)) = &open {
                return Err(LabelError::Format(format!("{post_id}: <{kind}> nested in <{okind}>")));
            }
            let attrs = attr_pattern()
                .captures_iter(&cap[3])
                .map(|a| (a[1].to_lowercase(), a[2].to_string()))
                .collect();
            open = Some((kind, plain_chars, attrs));
        }
    }
    if let Some((kind, ..)) = open {
        return Err(LabelError::Format(format!("{post_id}: unclosed <{kind}>")));
    }
    plain.push_str(&body[last..]);
    Ok((plain, out))
}

/// Converts inline-tagged records into plain post records plus standoff.
pub fn read_inline_records(records: Vec<InlinePostRecord>) -> Result<(Vec<PostRecord>, Standoff), LabelError> {
    let mut posts = Vec::with_capacity(records.len());
    let mut all = Standoff::default();
    for r in records {
        let (plain, ann) = parse_inline(&r.post_id, &r.body)?;
        all.extend(ann);
        posts.push(PostRecord {
            post_id: r.post_id,
            parent_id: r.parent_id,
            author_id: r.author_id,
            body: plain,
            quotes: None,
            is_submission: r.is_submission,
        });
    }
    Ok((posts, all))
}

/// One brat text-bound annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BratComponent {
    pub id: String,
    pub ctype: String,
    /// Char ranges in document coordinates.
    pub ranges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BratDocument {
    pub components: Vec<BratComponent>,
    pub relations: Vec<RelationRecord>,
}

fn brat_type(t: &str) -> String {
    match t.to_lowercase().as_str() {
        "background_claim" | "background-claim" => "BC".into(),
        "own_claim" | "own-claim" => "OC".into(),
        "data" => "Data".into(),
        _ => t.to_string(),
    }
}

/// Parses `T` (text-bound) and `R` (relation) lines of a `.ann` file.
/// In `R` lines `Arg1` is the source and `Arg2` the target.
pub fn parse_brat(ann: &str) -> Result<BratDocument, LabelError> {
    let mut doc = BratDocument::default();
    for (n, line) in ann.lines().enumerate() {
        let bad = |why: &str| LabelError::Format(format!("ann line {}: {why}", n + 1));
        let mut cols = line.split('\t');
        let Some(id) = cols.next().filter(|s| !s.is_empty()) else { continue };
        match id.chars().next() {
            Some('T') => {
                let spec = cols.next().ok_or_else(|| bad("missing type and offsets"))?;
                let (ty, offsets) = spec.split_once(' ').ok_or_else(|| bad("missing offsets"))?;
                let mut ranges = Vec::new();
                for frag in offsets.split(';') {
                    let (s, e) = frag.trim().split_once(' ').ok_or_else(|| bad("bad offset pair"))?;
                    let s: usize = s.parse().map_err(|_| bad("bad offset"))?;
                    let e: usize = e.parse().map_err(|_| bad("bad offset"))?;
                    ranges.push((s, e));
                }
                doc.components.push(BratComponent {
                    id: id.to_string(),
                    ctype: brat_type(ty),
                    ranges,
                });
            }
            Some('R') => {
                let spec = cols.next().ok_or_else(|| bad("missing relation spec"))?;
                let mut parts = spec.split_whitespace();
                let ty = parts.next().ok_or_else(|| bad("missing relation type"))?;
                let mut arg = |name: &str| -> Result<String, LabelError> {
                    parts
                        .next()
                        .and_then(|a| a.strip_prefix(name))
                        .map(String::from)
                        .ok_or_else(|| bad("missing argument"))
                };
                let source_id = arg("Arg1:")?;
                let target_id = arg("Arg2:")?;
                doc.relations.push(RelationRecord {
                    source_id,
                    target_id,
                    fine_type: ty.to_string(),
                });
            }
            _ => {}
        }
    }
    Ok(doc)
}

/// Char ranges of blank-line separated sections of `text`; separators are
/// attached to the section they follow so the ranges tile the text.
pub fn sections(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i + 1 < chars.len() {
        if chars[i] == '\n' && chars[i + 1] == '\n' {
            let mut j = i;
            while j < chars.len() && chars[j] == '\n' {
                j += 1;
            }
            out.push((start, j));
            start = j;
            i = j;
        } else {
            i += 1;
        }
    }
    if start < chars.len() {
        out.push((start, chars.len()));
    }
    out
}

/// Greedily merges consecutive sections while the merged text stays within
/// `budget` tokens (one token is reserved for the user token). Each chunk
/// becomes a single-post submission `"{doc_id}#{k}"`; component ranges are
/// rebased into chunk coordinates and split where they cross a chunk edge.
pub fn chunk_document(
    doc_id: &str,
    text: &str,
    doc: &BratDocument,
    budget: usize,
    tok: &dyn Tokenizer,
) -> (Vec<Post>, Vec<ComponentRecord>) {
    let chars: Vec<char> = text.chars().collect();
    let slice = |s: usize, e: usize| chars[s..e].iter().collect::<String>();
    let limit = budget.saturating_sub(1).max(1);
    let mut chunks: Vec<(usize, usize)> = Vec::new();
    for (s, e) in sections(text) {
        let grown = chunks.last().map(|&(cs, _)| tok.tokenize(&slice(cs, e)).len());
        match (chunks.last_mut(), grown) {
            (Some(last), Some(n)) if n <= limit => last.1 = e,
            _ => chunks.push((s, e)),
        }
    }
    let posts = chunks
        .iter()
        .enumerate()
        .map(|(k, &(s, e))| Post {
            post_id: format!("{doc_id}#{k}"),
            author_id: format!("{doc_id}:authors"),
            parent_id: None,
            body: slice(s, e),
            quote_ranges: vec![],
            url_ranges: vec![],
            is_submission: true,
        })
        .collect();
    let mut records = Vec::new();
    for c in &doc.components {
        for &(rs, re) in &c.ranges {
            for (k, &(cs, ce)) in chunks.iter().enumerate() {
                let (s, e) = (rs.max(cs), re.min(ce));
                if s < e {
                    records.push(ComponentRecord {
                        component_id: c.id.clone(),
                        post_id: format!("{doc_id}#{k}"),
                        char_start: s - cs,
                        char_end: e - cs,
                        ctype: c.ctype.clone(),
                    });
                }
            }
        }
    }
    (posts, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::SurfaceTokenizer;

    #[test]
    fn inline_tags_stripped_with_offsets() {
        let body = r#"I think <claim id="1" type="interpretation">taxes are bad</claim> because <premise id="2" ref="1" rel="support">they hurt</premise>."#;
        let (plain, ann) = parse_inline("p", body).unwrap();
        assert_eq!(plain, "I think taxes are bad because they hurt.");
        let c = &ann.components;
        assert_eq!((c[0].char_start, c[0].char_end, c[0].ctype.as_str()), (8, 21, "claim"));
        assert_eq!((c[1].char_start, c[1].char_end, c[1].ctype.as_str()), (30, 39, "premise"));
        assert_eq!(
            ann.relations,
            [RelationRecord { source_id: "2".into(), target_id: "1".into(), fine_type: "support".into() }]
        );
    }

    #[test]
    fn repeated_id_is_discontiguous_and_refs_dedup() {
        let body = r#"<claim id="a" ref="x" rel="partial_attack">one</claim> two <claim id="a" ref="x" rel="partial_attack">three</claim>"#;
        let (_, ann) = parse_inline("p", body).unwrap();
        assert_eq!(ann.components.len(), 2);
        assert_eq!(ann.relations.len(), 1);
    }

    #[test]
    fn malformed_inline_rejected() {
        assert!(parse_inline("p", "<claim id=\"1\">x").is_err());
        assert!(parse_inline("p", "x</premise>").is_err());
        assert!(parse_inline("p", "<claim id=\"1\"><premise id=\"2\">x</premise></claim>").is_err());
    }

    #[test]
    fn brat_lines() {
        let ann = "T1\tbackground_claim 0 5\tfirst\nT2\town_claim 10 14;20 25\tsecond third\nR1\tsupports Arg1:T2 Arg2:T1\t\nR2\tparts_of_same Arg1:T2 Arg2:T1\n#1\tAnnotatorNotes T1\tnote\n";
        let doc = parse_brat(ann).unwrap();
        assert_eq!(doc.components[0].ctype, "BC");
        assert_eq!(doc.components[1].ranges, [(10, 14), (20, 25)]);
        assert_eq!(doc.relations[0].source_id, "T2");
        assert_eq!(doc.relations[1].fine_type, "parts_of_same");
    }

    #[test]
    fn sections_tile_text() {
        let text = "a b\n\nc d\n\n\ne";
        let s = sections(text);
        assert_eq!(s, [(0, 5), (5, 11), (11, 12)]);
    }

    #[test]
    fn chunks_respect_budget_and_split_crossing_ranges() {
        let text = "aa bb\n\ncc dd\n\nee ff";
        let doc = BratDocument {
            components: vec![BratComponent { id: "T1".into(), ctype: "OC".into(), ranges: vec![(3, 9)] }],
            relations: vec![],
        };
        let tok = SurfaceTokenizer::new();
        let (posts, recs) = chunk_document("d", text, &doc, 5, &tok);
        assert_eq!(posts.len(), 2);
        assert_eq!(posts[0].body, "aa bb\n\ncc dd\n\n");
        assert_eq!(recs.len(), 1);
        let (posts, recs) = chunk_document("d", text, &doc, 3, &tok);
        assert_eq!(posts.len(), 3);
        assert_eq!(recs.len(), 2);
        assert_eq!((recs[1].post_id.as_str(), recs[1].char_start, recs[1].char_end), ("d#1", 0, 2));
        let joined: String = posts.iter().map(|p| p.body.as_str()).collect();
        assert_eq!(joined, text);
    }
}
