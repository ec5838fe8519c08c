use super::{BioSequence, ComponentSpan, LabelError, Schema};
use crate::corpus::{SerializedThread, SpecialFlag};
use serde::{Deserialize, Serialize};

/// A char-level component annotation inside one post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpan {
    pub component_id: String,
    pub post: usize,
    pub start: usize,
    pub end: usize,
    pub ctype: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignWarning {
    /// Span boundaries fell inside a token and were widened to it.
    Snapped { component_id: String },
    /// The covering token range contains a quote delimiter.
    CrossesQuote { component_id: String },
    /// Span covers no token (whitespace only).
    Empty { component_id: String },
    /// Span extends past the truncation point and was dropped.
    Truncated { component_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aligned {
    pub spans: Vec<ComponentSpan>,
    pub bio: BioSequence,
    pub warnings: Vec<AlignWarning>,
}

impl Aligned {
    pub fn dropped(&self) -> impl Iterator<Item = &str> {
        self.warnings.iter().filter_map(|w| match w {
            AlignWarning::Empty { component_id } | AlignWarning::Truncated { component_id } => {
                Some(component_id.as_str())
            }
            _ => None,
        })
    }
}

/// Maps char spans to the minimal covering token spans (never shrinking) and
/// projects them to BIO tags. Spans cut by truncation are dropped; spans that
/// overlap after snapping are an error.
pub fn align_annotations(
    st: &SerializedThread,
    char_spans: &[CharSpan],
    schema: Schema,
) -> Result<Aligned, LabelError> {
    let n_types = schema.component_types().len();
    let mut spans = Vec::new();
    let mut warnings = Vec::new();
    for cs in char_spans {
        if cs.ctype >= n_types {
            return Err(LabelError::UnknownType {
                ctype: cs.ctype.to_string(),
                schema,
            });
        }
        if cs.start >= cs.end {
            return Err(LabelError::OutOfRange {
                component_id: cs.component_id.clone(),
                post: cs.post,
                start: cs.start,
                end: cs.end,
            });
        }
        let id = || cs.component_id.clone();
        let Some(&(ps, pe)) = st.post_spans.get(cs.post) else {
            warnings.push(AlignWarning::Truncated { component_id: id() });
            continue;
        };
        let mut first = None;
        let mut last = None;
        let mut covered_end = 0;
        for i in ps..pe {
            if let Some(a) = st.char_alignment[i] {
                covered_end = covered_end.max(a.end);
                if a.start < a.end && a.start < cs.end && a.end > cs.start {
                    first.get_or_insert((i, a.start));
                    last = Some((i, a.end));
                }
            }
        }
        let cut_post = st.truncated && cs.post + 1 == st.post_spans.len();
        if cut_post && cs.end > covered_end {
            warnings.push(AlignWarning::Truncated { component_id: id() });
            continue;
        }
        let (Some((ts, cstart)), Some((te, cend))) = (first, last) else {
            warnings.push(AlignWarning::Empty { component_id: id() });
            continue;
        };
        if cstart != cs.start || cend != cs.end {
            warnings.push(AlignWarning::Snapped { component_id: id() });
        }
        if st.special_flags[ts..=te]
            .iter()
            .any(|f| matches!(f, SpecialFlag::StartQ | SpecialFlag::EndQ))
        {
            warnings.push(AlignWarning::CrossesQuote { component_id: id() });
        }
        spans.push(ComponentSpan {
            component_id: id(),
            thread_id: st.thread_id.clone(),
            token_start: ts,
            token_end: te + 1,
            ctype: cs.ctype,
        });
    }
    spans.sort_by_key(|s| (s.token_start, s.token_end));
    for w in spans.windows(2) {
        if w[1].token_start < w[0].token_end {
            return Err(LabelError::Overlap {
                a: w[0].component_id.clone(),
                b: w[1].component_id.clone(),
            });
        }
    }
    let triples: Vec<_> = spans.iter().map(|s| (s.token_start, s.token_end, s.ctype)).collect();
    let bio = BioSequence::from_spans(st.len(), &triples);
    Ok(Aligned { spans, bio, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{serialize_thread, Post, SerializeConfig, Thread};
    use crate::labels::Tag;
    use crate::tokenize::SurfaceTokenizer;

    fn thread(bodies: &[&str]) -> SerializedThread {
        let posts = bodies
            .iter()
            .enumerate()
            .map(|(i, b)| Post {
                post_id: format!("p{i}"),
                author_id: format!("u{}", i % 2),
                parent_id: (i > 0).then(|| format!("p{}", i - 1)),
                body: b.to_string(),
                quote_ranges: vec![],
                url_ranges: vec![],
                is_submission: i == 0,
            })
            .collect();
        serialize_thread(&Thread::from_posts("t", posts), &SurfaceTokenizer::new(), &SerializeConfig::default())
            .unwrap()
    }

    fn span(id: &str, post: usize, start: usize, end: usize, ctype: usize) -> CharSpan {
        CharSpan { component_id: id.into(), post, start, end, ctype }
    }

    #[test]
    fn claim_over_tokens_one_to_four() {
        // [USER-0] a b c d e: the claim "a b c d" sits on tokens 1..=4.
        let st = thread(&["a b c d e"]);
        let al = align_annotations(&st, &[span("c", 0, 0, 7, 0)], Schema::Cmv).unwrap();
        assert_eq!(al.bio.0, [Tag::O, Tag::B(0), Tag::I(0), Tag::I(0), Tag::I(0), Tag::O]);
        assert!(al.warnings.is_empty());
    }

    #[test]
    fn empty_annotation_set_is_all_o() {
        let st = thread(&["one two three"]);
        let al = align_annotations(&st, &[], Schema::Cmv).unwrap();
        assert_eq!(al.bio, BioSequence::all_o(st.len()));
    }

    #[test]
    fn adjacent_same_type_spans_get_two_b_tags() {
        let st = thread(&["x", "aa bb cc dd"]);
        let al = align_annotations(&st, &[span("a", 1, 0, 5, 1), span("b", 1, 6, 11, 1)], Schema::Cmv).unwrap();
        let (s, _) = st.post_spans[1];
        assert_eq!(&al.bio.0[s + 1..], [Tag::B(1), Tag::I(1), Tag::B(1), Tag::I(1)]);
    }

    #[test]
    fn partial_token_is_widened() {
        let st = thread(&["hello world"]);
        let al = align_annotations(&st, &[span("c", 0, 2, 8, 0)], Schema::Cmv).unwrap();
        assert_eq!((al.spans[0].token_start, al.spans[0].token_end), (1, 3));
        assert_eq!(al.warnings, [AlignWarning::Snapped { component_id: "c".into() }]);
    }

    #[test]
    fn overlap_is_error() {
        let st = thread(&["aa bb cc"]);
        let r = align_annotations(&st, &[span("a", 0, 0, 5, 0), span("b", 0, 3, 8, 1)], Schema::Cmv);
        assert!(matches!(r, Err(LabelError::Overlap { .. })));
    }

    #[test]
    fn truncated_spans_dropped() {
        let posts = vec![Post {
            post_id: "p".into(),
            author_id: "u".into(),
            parent_id: None,
            body: "aa bb cc dd".into(),
            quote_ranges: vec![],
            url_ranges: vec![],
            is_submission: true,
        }];
        let cfg = SerializeConfig { max_len: 3, user_tokens: 12 };
        let st = serialize_thread(&Thread::from_posts("t", posts), &SurfaceTokenizer::new(), &cfg).unwrap();
        let al = align_annotations(&st, &[span("keep", 0, 0, 2, 0), span("cut", 0, 3, 8, 1)], Schema::Cmv).unwrap();
        assert_eq!(al.spans.len(), 1);
        assert_eq!(al.dropped().collect::<Vec<_>>(), ["cut"]);
    }
}
