use super::{LabelError, Schema};
use serde::{Deserialize, Serialize};
use std::fmt;

/// BIO tag; the payload indexes [`Schema::component_types`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    O,
    B(usize),
    I(usize),
}

impl Tag {
    /// Label index used by the CRF: O = 0, B-x = 1 + 2x, I-x = 2 + 2x.
    pub fn index(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B(x) => 1 + 2 * x,
            Tag::I(x) => 2 + 2 * x,
        }
    }

    pub fn from_index(i: usize) -> Tag {
        match i {
            0 => Tag::O,
            i if i % 2 == 1 => Tag::B((i - 1) / 2),
            i => Tag::I((i - 2) / 2),
        }
    }

    pub fn ctype(self) -> Option<usize> {
        match self {
            Tag::O => None,
            Tag::B(x) | Tag::I(x) => Some(x),
        }
    }

    pub fn name(self, schema: Schema) -> String {
        let types = schema.component_types();
        match self {
            Tag::O => "O".into(),
            Tag::B(x) => format!("B-{}", types[x]),
            Tag::I(x) => format!("I-{}", types[x]),
        }
    }

    pub fn short_name(self, schema: Schema) -> String {
        let types = schema.short_names();
        match self {
            Tag::O => "O".into(),
            Tag::B(x) => format!("B-{}", types[x]),
            Tag::I(x) => format!("I-{}", types[x]),
        }
    }

    pub fn parse(s: &str, schema: Schema) -> Result<Tag, LabelError> {
        let s = s.trim();
        if s == "O" {
            return Ok(Tag::O);
        }
        match s.split_once('-') {
            Some(("B", t)) => Ok(Tag::B(schema.type_index(t)?)),
            Some(("I", t)) => Ok(Tag::I(schema.type_index(t)?)),
            _ => Err(LabelError::Format(format!("cannot parse BIO tag {s:?}"))),
        }
    }

    /// Whether `next` may follow `self` in a well-formed sequence.
    pub fn allows(self, next: Tag) -> bool {
        match next {
            Tag::I(x) => matches!(self, Tag::B(y) | Tag::I(y) if y == x),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BioSequence(pub Vec<Tag>);

impl BioSequence {
    pub fn all_o(len: usize) -> Self {
        Self(vec![Tag::O; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        let mut prev = Tag::O;
        for &t in &self.0 {
            if !prev.allows(t) {
                return false;
            }
            prev = t;
        }
        true
    }

    /// Promotes every `I-x` that does not continue an `x` span to `B-x`.
    pub fn repair(&self) -> Self {
        let mut out = self.0.clone();
        let mut prev = Tag::O;
        for t in out.iter_mut() {
            if let Tag::I(x) = *t {
                if !prev.allows(*t) {
                    *t = Tag::B(x);
                }
            }
            prev = *t;
        }
        Self(out)
    }

    /// `(start, end, ctype)` spans of the repaired sequence.
    pub fn spans(&self) -> Vec<(usize, usize, usize)> {
        let fixed = self.repair();
        let mut out = Vec::new();
        let mut open: Option<(usize, usize)> = None;
        for (i, t) in fixed.0.iter().enumerate() {
            match *t {
                Tag::I(_) => {}
                Tag::B(x) => {
                    if let Some((s, y)) = open.take() {
                        out.push((s, i, y));
                    }
                    open = Some((i, x));
                }
                Tag::O => {
                    if let Some((s, y)) = open.take() {
                        out.push((s, i, y));
                    }
                }
            }
        }
        if let Some((s, y)) = open {
            out.push((s, fixed.len(), y));
        }
        out
    }

    /// Projects non-overlapping spans onto a sequence of length `len`.
    pub fn from_spans(len: usize, spans: &[(usize, usize, usize)]) -> Self {
        let mut tags = vec![Tag::O; len];
        for &(s, e, x) in spans {
            for (k, t) in tags[s..e.min(len)].iter_mut().enumerate() {
                *t = if k == 0 { Tag::B(x) } else { Tag::I(x) };
            }
        }
        Self(tags)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|t| t.index()).collect()
    }

    pub fn from_indices(idx: &[usize]) -> Self {
        Self(idx.iter().map(|&i| Tag::from_index(i)).collect())
    }

    pub fn display(&self, schema: Schema) -> String {
        self.0.iter().map(|t| t.name(schema)).collect::<Vec<_>>().join(" ")
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(x) => write!(f, "B-{x}"),
            Tag::I(x) => write!(f, "I-{x}"),
        }
    }
}
