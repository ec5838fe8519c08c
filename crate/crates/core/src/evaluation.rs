//! Exact-span and relation metrics, plus the distance-binned relation error
//! profile and the near/far marker breakdown for component identification.

use crate::corpus::SerializedThread;
use crate::labels::{BioSequence, ComponentSpan, LabeledThread, RelationEdge, Schema, Tag};
use crate::markers::MarkerMatch;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("gold has {gold} tags but prediction has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("unknown class {class:?} for schema {schema}")]
    UnknownClass { class: String, schema: Schema },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanMatchReport {
    pub per_class: Vec<(String, Prf)>,
    pub micro: Prf,
    pub token_accuracy: f64,
}

impl SpanMatchReport {
    pub fn class(&self, name: &str) -> Option<&Prf> {
        self.per_class.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<12} {:>6} {:>6} {:>6}\n", "class", "P", "R", "F1");
        for (name, p) in &self.per_class {
            let _ = writeln!(s, "{name:<12} {:>6.3} {:>6.3} {:>6.3}", p.precision, p.recall, p.f1);
        }
        let _ = writeln!(s, "{:<12} {:>6.3} {:>6.3} {:>6.3}", "micro", self.micro.precision, self.micro.recall, self.micro.f1);
        let _ = writeln!(s, "token accuracy {:.3}", self.token_accuracy);
        s
    }
}

/// Which tokens enter token accuracy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenAccuracy {
    #[default]
    AllTokens,
    /// Only tokens whose gold tag is not O.
    Argumentative,
}

/// Pooled counts across any number of sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanCounts {
    schema: Schema,
    mode: TokenAccuracy,
    tp: Vec<usize>,
    fp: Vec<usize>,
    fn_: Vec<usize>,
    tokens_right: usize,
    tokens_total: usize,
}

impl SpanCounts {
    pub fn new(schema: Schema, mode: TokenAccuracy) -> Self {
        let n = schema.component_types().len();
        Self { schema, mode, tp: vec![0; n], fp: vec![0; n], fn_: vec![0; n], tokens_right: 0, tokens_total: 0 }
    }

    /// Adds one sequence pair. Both sides are repaired first, so a span
    /// opening with `I-x` counts like one opening with `B-x`.
    pub fn add(&mut self, gold: &BioSequence, pred: &BioSequence) -> Result<(), EvalError> {
        self.add_restricted(gold, pred, None)
    }

    /// Like [`add`](Self::add), but `keep` decides which gold and predicted
    /// spans take part, and token accuracy covers only kept gold spans.
    pub fn add_restricted(
        &mut self,
        gold: &BioSequence,
        pred: &BioSequence,
        keep: Option<&dyn Fn(usize, usize) -> bool>,
    ) -> Result<(), EvalError> {
        if gold.len() != pred.len() {
            return Err(EvalError::LengthMismatch { gold: gold.len(), pred: pred.len() });
        }
        let ok = |s: usize, e: usize| keep.is_none_or(|f| f(s, e));
        let g: BTreeSet<_> = gold.spans().into_iter().filter(|&(s, e, _)| ok(s, e)).collect();
        let p: BTreeSet<_> = pred.spans().into_iter().filter(|&(s, e, _)| ok(s, e)).collect();
        for &(_, _, x) in g.intersection(&p) {
            self.tp[x] += 1;
        }
        for &(_, _, x) in p.difference(&g) {
            self.fp[x] += 1;
        }
        for &(_, _, x) in g.difference(&p) {
            self.fn_[x] += 1;
        }
        let (gr, pr) = (gold.repair(), pred.repair());
        let positions: Vec<usize> = match keep {
            Some(_) => g.iter().flat_map(|&(s, e, _)| s..e).collect(),
            None => (0..gr.len()).collect(),
        };
        for i in positions {
            if self.mode == TokenAccuracy::Argumentative && gr.0[i] == Tag::O {
                continue;
            }
            self.tokens_total += 1;
            self.tokens_right += usize::from(gr.0[i] == pr.0[i]);
        }
        Ok(())
    }

    pub fn report(&self) -> SpanMatchReport {
        let types = self.schema.component_types();
        let per_class = (0..types.len())
            .map(|x| (types[x].to_string(), Prf::from_counts(self.tp[x], self.fp[x], self.fn_[x])))
            .collect();
        let micro = Prf::from_counts(self.tp.iter().sum(), self.fp.iter().sum(), self.fn_.iter().sum());
        let token_accuracy =
            if self.tokens_total == 0 { 0.0 } else { self.tokens_right as f64 / self.tokens_total as f64 };
        SpanMatchReport { per_class, micro, token_accuracy }
    }
}

/// Exact-match span scores for one sequence pair, token accuracy over all
/// tokens.
pub fn exact_span_scores(gold: &BioSequence, pred: &BioSequence, schema: Schema) -> Result<SpanMatchReport, EvalError> {
    let mut c = SpanCounts::new(schema, TokenAccuracy::AllTokens);
    c.add(gold, pred)?;
    Ok(c.report())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub per_class: Vec<(String, Prf)>,
    pub micro: Prf,
}

impl RelationReport {
    pub fn class(&self, name: &str) -> Option<&Prf> {
        self.per_class.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<20} {:>6} {:>6} {:>6}\n", "relation", "P", "R", "F1");
        for (name, p) in &self.per_class {
            let _ = writeln!(s, "{name:<20} {:>6.3} {:>6.3} {:>6.3}", p.precision, p.recall, p.f1);
        }
        let _ = writeln!(s, "{:<20} {:>6.3}", "micro-F1", self.micro.f1);
        s
    }
}

/// Multi-class scores over a fixed edge set; micro values pool every class.
pub fn relation_scores<S: AsRef<str>>(gold: &[S], pred: &[S], schema: Schema) -> Result<RelationReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let classes = schema.relation_classes();
    let index = |c: &str| {
        classes
            .iter()
            .position(|k| *k == c)
            .ok_or_else(|| EvalError::UnknownClass { class: c.to_string(), schema })
    };
    let n = classes.len();
    let (mut tp, mut fp, mut fn_) = (vec![0; n], vec![0; n], vec![0; n]);
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (index(g.as_ref())?, index(p.as_ref())?);
        if g == p {
            tp[g] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    Ok(RelationReport {
        per_class: (0..n).map(|c| (classes[c].to_string(), Prf::from_counts(tp[c], fp[c], fn_[c]))).collect(),
        micro: Prf::from_counts(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum()),
    })
}

/// How the distance between two components is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceUnit {
    /// Tokens between the end of the earlier component and the start of the later.
    #[default]
    Tokens,
    /// Difference of post indices.
    Posts,
    /// Components strictly between the two.
    Components,
}

impl std::str::FromStr for DistanceUnit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tokens" => Ok(Self::Tokens),
            "posts" => Ok(Self::Posts),
            "components" => Ok(Self::Components),
            _ => Err(format!("unknown distance unit {s:?} (tokens|posts|components)")),
        }
    }
}

/// Distance between the endpoints of `edge`, or `None` if either is missing.
pub fn edge_distance(lt: &LabeledThread, edge: &RelationEdge, unit: DistanceUnit) -> Option<usize> {
    let a = lt.component(&edge.source_component_id)?;
    let b = lt.component(&edge.target_component_id)?;
    Some(span_distance(&lt.thread, &lt.components, a, b, unit))
}

pub fn span_distance(
    st: &SerializedThread,
    all: &[ComponentSpan],
    a: &ComponentSpan,
    b: &ComponentSpan,
    unit: DistanceUnit,
) -> usize {
    let (first, second) = if a.token_start <= b.token_start { (a, b) } else { (b, a) };
    match unit {
        DistanceUnit::Tokens => second.token_start.saturating_sub(first.token_end),
        DistanceUnit::Posts => {
            let p = |c: &ComponentSpan| st.post_of(c.token_start).unwrap_or(0);
            p(second) - p(first).min(p(second))
        }
        DistanceUnit::Components => all
            .iter()
            .filter(|c| c.token_start >= first.token_end && c.token_end <= second.token_start)
            .count(),
    }
}

/// Right-open bin edges; the last bin is unbounded.
pub const DEFAULT_BINS: [usize; 5] = [0, 10, 50, 200, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub lo: usize,
    pub hi: Option<usize>,
    pub count: usize,
    pub errors: usize,
    pub error_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceProfile {
    pub unit: DistanceUnit,
    pub bins: Vec<DistanceBin>,
    /// Edges whose endpoints could not be resolved.
    pub excluded: usize,
}

impl DistanceProfile {
    pub fn render(&self) -> String {
        let mut s = format!("{:<14} {:>7} {:>7} {:>8}\n", "distance", "pairs", "wrong", "% wrong");
        for b in &self.bins {
            let range = match b.hi {
                Some(h) => format!("[{}, {})", b.lo, h),
                None => format!("[{}, inf)", b.lo),
            };
            let _ = writeln!(s, "{range:<14} {:>7} {:>7} {:>8.1}", b.count, b.errors, b.error_pct);
        }
        let _ = writeln!(s, "excluded {}", self.excluded);
        s
    }
}

/// Error percentage per distance bin. Each outcome is `(distance, correct)`;
/// a `None` distance is counted as excluded.
pub fn distance_error_profile(outcomes: &[(Option<usize>, bool)], edges: &[usize], unit: DistanceUnit) -> DistanceProfile {
    let mut bins: Vec<DistanceBin> = edges
        .iter()
        .enumerate()
        .map(|(i, &lo)| DistanceBin { lo, hi: edges.get(i + 1).copied(), count: 0, errors: 0, error_pct: 0.0 })
        .collect();
    let mut excluded = 0;
    for &(d, correct) in outcomes {
        let Some(d) = d else {
            excluded += 1;
            continue;
        };
        if let Some(b) = bins.iter_mut().rev().find(|b| d >= b.lo) {
            b.count += 1;
            b.errors += usize::from(!correct);
        } else {
            excluded += 1;
        }
    }
    for b in &mut bins {
        b.error_pct = if b.count == 0 { 0.0 } else { 100.0 * b.errors as f64 / b.count as f64 };
    }
    DistanceProfile { unit, bins, excluded }
}

/// Whether a marker lies within `window` tokens on either side of either
/// boundary of `[start, end)`.
pub fn is_near_marker(start: usize, end: usize, matches: &[MarkerMatch], window: usize) -> bool {
    let windows = [
        (start.saturating_sub(window), start + window),
        (end.saturating_sub(window), end + window),
    ];
    matches
        .iter()
        .any(|m| windows.iter().any(|&(lo, hi)| m.token_start < hi && m.token_end > lo))
}

/// Partitions component indices into (near, far).
pub fn marker_vicinity_split(components: &[ComponentSpan], matches: &[MarkerMatch], window: usize) -> (Vec<usize>, Vec<usize>) {
    (0..components.len())
        .partition(|&i| is_near_marker(components[i].token_start, components[i].token_end, matches, window))
}

/// Span counts restricted to components near a marker and to those far from
/// one. Predicted spans are placed by their own vicinity.
pub fn vicinity_counts(
    gold: &BioSequence,
    pred: &BioSequence,
    matches: &[MarkerMatch],
    window: usize,
    near: &mut SpanCounts,
    far: &mut SpanCounts,
) -> Result<(), EvalError> {
    let is_near = |s: usize, e: usize| is_near_marker(s, e, matches, window);
    let is_far = |s: usize, e: usize| !is_near_marker(s, e, matches, window);
    near.add_restricted(gold, pred, Some(&is_near))?;
    far.add_restricted(gold, pred, Some(&is_far))
}

/// Mean and Bessel-corrected standard deviation (0 for fewer than 2 values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// SVG line plot of a metric over epochs: mean across seeds with a ±1 std
/// band. `per_seed[s][e]` is the value of seed `s` at epoch `e + 1`.
pub fn render_curve_svg(title: &str, per_seed: &[Vec<f64>]) -> String {
    let epochs = per_seed.iter().map(Vec::len).min().unwrap_or(0);
    let stats: Vec<(f64, f64)> = (0..epochs)
        .map(|e| mean_std(&per_seed.iter().map(|s| s[e]).collect::<Vec<_>>()))
        .collect();
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let x = |e: usize| pad + (w - 2.0 * pad) * if epochs > 1 { e as f64 / (epochs - 1) as f64 } else { 0.5 };
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v.clamp(0.0, 1.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <text x=\"{pad}\" y=\"20\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = h - pad,
        r = w - pad
    );
    if epochs > 0 {
        let upper: Vec<String> = stats.iter().enumerate().map(|(e, (m, s))| format!("{:.1},{:.1}", x(e), y(m + s))).collect();
        let lower: Vec<String> =
            stats.iter().enumerate().rev().map(|(e, (m, s))| format!("{:.1},{:.1}", x(e), y(m - s))).collect();
        let _ = writeln!(
            svg,
            "<polygon points=\"{} {}\" fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\"/>",
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = stats.iter().enumerate().map(|(e, (m, _))| format!("{:.1},{:.1}", x(e), y(*m))).collect();
        let _ = writeln!(svg, "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>", line.join(" "));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Coarse-class outcome of one predicted relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationOutcome {
    pub thread_id: String,
    pub source: String,
    pub target: String,
    pub gold: String,
    pub pred: String,
}

/// Resolves outcomes against their threads and bins them by distance.
pub fn profile_outcomes(
    threads: &[LabeledThread],
    outcomes: &[RelationOutcome],
    edges: &[usize],
    unit: DistanceUnit,
) -> DistanceProfile {
    let by_id: HashMap<&str, &LabeledThread> = threads.iter().map(|t| (t.thread.thread_id.as_str(), t)).collect();
    let pairs: Vec<(Option<usize>, bool)> = outcomes
        .iter()
        .map(|o| {
            let d = by_id.get(o.thread_id.as_str()).and_then(|lt| {
                let a = lt.component(&o.source)?;
                let b = lt.component(&o.target)?;
                Some(span_distance(&lt.thread, &lt.components, a, b, unit))
            });
            (d, o.gold == o.pred)
        })
        .collect();
    distance_error_profile(&pairs, edges, unit)
}
