//! Linear-chain CRF over label indices: forward algorithm, path scores,
//! negative log-likelihood with analytic gradients, and Viterbi decoding.
//!
//! Labels follow [`Tag::index`]. A hard constraint mask removes transitions
//! that would produce ill-formed BIO (`O→I-x`, `B-x→I-y`, `I-x→I-y` for
//! `x≠y`, and a sequence starting with `I-x`).

use crate::labels::{BioSequence, Schema, Tag};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CrfError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty sequence")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("gold sequence violates the transition constraints at position {0}")]
    InvalidGold(usize),
}

pub type Result<T> = std::result::Result<T, CrfError>;

/// Row-major `len × labels` scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionMatrix {
    pub len: usize,
    pub labels: usize,
    pub scores: Vec<f64>,
}

impl EmissionMatrix {
    pub fn new(len: usize, labels: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != len * labels {
            return Err(CrfError::Shape(format!("{} scores for {len}×{labels}", scores.len())));
        }
        Ok(Self { len, labels, scores })
    }

    pub fn zeros(len: usize, labels: usize) -> Self {
        Self { len, labels, scores: vec![0.0; len * labels] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let labels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != labels) {
            return Err(CrfError::Shape("ragged rows".into()));
        }
        Ok(Self { len: rows.len(), labels, scores: rows.concat() })
    }

    #[inline]
    pub fn at(&self, i: usize, y: usize) -> f64 {
        self.scores[i * self.labels + y]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.labels..(i + 1) * self.labels]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub labels: usize,
    /// `trans[a * labels + b]` scores `a → b`.
    pub trans: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub allowed: Vec<bool>,
    pub start_allowed: Vec<bool>,
}

impl TransitionTable {
    /// Zero scores, nothing forbidden.
    pub fn unconstrained(labels: usize) -> Self {
        Self {
            labels,
            trans: vec![0.0; labels * labels],
            start: vec![0.0; labels],
            end: vec![0.0; labels],
            allowed: vec![true; labels * labels],
            start_allowed: vec![true; labels],
        }
    }

    /// Zero scores with the BIO constraint mask for `schema`.
    pub fn bio(schema: Schema) -> Self {
        Self::bio_for_labels(schema.label_count())
    }

    pub fn bio_for_labels(labels: usize) -> Self {
        let mut t = Self::unconstrained(labels);
        for a in 0..labels {
            for b in 0..labels {
                t.allowed[a * labels + b] = Tag::from_index(a).allows(Tag::from_index(b));
            }
        }
        for b in 0..labels {
            t.start_allowed[b] = Tag::O.allows(Tag::from_index(b));
        }
        t
    }

    #[inline]
    pub fn score(&self, a: usize, b: usize) -> f64 {
        let k = a * self.labels + b;
        if self.allowed[k] {
            self.trans[k]
        } else {
            f64::NEG_INFINITY
        }
    }

    #[inline]
    pub fn start_score(&self, y: usize) -> f64 {
        if self.start_allowed[y] {
            self.start[y]
        } else {
            f64::NEG_INFINITY
        }
    }

    fn check(&self) -> Result<()> {
        let k = self.labels;
        if self.trans.len() != k * k
            || self.start.len() != k
            || self.end.len() != k
            || self.allowed.len() != k * k
            || self.start_allowed.len() != k
        {
            return Err(CrfError::Shape("transition table".into()));
        }
        if self.trans.iter().chain(&self.start).chain(&self.end).any(|v| !v.is_finite()) {
            return Err(CrfError::NonFinite("transitions"));
        }
        Ok(())
    }
}

/// Gradients with the shapes of the inputs they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGrad {
    pub emissions: Vec<f64>,
    pub trans: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

fn validate(e: &EmissionMatrix, t: &TransitionTable) -> Result<()> {
    if e.len == 0 {
        return Err(CrfError::Empty);
    }
    if e.labels != t.labels {
        return Err(CrfError::Shape(format!("{} emission labels vs {} transition labels", e.labels, t.labels)));
    }
    if e.scores.iter().any(|v| !v.is_finite()) {
        return Err(CrfError::NonFinite("emissions"));
    }
    t.check()
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Forward log-potentials `alpha[i * k + y]`.
fn forward(e: &EmissionMatrix, t: &TransitionTable) -> Vec<f64> {
    let k = e.labels;
    let mut alpha = vec![0.0; e.len * k];
    for y in 0..k {
        alpha[y] = t.start_score(y) + e.at(0, y);
    }
    for i in 1..e.len {
        for b in 0..k {
            let prev = &alpha[(i - 1) * k..i * k];
            let s = logsumexp((0..k).map(|a| prev[a] + t.score(a, b)));
            alpha[i * k + b] = s + e.at(i, b);
        }
    }
    alpha
}

/// Backward log-potentials `beta[i * k + y]`, end scores included.
fn backward(e: &EmissionMatrix, t: &TransitionTable) -> Vec<f64> {
    let k = e.labels;
    let n = e.len;
    let mut beta = vec![0.0; n * k];
    beta[(n - 1) * k..].copy_from_slice(&t.end);
    for i in (0..n - 1).rev() {
        for a in 0..k {
            let next = &beta[(i + 1) * k..(i + 2) * k];
            beta[i * k + a] = logsumexp((0..k).map(|b| t.score(a, b) + e.at(i + 1, b) + next[b]));
        }
    }
    beta
}

fn finish(alpha: &[f64], t: &TransitionTable, n: usize) -> f64 {
    let k = t.labels;
    logsumexp((0..k).map(|y| alpha[(n - 1) * k + y] + t.end[y]))
}

/// `log Σ_paths exp(score(path))`.
pub fn log_partition(e: &EmissionMatrix, t: &TransitionTable) -> Result<f64> {
    validate(e, t)?;
    Ok(finish(&forward(e, t), t, e.len))
}

/// Unnormalized score of `path`; `-inf` if the mask forbids it.
pub fn path_score(e: &EmissionMatrix, t: &TransitionTable, path: &[usize]) -> f64 {
    let mut s = t.start_score(path[0]) + e.at(0, path[0]);
    for i in 1..path.len() {
        s += t.score(path[i - 1], path[i]) + e.at(i, path[i]);
    }
    s + t.end[path[path.len() - 1]]
}

fn check_gold(e: &EmissionMatrix, t: &TransitionTable, gold: &[usize]) -> Result<()> {
    if gold.len() != e.len {
        return Err(CrfError::Shape(format!("gold length {} vs {}", gold.len(), e.len)));
    }
    if let Some(&y) = gold.iter().find(|&&y| y >= e.labels) {
        return Err(CrfError::Shape(format!("label {y} out of range")));
    }
    if !t.start_allowed[gold[0]] {
        return Err(CrfError::InvalidGold(0));
    }
    for i in 1..gold.len() {
        if !t.allowed[gold[i - 1] * t.labels + gold[i]] {
            return Err(CrfError::InvalidGold(i));
        }
    }
    Ok(())
}

/// `log Z − score(gold)`.
pub fn nll(e: &EmissionMatrix, t: &TransitionTable, gold: &[usize]) -> Result<f64> {
    validate(e, t)?;
    check_gold(e, t, gold)?;
    Ok(finish(&forward(e, t), t, e.len) - path_score(e, t, gold))
}

pub fn nll_bio(e: &EmissionMatrix, t: &TransitionTable, gold: &BioSequence) -> Result<f64> {
    nll(e, t, &gold.indices())
}

/// Loss plus gradients: expected feature counts under the model minus the
/// gold counts.
pub fn nll_with_grad(e: &EmissionMatrix, t: &TransitionTable, gold: &[usize]) -> Result<(f64, CrfGrad)> {
    validate(e, t)?;
    check_gold(e, t, gold)?;
    let (n, k) = (e.len, e.labels);
    let alpha = forward(e, t);
    let beta = backward(e, t);
    let log_z = finish(&alpha, t, n);
    let loss = log_z - path_score(e, t, gold);

    let mut g = CrfGrad {
        emissions: vec![0.0; n * k],
        trans: vec![0.0; k * k],
        start: vec![0.0; k],
        end: vec![0.0; k],
    };
    for i in 0..n {
        for y in 0..k {
            g.emissions[i * k + y] = (alpha[i * k + y] + beta[i * k + y] - log_z).exp();
        }
    }
    for y in 0..k {
        if t.start_allowed[y] {
            g.start[y] = g.emissions[y];
        }
        g.end[y] = g.emissions[(n - 1) * k + y];
    }
    for i in 1..n {
        for a in 0..k {
            for b in 0..k {
                if t.allowed[a * k + b] {
                    let lp = alpha[(i - 1) * k + a] + t.trans[a * k + b] + e.at(i, b) + beta[i * k + b] - log_z;
                    g.trans[a * k + b] += lp.exp();
                }
            }
        }
    }
    g.start[gold[0]] -= 1.0;
    g.end[gold[n - 1]] -= 1.0;
    for i in 0..n {
        g.emissions[i * k + gold[i]] -= 1.0;
        if i > 0 {
            g.trans[gold[i - 1] * k + gold[i]] -= 1.0;
        }
    }
    Ok((loss, g))
}

/// Highest-scoring allowed path. Ties go to the lowest label index, both
/// for the final label and at every backpointer.
pub fn viterbi(e: &EmissionMatrix, t: &TransitionTable) -> Result<Vec<usize>> {
    validate(e, t)?;
    let (n, k) = (e.len, e.labels);
    let mut score: Vec<f64> = (0..k).map(|y| t.start_score(y) + e.at(0, y)).collect();
    let mut back = vec![0usize; n * k];
    for i in 1..n {
        let mut next = vec![f64::NEG_INFINITY; k];
        for b in 0..k {
            let mut best = (f64::NEG_INFINITY, 0);
            for (a, &sa) in score.iter().enumerate() {
                let s = sa + t.score(a, b);
                if s > best.0 {
                    best = (s, a);
                }
            }
            next[b] = best.0 + e.at(i, b);
            back[i * k + b] = best.1;
        }
        score = next;
    }
    let mut last = 0;
    let mut best = f64::NEG_INFINITY;
    for (y, &s) in score.iter().enumerate() {
        let s = s + t.end[y];
        if s > best {
            best = s;
            last = y;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for i in (1..n).rev() {
        path[i - 1] = back[i * k + path[i]];
    }
    Ok(path)
}

pub fn decode(e: &EmissionMatrix, t: &TransitionTable) -> Result<BioSequence> {
    Ok(BioSequence::from_indices(&viterbi(e, t)?))
}
