use super::{CorpusError, Result, Thread};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub split_name: String,
    pub ratios: (f64, f64),
    pub seed: u64,
    pub assignment: BTreeMap<String, Fold>,
}

impl SplitPlan {
    pub fn fold_of(&self, thread_id: &str) -> Option<Fold> {
        self.assignment.get(thread_id).copied()
    }

    pub fn ids(&self, fold: Fold) -> impl Iterator<Item = &str> {
        self.assignment
            .iter()
            .filter(move |(_, f)| **f == fold)
            .map(|(k, _)| k.as_str())
    }
}

/// Name like `80-20` for ratios (0.8, 0.2).
pub fn ratio_name(ratios: (f64, f64)) -> String {
    format!("{}-{}", (ratios.0 * 100.0).round(), (ratios.1 * 100.0).round())
}

/// One plan per seed in `0..n_seeds`. Threads that share a submission are
/// kept on the same side; the number of training groups is
/// `round(train_fraction * groups)`, clamped so both sides are non-empty.
pub fn make_splits(threads: &[Thread], ratios: (f64, f64), n_seeds: u64) -> Result<Vec<SplitPlan>> {
    let (train, test) = ratios;
    if !(train > 0.0 && test > 0.0) || ((train + test) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Split(format!(
            "ratios must be positive and sum to 1, got ({train}, {test})"
        )));
    }
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in threads {
        groups
            .entry(t.submission_id.as_str())
            .or_default()
            .push(t.thread_id.as_str());
    }
    if groups.len() < 2 {
        return Err(CorpusError::Split(format!(
            "need at least 2 submission groups, found {}",
            groups.len()
        )));
    }
    let keys: Vec<&str> = groups.keys().copied().collect();
    let n_train = ((train * keys.len() as f64).round() as usize).clamp(1, keys.len() - 1);
    let name = ratio_name(ratios);
    Ok((0..n_seeds)
        .map(|seed| {
            let mut order = keys.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut assignment = BTreeMap::new();
            for (rank, g) in order.iter().enumerate() {
                let fold = if rank < n_train { Fold::Train } else { Fold::Test };
                for id in &groups[g] {
                    assignment.insert(id.to_string(), fold);
                }
            }
            SplitPlan {
                split_name: format!("{name}-s{seed}"),
                ratios,
                seed,
                assignment,
            }
        })
        .collect())
}

/// Parses `80:20` or `0.8:0.2` into fractions.
pub fn parse_ratio(s: &str) -> Result<(f64, f64)> {
    let bad = || CorpusError::Split(format!("cannot parse split ratio {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let total = a + b;
    if total <= 0.0 {
        return Err(bad());
    }
    Ok((a / total, b / total))
}
