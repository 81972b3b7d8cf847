//! Acquisition functions: scoring and batch selection over the unlabeled pool.
//!
//! Every ordering breaks score ties by ascending sample id, so selections are
//! reproducible regardless of input order or thread count.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, ProbMatrix};
use crate::error::{Error, Result};

/// Sample selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "margin")]
    Margin,
    #[serde(rename = "coreset")]
    Coreset,
    #[serde(rename = "alamp")]
    Alamp,
    #[serde(rename = "alamp-div")]
    AlampDiv,
    #[serde(rename = "rand-div")]
    RandDiv,
    #[serde(rename = "marg-div")]
    MargDiv,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Random,
        Strategy::Margin,
        Strategy::Coreset,
        Strategy::Alamp,
        Strategy::AlampDiv,
        Strategy::RandDiv,
        Strategy::MargDiv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Margin => "margin",
            Strategy::Coreset => "coreset",
            Strategy::Alamp => "alamp",
            Strategy::AlampDiv => "alamp-div",
            Strategy::RandDiv => "rand-div",
            Strategy::MargDiv => "marg-div",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Smallest score first.
    Ascending,
    /// Largest score first.
    Descending,
}

/// Scores over a set of samples together with their selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPool {
    sample_ids: Vec<usize>,
    scores: Vec<f64>,
    order: Vec<usize>,
    direction: Direction,
}

impl ScoredPool {
    pub fn new(sample_ids: Vec<usize>, scores: Vec<f64>, direction: Direction) -> Result<Self> {
        if sample_ids.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                expected: sample_ids.len(),
                found: scores.len(),
            });
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("scores"));
        }
        let mut idx: Vec<usize> = (0..sample_ids.len()).collect();
        idx.sort_by(|&a, &b| {
            let by_score = match direction {
                Direction::Ascending => scores[a].total_cmp(&scores[b]),
                Direction::Descending => scores[b].total_cmp(&scores[a]),
            };
            by_score.then(sample_ids[a].cmp(&sample_ids[b]))
        });
        let order = idx.into_iter().map(|i| sample_ids[i]).collect();
        Ok(Self {
            sample_ids,
            scores,
            order,
            direction,
        })
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Sample ids, best candidate first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn score_map(&self) -> HashMap<usize, f64> {
        self.sample_ids
            .iter()
            .copied()
            .zip(self.scores.iter().copied())
            .collect()
    }

    pub fn score_of(&self, id: usize) -> Option<f64> {
        self.sample_ids
            .iter()
            .position(|&s| s == id)
            .map(|i| self.scores[i])
    }

    /// First `batch` ids of the order.
    pub fn top(&self, batch: usize) -> Result<Vec<usize>> {
        if batch > self.order.len() {
            return Err(Error::BatchTooLarge {
                batch,
                pool: self.order.len(),
            });
        }
        Ok(self.order[..batch].to_vec())
    }
}

/// Predicted class per sample.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PseudoClassMap(pub BTreeMap<usize, usize>);

impl PseudoClassMap {
    pub fn get(&self, id: usize) -> Option<usize> {
        self.0.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(usize, usize)> for PseudoClassMap {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Gap between the two largest probabilities of a row.
pub fn margin(row: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in row {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    first - second
}

/// Margin of every row, most uncertain (smallest margin) first.
pub fn margin_scores(probs: &ProbMatrix) -> Result<ScoredPool> {
    if probs.n_classes() < 2 {
        return Err(Error::InvalidParameter(
            "margin needs at least two classes".into(),
        ));
    }
    let scores = probs
        .rows()
        .map(|(_, row)| margin(row.as_slice().expect("standard layout")))
        .collect();
    ScoredPool::new(probs.sample_ids().to_vec(), scores, Direction::Ascending)
}

/// Relative margin shift between two consecutive models:
/// `(prev - curr) / (prev + curr)`, or 0 when both margins are 0.
pub fn alamp_score(prev: f64, curr: f64) -> f64 {
    let denom = prev + curr;
    if denom == 0.0 {
        0.0
    } else {
        (prev - curr) / denom
    }
}

/// Scores every sample of `curr` by its margin shift from `prev`, largest
/// shift towards uncertainty first. `prev` may cover more samples.
pub fn alamp_scores(prev: &ScoredPool, curr: &ScoredPool) -> Result<ScoredPool> {
    let prev_map = prev.score_map();
    let scores = curr
        .sample_ids()
        .iter()
        .zip(curr.scores())
        .map(|(&id, &c)| {
            prev_map
                .get(&id)
                .map(|&p| alamp_score(p, c))
                .ok_or(Error::MissingPrevious(id))
        })
        .collect::<Result<Vec<_>>>()?;
    ScoredPool::new(curr.sample_ids().to_vec(), scores, Direction::Descending)
}

/// Uniform sample without replacement, in draw order.
pub fn random_select(pool: &[usize], batch: usize, seed: u64) -> Result<Vec<usize>> {
    if batch > pool.len() {
        return Err(Error::BatchTooLarge {
            batch,
            pool: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, pool.len(), batch)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

fn squared_distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy k-center selection.
///
/// `features` rows are addressed through `row_ids` (sample id of each row,
/// ascending). Each pick is the unlabeled sample farthest from its nearest
/// labeled or already picked sample; ties go to the lowest id.
pub fn coreset_select(
    features: ArrayView2<'_, f64>,
    row_ids: &[usize],
    labeled: &[usize],
    unlabeled: &[usize],
    batch: usize,
) -> Result<Vec<usize>> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    if batch > unlabeled.len() {
        return Err(Error::BatchTooLarge {
            batch,
            pool: unlabeled.len(),
        });
    }
    if row_ids.len() != features.nrows() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            found: row_ids.len(),
        });
    }
    let row = |id: usize| {
        row_ids
            .binary_search(&id)
            .map_err(|_| Error::UnknownSample(id))
    };

    let mut candidates = unlabeled.to_vec();
    candidates.sort_unstable();
    let cand_rows = candidates
        .iter()
        .map(|&id| row(id))
        .collect::<Result<Vec<_>>>()?;
    let anchor_rows = labeled
        .iter()
        .map(|&id| row(id))
        .collect::<Result<Vec<_>>>()?;

    let mut nearest = vec![f64::INFINITY; candidates.len()];
    for (d, &cr) in nearest.iter_mut().zip(&cand_rows) {
        let x = features.row(cr);
        for &ar in &anchor_rows {
            *d = d.min(squared_distance(x, features.row(ar)));
        }
    }

    let mut taken = vec![false; candidates.len()];
    let mut selected = Vec::with_capacity(batch);
    for _ in 0..batch {
        let mut best: Option<usize> = None;
        for i in 0..candidates.len() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let pick = best.expect("batch <= pool");
        taken[pick] = true;
        selected.push(candidates[pick]);
        let anchor = features.row(cand_rows[pick]);
        for (i, d) in nearest.iter_mut().enumerate() {
            if !taken[i] {
                *d = d.min(squared_distance(features.row(cand_rows[i]), anchor));
            }
        }
    }
    Ok(selected)
}

/// Spreads a batch across pseudo classes.
///
/// Repeatedly scans `ordered`; within one scan a sample is taken only when
/// its pseudo class has not been taken yet during that scan. Scans repeat
/// until at least `batch` samples are taken, and the result is cut to
/// `batch` in selection order.
pub fn diversify(ordered: &[usize], pseudo: &PseudoClassMap, batch: usize) -> Result<Vec<usize>> {
    if batch > ordered.len() {
        return Err(Error::BatchTooLarge {
            batch,
            pool: ordered.len(),
        });
    }
    let classes = ordered
        .iter()
        .map(|&id| pseudo.get(id).ok_or(Error::MissingPseudoClass(id)))
        .collect::<Result<Vec<_>>>()?;

    let mut selected = Vec::with_capacity(batch);
    let mut in_selection = HashSet::with_capacity(batch);
    while selected.len() < batch {
        let mut seen = HashSet::new();
        let before = selected.len();
        for (&id, &class) in ordered.iter().zip(&classes) {
            if !seen.contains(&class) && !in_selection.contains(&id) {
                selected.push(id);
                in_selection.insert(id);
                seen.insert(class);
            }
        }
        if selected.len() == before {
            break;
        }
    }
    selected.truncate(batch);
    Ok(selected)
}

/// Most probable class of every row, lowest class on ties.
pub fn pseudo_classes(probs: &ProbMatrix) -> PseudoClassMap {
    probs.rows().map(|(id, row)| (id, argmax(row))).collect()
}
