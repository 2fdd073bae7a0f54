//! Augmented router scores, non-conformity transforms, and randomized
//! smoothing.
//!
//! The base router emits `K` scores per query. [`augment`] appends a score
//! for the virtual null model, `r_null = 1 - max_k f(x, k)`, so an ambiguous
//! router (all base scores low) makes abstention attractive. Augmented scores
//! become non-conformity scores via one of two monotone transforms, and a
//! keyed uniform perturbation in `[0, 1e-6)` breaks ties without disturbing
//! the ranking of entries that differ by more than the noise scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{QueryRecord, RoutingDataset};
use crate::num::Real;
use crate::rng::keyed_unit;

/// Width of the smoothing noise: draws are uniform in `[0, SMOOTHING_SCALE)`.
pub const SMOOTHING_SCALE: f64 = 1e-6;

/// Errors from the scoring stage.
#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("query {query_id:?}: score {value} at index {index} is not a finite value in [0, 1]")]
    InvalidScore {
        query_id: String,
        index: usize,
        value: f64,
    },

    #[error("query {query_id:?} has no scores")]
    EmptyScores { query_id: String },

    #[error("query {query_id:?} was already smoothed with seed {seed}")]
    AlreadySmoothed { query_id: String, seed: u64 },
}

/// Which non-conformity transform to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Score gap: `s_m = max_{m'} r_{m'} - r_m` (max over the augmented pool).
    Gap,
    /// Inverse probability: `s_m = 1 - r_m`.
    Prob,
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreKind::Gap => "gap",
            ScoreKind::Prob => "prob",
        })
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gap" => Ok(ScoreKind::Gap),
            "prob" => Ok(ScoreKind::Prob),
            other => Err(format!("unknown score kind {other:?}, expected gap or prob")),
        }
    }
}

/// Router scores over the augmented pool: indices `0..K` follow the pool
/// order, index `K` is the virtual null model.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedScoreRow<T = f64> {
    pub query_id: String,
    pub r: Vec<T>,
}

impl<T: Real> AugmentedScoreRow<T> {
    /// Index of the null-model entry.
    pub fn null_index(&self) -> usize {
        self.r.len() - 1
    }
}

/// Non-conformity scores over the augmented pool. Lower means the router is
/// more confident in that model.
#[derive(Debug, Clone, PartialEq)]
pub struct NonconformityRow<T = f64> {
    pub query_id: String,
    pub s: Vec<T>,
    pub kind: ScoreKind,
    /// `Some(seed)` once randomized smoothing has been applied.
    pub smoothing_seed: Option<u64>,
}

impl<T: Real> NonconformityRow<T> {
    pub fn is_smoothed(&self) -> bool {
        self.smoothing_seed.is_some()
    }

    pub fn null_index(&self) -> usize {
        self.s.len() - 1
    }
}

/// Extend base scores with the null-model score `1 - max_k f(x, k)`.
pub fn augment<T: Real>(
    query_id: impl Into<String>,
    scores: &[T],
) -> Result<AugmentedScoreRow<T>, ScoringError> {
    let query_id = query_id.into();
    if scores.is_empty() {
        return Err(ScoringError::EmptyScores { query_id });
    }
    let mut max = T::neg_infinity();
    for (index, &v) in scores.iter().enumerate() {
        if !v.is_finite() || v < T::zero() || v > T::one() {
            return Err(ScoringError::InvalidScore {
                query_id,
                index,
                value: v.as_f64(),
            });
        }
        if v > max {
            max = v;
        }
    }
    let mut r = scores.to_vec();
    r.push(T::one() - max);
    Ok(AugmentedScoreRow { query_id, r })
}

/// Transform augmented scores into non-conformity scores.
pub fn nonconformity<T: Real>(row: &AugmentedScoreRow<T>, kind: ScoreKind) -> NonconformityRow<T> {
    let s = match kind {
        ScoreKind::Gap => {
            let r_max = row
                .r
                .iter()
                .copied()
                .fold(T::neg_infinity(), |acc, v| if v > acc { v } else { acc });
            row.r.iter().map(|&v| r_max - v).collect()
        }
        ScoreKind::Prob => row.r.iter().map(|&v| T::one() - v).collect(),
    };
    NonconformityRow {
        query_id: row.query_id.clone(),
        s,
        kind,
        smoothing_seed: None,
    }
}

/// Add a keyed uniform draw in `[0, SMOOTHING_SCALE)` to every entry.
///
/// The draw is a pure function of `(seed, query id, entry index)`, so the
/// same inputs always smooth identically regardless of batch order or
/// parallelism. Entries that differ by more than the noise scale keep their
/// relative order.
pub fn smooth<T: Real>(
    mut row: NonconformityRow<T>,
    seed: u64,
) -> Result<NonconformityRow<T>, ScoringError> {
    if let Some(existing) = row.smoothing_seed {
        return Err(ScoringError::AlreadySmoothed {
            query_id: row.query_id,
            seed: existing,
        });
    }
    for (index, value) in row.s.iter_mut().enumerate() {
        let eps = keyed_unit(seed, &row.query_id, index as u64) * SMOOTHING_SCALE;
        *value += T::from_f64_lossy(eps);
    }
    row.smoothing_seed = Some(seed);
    Ok(row)
}

/// Full scoring pipeline for a dataset: augment, transform, smooth.
pub fn score_records<T: Real>(
    dataset: &RoutingDataset<T>,
    kind: ScoreKind,
    smoothing_seed: u64,
) -> Result<Vec<NonconformityRow<T>>, ScoringError> {
    dataset
        .records()
        .iter()
        .map(|record| score_record(record, kind, smoothing_seed))
        .collect()
}

/// Scoring pipeline for a single record.
pub fn score_record<T: Real>(
    record: &QueryRecord<T>,
    kind: ScoreKind,
    smoothing_seed: u64,
) -> Result<NonconformityRow<T>, ScoringError> {
    let augmented = augment(record.id.as_str(), &record.scores)?;
    smooth(nonconformity(&augmented, kind), smoothing_seed)
}
