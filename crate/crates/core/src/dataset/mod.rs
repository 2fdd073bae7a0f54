//! Routing datasets: ingestion, validation, splitting, and synthesis.
//!
//! A [`RoutingDataset`] is the single source of truth for everything
//! downstream: per-query router scores over a fixed model pool, the set of
//! models known to answer each query correctly, the answers themselves, and
//! optional per-scheme confidence columns. Datasets are immutable after
//! construction and every accessor hands out shared references, so they are
//! safe to fan out across parallel workers.

mod io;

pub use io::{load_dataset, read_jsonl, write_jsonl, DataFormat, LoadOptions};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::num::Real;

/// Reserved identifier for the virtual null model. No real model may use it.
pub const NULL_MODEL_ID: &str = "null";

/// Errors raised while building, loading, splitting, or synthesizing datasets.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },

    #[error("duplicate record id {id:?} (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("split would leave the {part} partition empty (fraction {frac} of {n} records)")]
    DegenerateSplit { part: &'static str, frac: f64, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered pool of candidate models plus the reserved null-model identifier.
///
/// The ordering is fixed at construction; every score vector in the dataset
/// indexes against it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelPool {
    names: Vec<String>,
    null_id: String,
}

impl ModelPool {
    /// Build a pool with the default null identifier [`NULL_MODEL_ID`].
    pub fn new(names: Vec<String>) -> Result<Self, DatasetError> {
        Self::with_null_id(names, NULL_MODEL_ID.to_string())
    }

    /// Build a pool with an explicit null identifier.
    pub fn with_null_id(names: Vec<String>, null_id: String) -> Result<Self, DatasetError> {
        if names.is_empty() {
            return Err(DatasetError::InvalidParameter(
                "model pool must contain at least one model".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name == &null_id {
                return Err(DatasetError::InvalidParameter(format!(
                    "model name {name:?} collides with the reserved null id"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::InvalidParameter(format!(
                    "duplicate model name {name:?}"
                )));
            }
        }
        Ok(Self { names, null_id })
    }

    /// Degenerate pool of a zero-record dataset (no models known).
    pub fn empty() -> Self {
        Self {
            names: Vec::new(),
            null_id: NULL_MODEL_ID.to_string(),
        }
    }

    /// Number of real models `K`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Model names in fixed pool order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Identifier of the virtual null model.
    pub fn null_id(&self) -> &str {
        &self.null_id
    }

    /// Index of a real model name in pool order.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One query: scores over the pool, correctness labels, answers, and optional
/// confidence columns, all aligned with the pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord<T = f64> {
    pub id: String,
    /// Base router scores `f(x, m)` in `[0, 1]`, one per pool model.
    pub scores: Vec<T>,
    /// Correctness labels: `correct[m]` is true when model `m` answers this
    /// query correctly. May be all-false (no model succeeds).
    pub correct: Vec<bool>,
    /// Answer emitted by each model, when known.
    pub answers: Vec<Option<String>>,
    /// Reference answer for this query.
    pub gold: String,
    /// Optional confidence columns: scheme name to per-model values in
    /// `[0, 1]`, `None` where a model has no entry under that scheme.
    pub confidences: BTreeMap<String, Vec<Option<T>>>,
}

impl<T: Real> QueryRecord<T> {
    /// Whether any real model answers this query correctly.
    pub fn has_correct(&self) -> bool {
        self.correct.iter().any(|&c| c)
    }

    /// Indices (pool order) of the correct models.
    pub fn correct_indices(&self) -> Vec<usize> {
        self.correct
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(i))
            .collect()
    }

    fn validate(&self, pool: &ModelPool, line: usize) -> Result<(), DatasetError> {
        let k = pool.len();
        let schema = |message: String| DatasetError::Schema { line, message };
        if self.scores.len() != k {
            return Err(schema(format!(
                "record {:?} has {} scores, pool has {k} models",
                self.id,
                self.scores.len()
            )));
        }
        for (i, &s) in self.scores.iter().enumerate() {
            if !s.is_finite() || s < T::zero() || s > T::one() {
                return Err(schema(format!(
                    "record {:?}: score {} for model {:?} outside [0, 1]",
                    self.id, s, pool.names()[i]
                )));
            }
        }
        if self.correct.len() != k || self.answers.len() != k {
            return Err(schema(format!(
                "record {:?}: labels or answers not aligned with the pool",
                self.id
            )));
        }
        for (scheme, values) in &self.confidences {
            if values.len() != k {
                return Err(schema(format!(
                    "record {:?}: confidence scheme {scheme:?} not aligned with the pool",
                    self.id
                )));
            }
            for (i, v) in values.iter().enumerate() {
                if let Some(v) = v {
                    if !v.is_finite() || *v < T::zero() || *v > T::one() {
                        return Err(schema(format!(
                            "record {:?}: confidence {} ({scheme}/{}) outside [0, 1]",
                            self.id,
                            v,
                            pool.names()[i]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Immutable collection of [`QueryRecord`]s over one [`ModelPool`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDataset<T = f64> {
    pool: ModelPool,
    records: Vec<QueryRecord<T>>,
}

impl<T: Real> RoutingDataset<T> {
    /// Validate and assemble a dataset. Every record must align with the pool
    /// and carry scores (and confidences) in `[0, 1]`; ids must be unique.
    pub fn new(pool: ModelPool, records: Vec<QueryRecord<T>>) -> Result<Self, DatasetError> {
        let mut ids = BTreeSet::new();
        for (i, record) in records.iter().enumerate() {
            let line = i + 1;
            record.validate(&pool, line)?;
            if !ids.insert(record.id.as_str()) {
                return Err(DatasetError::DuplicateId {
                    id: record.id.clone(),
                    line,
                });
            }
        }
        Ok(Self { pool, records })
    }

    /// Assemble without re-validating; for records already vetted by
    /// [`RoutingDataset::new`] (e.g. per-trial reshuffles).
    pub(crate) fn from_parts_unchecked(pool: ModelPool, records: Vec<QueryRecord<T>>) -> Self {
        Self { pool, records }
    }

    pub fn pool(&self) -> &ModelPool {
        &self.pool
    }

    pub fn records(&self) -> &[QueryRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-query ground truth as `(query id, correct model indices)` pairs.
    pub fn ground_truth_pairs(&self) -> Vec<(String, Vec<usize>)> {
        self.records
            .iter()
            .map(|r| (r.id.clone(), r.correct_indices()))
            .collect()
    }
}

/// Calibration / validation / test fractions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub cal_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(cal_frac: f64, val_frac: f64, test_frac: f64, seed: u64) -> Result<Self, DatasetError> {
        for (name, f) in [("cal", cal_frac), ("val", val_frac), ("test", test_frac)] {
            if !(0.0..=1.0).contains(&f) || !f.is_finite() {
                return Err(DatasetError::InvalidParameter(format!(
                    "{name} fraction {f} outside [0, 1]"
                )));
            }
        }
        let sum = cal_frac + val_frac + test_frac;
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(DatasetError::InvalidParameter(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            cal_frac,
            val_frac,
            test_frac,
            seed,
        })
    }
}

/// The calibration, validation, and test parts of a [`split`].
pub type SplitParts<T> = (RoutingDataset<T>, RoutingDataset<T>, RoutingDataset<T>);

/// Partition a dataset into disjoint calibration, validation, and test sets.
///
/// Records are shuffled by a ChaCha stream seeded from `spec.seed`, then cut
/// at `floor(n * frac)` for calibration and validation; the remainder goes to
/// test, so the calibration size is exactly predictable. The same seed always
/// produces the same partition.
pub fn split<T: Real>(
    dataset: &RoutingDataset<T>,
    spec: &SplitSpec,
) -> Result<SplitParts<T>, DatasetError> {
    if dataset.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let n = dataset.len();
    let n_cal = (n as f64 * spec.cal_frac).floor() as usize;
    let n_val = (n as f64 * spec.val_frac).floor() as usize;
    let n_test = n - n_cal - n_val;
    for (part, frac, size) in [
        ("calibration", spec.cal_frac, n_cal),
        ("validation", spec.val_frac, n_val),
        ("test", spec.test_frac, n_test),
    ] {
        if frac > 0.0 && size == 0 {
            return Err(DatasetError::DegenerateSplit { part, frac, n });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let take = |idx: &[usize]| {
        RoutingDataset::from_parts_unchecked(
            dataset.pool.clone(),
            idx.iter().map(|&i| dataset.records[i].clone()).collect(),
        )
    };
    let cal = take(&order[..n_cal]);
    let val = take(&order[n_cal..n_cal + n_val]);
    let test = take(&order[n_cal + n_val..]);
    Ok((cal, val, test))
}

/// Generate a synthetic routing dataset with known per-model accuracies.
///
/// For each query and model, correctness is an independent Bernoulli draw
/// with the model's accuracy. Scores come from a one-parameter family:
/// `u^(1/sharpness)` for correct models and `1 - u^(1/sharpness)` for
/// incorrect ones, with `u ~ U(0, 1)`, so higher sharpness concentrates
/// correct scores near 1 and incorrect scores near 0. Correct models answer
/// `"gold"`, incorrect ones `"wrong-<model>"`. Queries where every model
/// fails occur naturally, exercising the empty-ground-truth path.
///
/// `empty_gt_rate_hint` is informational only (the rate implied by the
/// accuracies is `prod(1 - acc)`); it is validated but does not affect
/// generation.
pub fn synthesize<T: Real>(
    n: usize,
    pool_size: usize,
    model_accuracies: &[f64],
    score_sharpness: f64,
    empty_gt_rate_hint: Option<f64>,
    seed: u64,
) -> Result<RoutingDataset<T>, DatasetError> {
    if n == 0 {
        return Err(DatasetError::InvalidParameter(
            "need at least one record".into(),
        ));
    }
    if pool_size == 0 {
        return Err(DatasetError::InvalidParameter(
            "need at least one model".into(),
        ));
    }
    if model_accuracies.len() != pool_size {
        return Err(DatasetError::InvalidParameter(format!(
            "{} accuracies given for a pool of {pool_size} models",
            model_accuracies.len()
        )));
    }
    for &a in model_accuracies {
        if !(0.0..=1.0).contains(&a) || !a.is_finite() {
            return Err(DatasetError::InvalidParameter(format!(
                "model accuracy {a} outside [0, 1]"
            )));
        }
    }
    if !(score_sharpness.is_finite() && score_sharpness > 0.0) {
        return Err(DatasetError::InvalidParameter(format!(
            "score sharpness {score_sharpness} must be positive"
        )));
    }
    if let Some(rate) = empty_gt_rate_hint {
        if !(0.0..=1.0).contains(&rate) {
            return Err(DatasetError::InvalidParameter(format!(
                "empty ground-truth rate {rate} outside [0, 1]"
            )));
        }
    }

    let pool = ModelPool::new(synthetic_model_names(pool_size))?;
    let id_width = n.saturating_sub(1).to_string().len();
    let exponent = 1.0 / score_sharpness;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let records = (0..n)
        .map(|i| {
            let id = format!("q{i:0id_width$}");
            let mut scores = Vec::with_capacity(pool_size);
            let mut correct = Vec::with_capacity(pool_size);
            let mut answers = Vec::with_capacity(pool_size);
            for (accuracy, name) in model_accuracies.iter().zip(pool.names()) {
                let is_correct = rng.random_bool(*accuracy);
                let u: f64 = rng.random();
                let base = u.powf(exponent);
                let score = if is_correct { base } else { 1.0 - base };
                scores.push(T::from_f64_lossy(score));
                correct.push(is_correct);
                answers.push(Some(if is_correct {
                    "gold".to_string()
                } else {
                    format!("wrong-{name}")
                }));
            }
            QueryRecord {
                id,
                scores,
                correct,
                answers,
                gold: "gold".to_string(),
                confidences: BTreeMap::new(),
            }
        })
        .collect();

    Ok(RoutingDataset::from_parts_unchecked(pool, records))
}

/// Zero-padded model names (`m0`, …) so lexicographic order matches index order.
fn synthetic_model_names(pool_size: usize) -> Vec<String> {
    let width = pool_size.saturating_sub(1).to_string().len();
    (0..pool_size).map(|m| format!("m{m:0width$}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn tiny_record(id: &str, scores: Vec<f64>, correct: Vec<bool>) -> QueryRecord<f64> {
        let k = scores.len();
        QueryRecord {
            id: id.to_string(),
            scores,
            correct,
            answers: vec![Some("a".into()); k],
            gold: "a".into(),
            confidences: BTreeMap::new(),
        }
    }

    fn tiny_dataset(n: usize) -> RoutingDataset<f64> {
        let pool = ModelPool::new(vec!["A".into(), "B".into()]).unwrap();
        let records = (0..n)
            .map(|i| tiny_record(&format!("q{i}"), vec![0.5, 0.5], vec![true, false]))
            .collect();
        RoutingDataset::new(pool, records).unwrap()
    }

    #[test]
    fn pool_rejects_duplicates_and_null_collision() {
        assert!(ModelPool::new(vec!["A".into(), "A".into()]).is_err());
        assert!(ModelPool::new(vec!["A".into(), NULL_MODEL_ID.into()]).is_err());
        assert!(ModelPool::new(vec![]).is_err());
    }

    #[test]
    fn dataset_rejects_out_of_range_scores_and_duplicate_ids() {
        let pool = ModelPool::new(vec!["A".into(), "B".into()]).unwrap();
        let bad = RoutingDataset::new(
            pool.clone(),
            vec![tiny_record("q0", vec![1.5, 0.2], vec![false, false])],
        );
        assert!(matches!(bad, Err(DatasetError::Schema { .. })));

        let dup = RoutingDataset::new(
            pool,
            vec![
                tiny_record("q0", vec![0.1, 0.2], vec![false, false]),
                tiny_record("q0", vec![0.3, 0.4], vec![false, false]),
            ],
        );
        assert!(matches!(dup, Err(DatasetError::DuplicateId { .. })));
    }

    #[test]
    fn split_sizes_follow_floor_with_remainder_to_test() {
        let data = tiny_dataset(10);
        let spec = SplitSpec::new(0.5, 0.1, 0.4, 7).unwrap();
        let (cal, val, test) = split(&data, &spec).unwrap();
        assert_eq!((cal.len(), val.len(), test.len()), (5, 1, 4));
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let data = tiny_dataset(23);
        let spec = SplitSpec::new(0.6, 0.2, 0.2, 99).unwrap();
        let (c1, v1, t1) = split(&data, &spec).unwrap();
        let (c2, v2, t2) = split(&data, &spec).unwrap();
        let ids = |d: &RoutingDataset<f64>| -> Vec<String> {
            d.records().iter().map(|r| r.id.clone()).collect()
        };
        assert_eq!(ids(&c1), ids(&c2));
        assert_eq!(ids(&v1), ids(&v2));
        assert_eq!(ids(&t1), ids(&t2));

        let mut all: Vec<String> = ids(&c1);
        all.extend(ids(&v1));
        all.extend(ids(&t1));
        assert_eq!(all.len(), data.len());
        let unique: BTreeSet<&String> = all.iter().collect();
        assert_eq!(unique.len(), data.len(), "partitions overlap");
    }

    #[test]
    fn split_rejects_degenerate_partitions() {
        let data = tiny_dataset(3);
        let spec = SplitSpec::new(0.5, 0.1, 0.4, 1).unwrap();
        let err = split(&data, &spec).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::DegenerateSplit { part: "validation", .. }
        ));
    }

    #[test]
    fn split_spec_validates_fractions() {
        assert!(SplitSpec::new(0.5, 0.5, 0.5, 0).is_err());
        assert!(SplitSpec::new(-0.1, 0.6, 0.5, 0).is_err());
        assert!(SplitSpec::new(0.5, 0.1, 0.4, 0).is_ok());
        // within the stated tolerance of 1e-9
        assert!(SplitSpec::new(0.5, 0.1, 0.4 + 5e-10, 0).is_ok());
    }

    #[test]
    fn synthesize_degenerate_accuracies() {
        let all_correct = synthesize::<f64>(50, 3, &[1.0, 1.0, 1.0], 2.0, None, 5).unwrap();
        assert!(all_correct.records().iter().all(|r| r.correct.iter().all(|&c| c)));

        let none_correct = synthesize::<f64>(50, 3, &[0.0, 0.0, 0.0], 2.0, None, 5).unwrap();
        assert!(none_correct.records().iter().all(|r| !r.has_correct()));
    }

    #[test]
    fn synthesize_matches_target_frequencies() {
        // Oracle: direct frequency count against the Bernoulli targets.
        let targets = [0.7, 0.5, 0.3];
        let data = synthesize::<f64>(10_000, 3, &targets, 2.0, None, 42).unwrap();
        for (m, target) in targets.iter().enumerate() {
            let hits = data.records().iter().filter(|r| r.correct[m]).count();
            let freq = hits as f64 / data.len() as f64;
            assert!(
                (freq - target).abs() <= 0.02,
                "model {m}: empirical {freq} vs target {target}"
            );
        }
    }

    #[test]
    fn synthesize_scores_track_correctness() {
        let data = synthesize::<f64>(2000, 2, &[0.5, 0.5], 4.0, None, 11).unwrap();
        let (mut correct_sum, mut correct_n) = (0.0, 0);
        let (mut wrong_sum, mut wrong_n) = (0.0, 0);
        for r in data.records() {
            for m in 0..2 {
                if r.correct[m] {
                    correct_sum += r.scores[m];
                    correct_n += 1;
                } else {
                    wrong_sum += r.scores[m];
                    wrong_n += 1;
                }
            }
        }
        let correct_mean = correct_sum / correct_n as f64;
        let wrong_mean = wrong_sum / wrong_n as f64;
        // With sharpness 4 the mean of u^(1/4) is 4/5.
        assert!((correct_mean - 0.8).abs() < 0.02, "correct mean {correct_mean}");
        assert!((wrong_mean - 0.2).abs() < 0.02, "wrong mean {wrong_mean}");
    }

    #[test]
    fn synthesize_serializes_byte_identically_for_equal_arguments() {
        let render = || {
            let data = synthesize::<f64>(200, 3, &[0.7, 0.5, 0.3], 2.0, None, 99).unwrap();
            let mut buf = Vec::new();
            super::io::write_jsonl(&data, &mut buf).unwrap();
            buf
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn synthesize_validates_parameters() {
        assert!(synthesize::<f64>(0, 1, &[0.5], 1.0, None, 0).is_err());
        assert!(synthesize::<f64>(10, 2, &[0.5], 1.0, None, 0).is_err());
        assert!(synthesize::<f64>(10, 1, &[1.5], 1.0, None, 0).is_err());
        assert!(synthesize::<f64>(10, 1, &[0.5], 0.0, None, 0).is_err());
        assert!(synthesize::<f64>(10, 1, &[0.5], 1.0, Some(2.0), 0).is_err());
    }

    #[test]
    fn synthetic_names_sort_in_index_order() {
        let names = synthetic_model_names(12);
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(names[0], "m00");
        assert_eq!(names[11], "m11");
    }
}
