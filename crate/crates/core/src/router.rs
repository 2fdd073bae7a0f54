//! Applying a calibrated threshold to new queries.
//!
//! A prediction set contains every augmented-pool model whose non-conformity
//! score is at or below the calibrated threshold. If no real model qualifies
//! the routed query is an abstention; the null model may co-occur with real
//! models without triggering it. Sets built from the same row are nested in
//! the threshold, which is what makes the calibrated guarantee transfer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationResult;
use crate::dataset::ModelPool;
use crate::num::Real;
use crate::scoring::{NonconformityRow, ScoreKind};

/// Errors from routing.
#[derive(Debug, Error)]
pub enum RouterError {
    #[error("query {query_id:?}: row has kind {row} but the calibration used {calib}")]
    KindMismatch {
        query_id: String,
        row: ScoreKind,
        calib: ScoreKind,
    },

    #[error(
        "query {query_id:?}: row smoothing ({row:?}) does not match the calibration seed {calib}"
    )]
    SmoothingMismatch {
        query_id: String,
        row: Option<u64>,
        calib: u64,
    },

    #[error("query {query_id:?}: row has {row_len} entries but the pool implies {expected}")]
    PoolMismatch {
        query_id: String,
        row_len: usize,
        expected: usize,
    },
}

/// The routed set for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet<T = f64> {
    pub query_id: String,
    /// Member names in pool order; the null id, when present, comes last.
    pub members: Vec<String>,
    /// True exactly when no real model is in the set.
    pub abstain: bool,
    pub lambda_used: T,
}

impl<T: Real> PredictionSet<T> {
    /// Member names excluding the null model.
    pub fn real_members<'a>(&'a self, pool: &ModelPool) -> impl Iterator<Item = &'a str> {
        let null_id = pool.null_id().to_string();
        self.members
            .iter()
            .map(String::as_str)
            .filter(move |m| *m != null_id)
    }

    /// Number of real models in the set (the reported size metric).
    pub fn real_size(&self, pool: &ModelPool) -> usize {
        self.real_members(pool).count()
    }

    /// Wire form for JSONL output.
    pub fn to_record(&self) -> PredictionSetRecord {
        PredictionSetRecord {
            id: self.query_id.clone(),
            members: self.members.clone(),
            abstain: self.abstain,
        }
    }
}

/// JSONL line format: `{"id": …, "members": […], "abstain": …}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSetRecord {
    pub id: String,
    pub members: Vec<String>,
    pub abstain: bool,
}

impl PredictionSetRecord {
    /// Rehydrate into a [`PredictionSet`] with the threshold it was built at.
    pub fn into_set<T: Real>(self, lambda_used: T) -> PredictionSet<T> {
        PredictionSet {
            query_id: self.id,
            members: self.members,
            abstain: self.abstain,
            lambda_used,
        }
    }
}

/// Route one query: include every model with score at or below the threshold.
pub fn predict_set<T: Real>(
    row: &NonconformityRow<T>,
    calib: &CalibrationResult<T>,
    pool: &ModelPool,
) -> Result<PredictionSet<T>, RouterError> {
    if row.kind != calib.kind {
        return Err(RouterError::KindMismatch {
            query_id: row.query_id.clone(),
            row: row.kind,
            calib: calib.kind,
        });
    }
    if row.smoothing_seed != Some(calib.smoothing_seed) {
        return Err(RouterError::SmoothingMismatch {
            query_id: row.query_id.clone(),
            row: row.smoothing_seed,
            calib: calib.smoothing_seed,
        });
    }
    if row.s.len() != pool.len() + 1 {
        return Err(RouterError::PoolMismatch {
            query_id: row.query_id.clone(),
            row_len: row.s.len(),
            expected: pool.len() + 1,
        });
    }

    let lambda = calib.lambda_hat;
    let mut members = Vec::new();
    let mut any_real = false;
    for (i, &s) in row.s.iter().enumerate() {
        if s <= lambda {
            if i < pool.len() {
                members.push(pool.names()[i].clone());
                any_real = true;
            } else {
                members.push(pool.null_id().to_string());
            }
        }
    }
    Ok(PredictionSet {
        query_id: row.query_id.clone(),
        members,
        abstain: !any_real,
        lambda_used: lambda,
    })
}

/// Route a batch, preserving input order. The first per-row error aborts the
/// batch; it already names the offending query.
pub fn route_batch<T: Real>(
    rows: &[NonconformityRow<T>],
    calib: &CalibrationResult<T>,
    pool: &ModelPool,
) -> Result<Vec<PredictionSet<T>>, RouterError> {
    rows.iter().map(|row| predict_set(row, calib, pool)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool(k: usize) -> ModelPool {
        ModelPool::new((0..k).map(|i| format!("m{i}")).collect()).unwrap()
    }

    fn calib(lambda: f64, kind: ScoreKind, seed: u64) -> CalibrationResult<f64> {
        CalibrationResult {
            lambda_hat: lambda,
            alpha: 0.1,
            n: 100,
            kind,
            smoothing_seed: seed,
            empirical_exceedances: 0,
        }
    }

    fn smoothed_row(id: &str, s: Vec<f64>, seed: u64) -> NonconformityRow<f64> {
        NonconformityRow {
            query_id: id.into(),
            s,
            kind: ScoreKind::Gap,
            smoothing_seed: Some(seed),
        }
    }

    #[test]
    fn inclusive_threshold_and_abstain_flag() {
        let p = pool(3);
        let row = smoothed_row("q", vec![0.05, 0.3, 0.7, 0.9], 1);
        let set = predict_set(&row, &calib(0.3, ScoreKind::Gap, 1), &p).unwrap();
        assert_eq!(set.members, vec!["m0", "m1"]);
        assert!(!set.abstain);
        assert_eq!(set.real_size(&p), 2);
    }

    #[test]
    fn null_only_set_abstains() {
        let p = pool(2);
        let row = smoothed_row("q", vec![0.8, 0.9, 0.02], 1);
        let set = predict_set(&row, &calib(0.1, ScoreKind::Gap, 1), &p).unwrap();
        assert_eq!(set.members, vec!["null"]);
        assert!(set.abstain);
        assert_eq!(set.real_size(&p), 0);
    }

    #[test]
    fn empty_set_abstains() {
        let p = pool(2);
        let row = smoothed_row("q", vec![0.8, 0.9, 0.7], 1);
        let set = predict_set(&row, &calib(0.1, ScoreKind::Gap, 1), &p).unwrap();
        assert!(set.members.is_empty());
        assert!(set.abstain);
    }

    #[test]
    fn null_may_co_occur_with_real_models() {
        let p = pool(2);
        let row = smoothed_row("q", vec![0.05, 0.9, 0.08], 1);
        let set = predict_set(&row, &calib(0.1, ScoreKind::Gap, 1), &p).unwrap();
        assert_eq!(set.members, vec!["m0", "null"]);
        assert!(!set.abstain, "a real member suppresses abstention");
    }

    #[test]
    fn kind_and_smoothing_mismatches_are_errors() {
        let p = pool(1);
        let row = smoothed_row("q7", vec![0.1, 0.2], 1);
        assert!(matches!(
            predict_set(&row, &calib(0.5, ScoreKind::Prob, 1), &p),
            Err(RouterError::KindMismatch { .. })
        ));
        assert!(matches!(
            predict_set(&row, &calib(0.5, ScoreKind::Gap, 2), &p),
            Err(RouterError::SmoothingMismatch { .. })
        ));
        let unsmoothed = NonconformityRow {
            smoothing_seed: None,
            ..row
        };
        assert!(matches!(
            predict_set(&unsmoothed, &calib(0.5, ScoreKind::Gap, 1), &p),
            Err(RouterError::SmoothingMismatch { .. })
        ));
    }

    #[test]
    fn row_length_must_match_the_pool() {
        let p = pool(3);
        let row = smoothed_row("q", vec![0.1, 0.2], 1);
        assert!(matches!(
            predict_set(&row, &calib(0.5, ScoreKind::Gap, 1), &p),
            Err(RouterError::PoolMismatch { expected: 4, row_len: 2, .. })
        ));
    }

    #[test]
    fn batch_preserves_order_and_names_failing_query() {
        let p = pool(1);
        let c = calib(0.5, ScoreKind::Gap, 1);
        let rows = vec![
            smoothed_row("a", vec![0.1, 0.9], 1),
            smoothed_row("b", vec![0.9, 0.1], 1),
        ];
        let sets = route_batch(&rows, &c, &p).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].query_id, "a");
        assert_eq!(sets[1].query_id, "b");

        assert!(route_batch::<f64>(&[], &c, &p).unwrap().is_empty());

        let mixed = vec![
            smoothed_row("ok", vec![0.1, 0.9], 1),
            smoothed_row("bad", vec![0.1, 0.9], 2),
        ];
        match route_batch(&mixed, &c, &p) {
            Err(RouterError::SmoothingMismatch { query_id, .. }) => assert_eq!(query_id, "bad"),
            other => panic!("expected smoothing mismatch, got {other:?}"),
        }
    }

    #[test]
    fn wire_record_round_trips() {
        let p = pool(2);
        let row = smoothed_row("q", vec![0.05, 0.9, 0.08], 1);
        let set = predict_set(&row, &calib(0.1, ScoreKind::Gap, 1), &p).unwrap();
        let json = serde_json::to_string(&set.to_record()).unwrap();
        let back: PredictionSetRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_set(set.lambda_used), set);
    }

    proptest! {
        /// Nested family: a smaller threshold always yields a subset.
        #[test]
        fn sets_are_nested_in_lambda(
            s in proptest::collection::vec(0.0f64..=1.0, 2..9),
            l1 in 0.0f64..=1.0,
            l2 in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let p = pool(s.len() - 1);
            let row = smoothed_row("q", s, 1);
            let small = predict_set(&row, &calib(lo, ScoreKind::Gap, 1), &p).unwrap();
            let large = predict_set(&row, &calib(hi, ScoreKind::Gap, 1), &p).unwrap();
            for m in &small.members {
                prop_assert!(large.members.contains(m), "{m} lost when widening threshold");
            }
        }

        /// The miss indicator is non-increasing and right-continuous in lambda.
        #[test]
        fn miss_indicator_monotone_in_lambda(
            s in proptest::collection::vec(0.0f64..=1.0, 2..9),
            correct_mask in proptest::collection::vec(proptest::bool::ANY, 8),
        ) {
            let k = s.len() - 1;
            let p = pool(k);
            let correct: Vec<usize> = (0..k).filter(|&i| correct_mask[i]).collect();
            let null_index = k;
            let gt: Vec<usize> = if correct.is_empty() { vec![null_index] } else { correct };
            let row = smoothed_row("q", s.clone(), 1);

            let mut grid: Vec<f64> = s.clone();
            grid.push(-0.5);
            grid.push(1.5);
            grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

            let miss_at = |lambda: f64| {
                let set = predict_set(&row, &calib(lambda, ScoreKind::Gap, 1), &p).unwrap();
                let covered = gt.iter().any(|&i| {
                    let name = if i == null_index { "null".to_string() } else { format!("m{i}") };
                    set.members.contains(&name)
                });
                !covered
            };

            let mut prev = true;
            for &lambda in &grid {
                let miss = miss_at(lambda);
                prop_assert!(!(miss && !prev), "miss indicator increased at {lambda}");
                prev = miss;
            }
        }
    }
}
