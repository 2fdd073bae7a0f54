//! Critical scores and finite-sample threshold calibration.
//!
//! For each calibration query the critical score is the smallest
//! non-conformity score over the augmented ground-truth set (the correct
//! models, or the null model when none is correct). The calibrated threshold
//! is the smallest candidate value whose adjusted empirical miss rate stays
//! at or below the target:
//!
//! ```text
//! lambda = inf { l : (1 + #{i : s_i > l}) / (n + 1) <= alpha }
//! ```
//!
//! The miss indicator is a right-continuous step function of the threshold,
//! so the infimum is attained at an observed critical score (or at 0) and the
//! search reduces to selecting the `ceil((n+1)(1-alpha))`-th smallest
//! critical score. Feasibility requires `alpha >= 1/(n+1)`; below that even
//! an infinite threshold cannot meet the target and calibration fails.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;
use crate::scoring::{NonconformityRow, ScoreKind};

/// Errors from the calibration stage.
#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("query {query_id:?} appears in the ground truth but has no score row")]
    MissingRow { query_id: String },

    #[error("query {query_id:?}: ground-truth index {index} out of range for {n_models} models")]
    IndexOutOfRange {
        query_id: String,
        index: usize,
        n_models: usize,
    },

    #[error("cannot calibrate on an empty set of critical scores")]
    EmptyCalibration,

    #[error("alpha {alpha} outside (0, 1)")]
    InvalidAlpha { alpha: f64 },

    #[error(
        "alpha {alpha} is infeasible for n = {n}: the minimum feasible level is 1/(n+1) = {min_feasible}"
    )]
    AlphaInfeasible {
        alpha: f64,
        n: usize,
        min_feasible: f64,
    },
}

/// Critical non-conformity score of one calibration query.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalScore<T = f64> {
    pub query_id: String,
    /// Minimum non-conformity score over the augmented ground-truth set.
    pub s_min: T,
    /// True when the query had no correct model, so the ground truth fell
    /// back to the null model.
    pub gt_was_empty: bool,
}

/// Calibrated threshold plus the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult<T = f64> {
    pub lambda_hat: T,
    pub alpha: T,
    pub n: usize,
    pub kind: ScoreKind,
    pub smoothing_seed: u64,
    /// Count of calibration queries with `s_i > lambda_hat`.
    pub empirical_exceedances: usize,
}

/// Compute critical scores from score rows and per-query ground truth.
///
/// `ground_truth` pairs each query id with the indices (pool order) of its
/// correct models; an empty index list means no model answers correctly and
/// the null-model entry is used instead.
pub fn critical_scores<T: Real>(
    rows: &[NonconformityRow<T>],
    ground_truth: &[(String, Vec<usize>)],
) -> Result<Vec<CriticalScore<T>>, CalibrationError> {
    let by_id: BTreeMap<&str, &NonconformityRow<T>> =
        rows.iter().map(|r| (r.query_id.as_str(), r)).collect();

    ground_truth
        .iter()
        .map(|(query_id, correct)| {
            let row = by_id
                .get(query_id.as_str())
                .ok_or_else(|| CalibrationError::MissingRow {
                    query_id: query_id.clone(),
                })?;
            let null_index = row.null_index();
            let gt_was_empty = correct.is_empty();
            let mut s_min = T::infinity();
            if gt_was_empty {
                s_min = row.s[null_index];
            } else {
                for &index in correct {
                    if index >= null_index {
                        return Err(CalibrationError::IndexOutOfRange {
                            query_id: query_id.clone(),
                            index,
                            n_models: null_index,
                        });
                    }
                    if row.s[index] < s_min {
                        s_min = row.s[index];
                    }
                }
            }
            Ok(CriticalScore {
                query_id: query_id.clone(),
                s_min,
                gt_was_empty,
            })
        })
        .collect()
}

/// Select the calibrated threshold for a target risk level.
///
/// `kind` and `smoothing_seed` are carried into the result so that routing
/// can verify it scores test queries through the identical pipeline.
pub fn calibrate<T: Real>(
    criticals: &[CriticalScore<T>],
    alpha: T,
    kind: ScoreKind,
    smoothing_seed: u64,
) -> Result<CalibrationResult<T>, CalibrationError> {
    let n = criticals.len();
    if n == 0 {
        return Err(CalibrationError::EmptyCalibration);
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(CalibrationError::InvalidAlpha {
            alpha: alpha.as_f64(),
        });
    }

    let mut sorted: Vec<T> = criticals.iter().map(|c| c.s_min).collect();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("critical scores are finite"));

    let np1 = T::from_usize_lossy(n + 1);
    // (1 + exceedances) / (n + 1) <= alpha, evaluated exactly as written.
    let feasible =
        |exceedances: usize| (T::one() + T::from_usize_lossy(exceedances)) / np1 <= alpha;
    let exceedances_at = |lambda: T| n - sorted.partition_point(|&s| s <= lambda);

    // Even the largest critical score leaves one phantom exceedance.
    if !feasible(0) {
        return Err(CalibrationError::AlphaInfeasible {
            alpha: alpha.as_f64(),
            n,
            min_feasible: 1.0 / (n + 1) as f64,
        });
    }

    // Candidates are the observed scores plus zero, in sorted order. The
    // miss count is non-increasing in lambda, so feasibility is monotone
    // along the candidates; binary-search the smallest feasible one. The
    // top candidate is feasible (checked above).
    let mut candidates = sorted.clone();
    let zero_pos = candidates.partition_point(|&s| s < T::zero());
    candidates.insert(zero_pos, T::zero());
    let mut lo = 0usize;
    let mut hi = candidates.len() - 1;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible(exceedances_at(candidates[mid])) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let lambda_hat = candidates[lo];

    Ok(CalibrationResult {
        lambda_hat,
        alpha,
        n,
        kind,
        smoothing_seed,
        empirical_exceedances: exceedances_at(lambda_hat),
    })
}
