//! Metrics and the Monte Carlo trial harness.
//!
//! [`evaluate`] computes the three headline metrics over a routed batch:
//! risk (fraction of queries whose set misses the augmented ground truth),
//! average set size (real models only; the null model is excluded), and
//! aggregation accuracy. [`run_trials`] repeats the whole
//! split-calibrate-route-evaluate pipeline over reshuffled
//! calibration/test partitions to estimate the distribution of those
//! metrics, and [`sweep_alpha`] crosses that over a grid of risk levels and
//! score kinds. Per-trial seeds are `base_seed + t`, so reports are
//! identical under any parallel schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{aggregate, AggregateOutcome, AggregationConfig, AggregationError};
use crate::calibration::{calibrate, critical_scores, CalibrationError, CalibrationResult};
use crate::dataset::{split, DatasetError, QueryRecord, RoutingDataset, SplitSpec};
use crate::num::Real;
use crate::rng::derive_seed;
use crate::router::{route_batch, PredictionSet, RouterError};
use crate::scoring::{score_records, ScoreKind, ScoringError};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Errors from evaluation and the trial harness.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("position {index}: prediction set for {got:?} does not match record {expected:?}")]
    Misalignment {
        index: usize,
        expected: String,
        got: String,
    },

    #[error("lengths differ: {records} records vs {sets} sets{outcomes}")]
    LengthMismatch {
        records: usize,
        sets: usize,
        outcomes: String,
    },

    #[error("nothing to evaluate")]
    Empty,

    #[error("trial harness needs at least one trial")]
    NoTrials,

    #[error("dataset error")]
    Dataset(#[from] DatasetError),

    #[error("scoring failed")]
    Scoring(#[from] ScoringError),

    #[error("calibration failed")]
    Calibration(#[from] CalibrationError),

    #[error("routing failed")]
    Routing(#[from] RouterError),

    #[error("aggregation failed")]
    Aggregation(#[from] AggregationError),
}

/// Headline metrics over one routed batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T = f64> {
    /// Fraction of queries whose set misses the augmented ground truth.
    pub risk: T,
    /// Mean number of real models per set (null model excluded).
    pub avg_size: T,
    /// Fraction of aggregated answers equal to gold; `None` when no
    /// outcomes were supplied. Abstentions count as incorrect.
    pub accuracy: Option<T>,
    /// Fraction of queries routed to no real model.
    pub abstain_rate: T,
    pub n_test: usize,
}

/// Whether a set covers the augmented ground truth of its record.
fn covers<T: Real>(pset: &PredictionSet<T>, record: &QueryRecord<T>, data: &RoutingDataset<T>) -> bool {
    let pool = data.pool();
    if record.has_correct() {
        pset.members.iter().any(|name| {
            pool.index_of(name)
                .is_some_and(|index| record.correct[index])
        })
    } else {
        // Augmented ground truth degenerates to the null model.
        pset.members.iter().any(|name| name == pool.null_id())
    }
}

/// Compute metrics for routed sets (and optional aggregated outcomes)
/// against their dataset slice. Everything must align by query id, in order.
pub fn evaluate<T: Real>(
    psets: &[PredictionSet<T>],
    data: &RoutingDataset<T>,
    outcomes: Option<&[AggregateOutcome<T>]>,
) -> Result<MetricsReport<T>, EvalError> {
    if psets.len() != data.len() || outcomes.is_some_and(|o| o.len() != data.len()) {
        return Err(EvalError::LengthMismatch {
            records: data.len(),
            sets: psets.len(),
            outcomes: match outcomes {
                Some(o) => format!(" vs {} outcomes", o.len()),
                None => String::new(),
            },
        });
    }
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    for (index, (pset, record)) in psets.iter().zip(data.records()).enumerate() {
        if pset.query_id != record.id {
            return Err(EvalError::Misalignment {
                index,
                expected: record.id.clone(),
                got: pset.query_id.clone(),
            });
        }
        if let Some(outcomes) = outcomes {
            if outcomes[index].query_id != record.id {
                return Err(EvalError::Misalignment {
                    index,
                    expected: record.id.clone(),
                    got: outcomes[index].query_id.clone(),
                });
            }
        }
    }

    let n = data.len();
    let n_t = T::from_usize_lossy(n);
    let mut misses = 0usize;
    let mut abstains = 0usize;
    let mut size_sum = 0usize;
    for (pset, record) in psets.iter().zip(data.records()) {
        if !covers(pset, record, data) {
            misses += 1;
        }
        if pset.abstain {
            abstains += 1;
        }
        size_sum += pset.real_size(data.pool());
    }
    let accuracy = outcomes.map(|outcomes| {
        let hits = outcomes
            .iter()
            .zip(data.records())
            .filter(|(o, r)| o.decision.answer() == Some(r.gold.as_str()))
            .count();
        T::from_usize_lossy(hits) / n_t
    });

    Ok(MetricsReport {
        risk: T::from_usize_lossy(misses) / n_t,
        avg_size: T::from_usize_lossy(size_sum) / n_t,
        accuracy,
        abstain_rate: T::from_usize_lossy(abstains) / n_t,
        n_test: n,
    })
}

/// Distribution of per-trial metrics for one `(alpha, kind)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport<T = f64> {
    pub alpha: T,
    pub kind: ScoreKind,
    pub n_trials: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub risks: Vec<T>,
    pub sizes: Vec<T>,
    pub accuracies: Option<Vec<T>>,
    pub mean_risk: T,
    pub sd_risk: T,
    pub mean_size: T,
    pub sd_size: T,
    /// Finite-sample floor on the expected risk: `alpha - 2/(n_cal + 1)`.
    pub lower_bound: T,
}

impl<T: Real> TrialReport<T> {
    /// Standard error of the trial-mean risk.
    pub fn se_risk(&self) -> T {
        self.sd_risk / T::from_usize_lossy(self.n_trials).sqrt()
    }

    /// Standard error of the trial-mean size.
    pub fn se_size(&self) -> T {
        self.sd_size / T::from_usize_lossy(self.n_trials).sqrt()
    }
}

/// Sample mean and (n-1)-denominator standard deviation; sd is 0 for n <= 1.
fn mean_sd<T: Real>(xs: &[T]) -> (T, T) {
    let n = xs.len();
    let n_t = T::from_usize_lossy(n);
    let mean = xs.iter().copied().sum::<T>() / n_t;
    if n <= 1 {
        return (mean, T::zero());
    }
    let ss = xs
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .sum::<T>();
    (mean, (ss / (n_t - T::one())).sqrt())
}

/// Run the full pipeline over `n_trials` reshuffled calibration/test
/// partitions.
///
/// The validation slice of `split_spec` is held out once, before any trial;
/// trials reshuffle only the remaining records, preserving the calibration
/// and test sizes of the initial split. Trial `t` uses seed
/// `base_seed + t` for its shuffle and a sub-seed derived from it for
/// smoothing, so the report is bit-identical under any execution order.
pub fn run_trials<T: Real>(
    dataset: &RoutingDataset<T>,
    alpha: T,
    kind: ScoreKind,
    n_trials: usize,
    split_spec: &SplitSpec,
    base_seed: u64,
    agg: Option<&AggregationConfig<T>>,
) -> Result<TrialReport<T>, EvalError> {
    if n_trials == 0 {
        return Err(EvalError::NoTrials);
    }
    let (cal0, _val, test0) = split(dataset, split_spec)?;
    let n_cal = cal0.len();
    let n_test = test0.len();
    if n_cal == 0 || n_test == 0 {
        return Err(EvalError::Dataset(DatasetError::DegenerateSplit {
            part: if n_cal == 0 { "calibration" } else { "test" },
            frac: 0.0,
            n: dataset.len(),
        }));
    }
    // Same feasibility rule as calibration, checked before any work.
    let np1 = T::from_usize_lossy(n_cal + 1);
    if T::one() / np1 > alpha {
        return Err(EvalError::Calibration(CalibrationError::AlphaInfeasible {
            alpha: alpha.as_f64(),
            n: n_cal,
            min_feasible: 1.0 / (n_cal + 1) as f64,
        }));
    }

    let pool = dataset.pool().clone();
    let mut trial_records: Vec<QueryRecord<T>> =
        Vec::with_capacity(n_cal + n_test);
    trial_records.extend(cal0.records().iter().cloned());
    trial_records.extend(test0.records().iter().cloned());

    let reports: Vec<MetricsReport<T>> = (0..n_trials)
        .into_par_iter()
        .map(|t| -> Result<MetricsReport<T>, EvalError> {
            let trial_seed = base_seed.wrapping_add(t as u64);
            let smoothing_seed = derive_seed(trial_seed, "smooth");

            let mut order: Vec<usize> = (0..trial_records.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            order.shuffle(&mut rng);
            let gather = |idx: &[usize]| {
                RoutingDataset::from_parts_unchecked(
                    pool.clone(),
                    idx.iter().map(|&i| trial_records[i].clone()).collect(),
                )
            };
            let cal = gather(&order[..n_cal]);
            let test = gather(&order[n_cal..]);

            let cal_rows = score_records(&cal, kind, smoothing_seed)?;
            let criticals = critical_scores(&cal_rows, &cal.ground_truth_pairs())?;
            let calib = calibrate(&criticals, alpha, kind, smoothing_seed)?;

            let test_rows = score_records(&test, kind, smoothing_seed)?;
            let psets = route_batch(&test_rows, &calib, test.pool())?;
            let outcomes = match agg {
                Some(config) => Some(
                    psets
                        .iter()
                        .zip(test.records())
                        .map(|(pset, record)| aggregate(pset, record, test.pool(), config))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                None => None,
            };
            evaluate(&psets, &test, outcomes.as_deref())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let risks: Vec<T> = reports.iter().map(|r| r.risk).collect();
    let sizes: Vec<T> = reports.iter().map(|r| r.avg_size).collect();
    let accuracies: Option<Vec<T>> = agg.map(|_| {
        reports
            .iter()
            .map(|r| r.accuracy.expect("aggregation was requested"))
            .collect()
    });
    let (mean_risk, sd_risk) = mean_sd(&risks);
    let (mean_size, sd_size) = mean_sd(&sizes);
    let two = T::from_usize_lossy(2);

    Ok(TrialReport {
        alpha,
        kind,
        n_trials,
        n_cal,
        n_test,
        risks,
        sizes,
        accuracies,
        mean_risk,
        sd_risk,
        mean_size,
        sd_size,
        lower_bound: alpha - two / np1,
    })
}

/// Cross `alphas` and `kinds`, running the trial harness for every cell.
///
/// All alphas must be feasible for the implied calibration size. Cells share
/// the same per-trial seeds, so partitions are paired across cells.
pub fn sweep_alpha<T: Real>(
    dataset: &RoutingDataset<T>,
    alphas: &[T],
    kinds: &[ScoreKind],
    n_trials: usize,
    split_spec: &SplitSpec,
    seed: u64,
) -> Result<Vec<TrialReport<T>>, EvalError> {
    if alphas.is_empty() || kinds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut table = Vec::with_capacity(alphas.len() * kinds.len());
    for &kind in kinds {
        for &alpha in alphas {
            table.push(run_trials(
                dataset, alpha, kind, n_trials, split_spec, seed, None,
            )?);
        }
    }
    Ok(table)
}

/// Accuracy and inference-cost comparison against calling every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleComparison<T = f64> {
    pub racer_accuracy: T,
    pub full_accuracy: T,
    /// Total real-model invocations under routed sets.
    pub racer_calls: usize,
    /// Total invocations when every model answers every query (`N * K`).
    pub full_calls: usize,
    pub calls_saved_frac: T,
}

/// Aggregate once over routed sets and once over the full pool, with the
/// same configuration, and report both accuracies and the calls saved.
pub fn compare_full_ensemble<T: Real>(
    dataset: &RoutingDataset<T>,
    calib: &CalibrationResult<T>,
    agg: &AggregationConfig<T>,
) -> Result<EnsembleComparison<T>, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Empty);
    }
    let pool = dataset.pool();
    let rows = score_records(dataset, calib.kind, calib.smoothing_seed)?;
    let psets = route_batch(&rows, calib, pool)?;

    let mut racer_calls = 0usize;
    let mut racer_hits = 0usize;
    let mut full_hits = 0usize;
    for (pset, record) in psets.iter().zip(dataset.records()) {
        racer_calls += pset.real_size(pool);
        let routed = aggregate(pset, record, pool, agg)?;
        if routed.decision.answer() == Some(record.gold.as_str()) {
            racer_hits += 1;
        }

        let everyone = PredictionSet {
            query_id: record.id.clone(),
            members: pool.names().to_vec(),
            abstain: false,
            lambda_used: T::infinity(),
        };
        let full = aggregate(&everyone, record, pool, agg)?;
        if full.decision.answer() == Some(record.gold.as_str()) {
            full_hits += 1;
        }
    }

    let n = T::from_usize_lossy(dataset.len());
    let full_calls = dataset.len() * pool.len();
    Ok(EnsembleComparison {
        racer_accuracy: T::from_usize_lossy(racer_hits) / n,
        full_accuracy: T::from_usize_lossy(full_hits) / n,
        racer_calls,
        full_calls,
        calls_saved_frac: T::one()
            - T::from_usize_lossy(racer_calls) / T::from_usize_lossy(full_calls),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::Decision;
    use crate::dataset::{synthesize, ModelPool};
    use std::collections::BTreeMap;

    fn pool2() -> ModelPool {
        ModelPool::new(vec!["m0".into(), "m1".into()]).unwrap()
    }

    fn record(id: &str, correct: Vec<bool>, gold: &str) -> QueryRecord<f64> {
        let k = correct.len();
        QueryRecord {
            id: id.into(),
            scores: vec![0.5; k],
            correct,
            answers: vec![Some("a".into()); k],
            gold: gold.into(),
            confidences: BTreeMap::new(),
        }
    }

    fn pset(id: &str, members: &[&str]) -> PredictionSet<f64> {
        PredictionSet {
            query_id: id.into(),
            members: members.iter().map(|s| s.to_string()).collect(),
            abstain: !members.iter().any(|&m| m != "null"),
            lambda_used: 0.5,
        }
    }

    fn outcome(id: &str, decision: Decision) -> AggregateOutcome<f64> {
        AggregateOutcome {
            query_id: id.into(),
            decision,
            votes: BTreeMap::new(),
            tie_broken: false,
        }
    }

    #[test]
    fn risk_counts_misses() {
        let data = RoutingDataset::new(
            pool2(),
            vec![
                record("a", vec![true, false], "g"),
                record("b", vec![false, true], "g"),
                record("c", vec![true, true], "g"),
            ],
        )
        .unwrap();
        let sets = vec![
            pset("a", &["m0"]),        // covers
            pset("b", &["m0"]),        // misses (m1 is the correct one)
            pset("c", &["m1", "null"]), // covers
        ];
        let report = evaluate(&sets, &data, None).unwrap();
        assert!((report.risk - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.accuracy, None);
        assert_eq!(report.n_test, 3);
    }

    #[test]
    fn avg_size_excludes_null() {
        let data = RoutingDataset::new(
            pool2(),
            vec![
                record("a", vec![true, false], "g"),
                record("b", vec![true, false], "g"),
            ],
        )
        .unwrap();
        let sets = vec![pset("a", &["m0", "null"]), pset("b", &["m0", "m1"])];
        let report = evaluate(&sets, &data, None).unwrap();
        assert!((report.avg_size - 1.5).abs() < 1e-12);
    }

    #[test]
    fn accuracy_counts_gold_matches_and_abstentions_fail() {
        let data = RoutingDataset::new(
            pool2(),
            vec![
                record("a", vec![true, false], "g"),
                record("b", vec![true, false], "g"),
            ],
        )
        .unwrap();
        let sets = vec![pset("a", &["m0"]), pset("b", &["null"])];
        let outcomes = vec![
            outcome("a", Decision::Answer("g".into())),
            outcome("b", Decision::Abstain),
        ];
        let report = evaluate(&sets, &data, Some(&outcomes)).unwrap();
        assert_eq!(report.accuracy, Some(0.5));
        assert_eq!(report.abstain_rate, 0.5);
    }

    #[test]
    fn covering_the_null_model_is_zero_loss_on_empty_ground_truth() {
        let data = RoutingDataset::new(
            pool2(),
            vec![
                record("a", vec![false, false], "g"),
                record("b", vec![false, false], "g"),
            ],
        )
        .unwrap();
        let sets = vec![pset("a", &["null"]), pset("b", &["m0"])];
        let report = evaluate(&sets, &data, None).unwrap();
        // "a" covers (null is the augmented truth); "b" misses it.
        assert_eq!(report.risk, 0.5);
    }

    #[test]
    fn misalignment_is_detected() {
        let data = RoutingDataset::new(pool2(), vec![record("a", vec![true, false], "g")]).unwrap();
        let sets = vec![pset("zzz", &["m0"])];
        assert!(matches!(
            evaluate(&sets, &data, None),
            Err(EvalError::Misalignment { .. })
        ));
        let err = evaluate::<f64>(&[], &data, None).unwrap_err();
        assert!(matches!(err, EvalError::LengthMismatch { .. }));
    }

    #[test]
    fn risk_is_exactly_one_minus_coverage() {
        let data = synthesize::<f64>(150, 3, &[0.6, 0.4, 0.2], 2.0, None, 12).unwrap();
        let rows = score_records(&data, ScoreKind::Prob, 2).unwrap();
        let criticals = critical_scores(&rows, &data.ground_truth_pairs()).unwrap();
        let calib = calibrate(&criticals, 0.25, ScoreKind::Prob, 2).unwrap();
        let sets = route_batch(&rows, &calib, data.pool()).unwrap();
        let report = evaluate(&sets, &data, None).unwrap();

        let cover_count = sets
            .iter()
            .zip(data.records())
            .filter(|(p, r)| covers(p, r, &data))
            .count();
        let coverage = cover_count as f64 / data.len() as f64;
        assert_eq!(report.risk, 1.0 - coverage);
    }

    #[test]
    fn evaluate_is_permutation_invariant() {
        let data = synthesize::<f64>(40, 3, &[0.7, 0.5, 0.2], 2.0, None, 3).unwrap();
        let rows = score_records(&data, ScoreKind::Gap, 5).unwrap();
        let criticals = critical_scores(&rows, &data.ground_truth_pairs()).unwrap();
        let calib = calibrate(&criticals, 0.3, ScoreKind::Gap, 5).unwrap();
        let sets = route_batch(&rows, &calib, data.pool()).unwrap();
        let base = evaluate(&sets, &data, None).unwrap();

        let mut indices: Vec<usize> = (0..data.len()).collect();
        indices.reverse();
        indices.swap(0, 7);
        let permuted_data = RoutingDataset::from_parts_unchecked(
            data.pool().clone(),
            indices.iter().map(|&i| data.records()[i].clone()).collect(),
        );
        let permuted_sets: Vec<_> = indices.iter().map(|&i| sets[i].clone()).collect();
        let permuted = evaluate(&permuted_sets, &permuted_data, None).unwrap();
        assert_eq!(base, permuted);
    }

    fn spec(seed: u64) -> SplitSpec {
        SplitSpec::new(0.5, 0.0, 0.5, seed).unwrap()
    }

    #[test]
    fn single_trial_report_is_degenerate() {
        let data = synthesize::<f64>(200, 3, &[0.8, 0.5, 0.3], 2.0, None, 1).unwrap();
        let report =
            run_trials(&data, 0.2, ScoreKind::Gap, 1, &spec(4), 100, None).unwrap();
        assert_eq!(report.n_trials, 1);
        assert_eq!(report.risks.len(), 1);
        assert_eq!(report.mean_risk, report.risks[0]);
        assert_eq!(report.sd_risk, 0.0);
        assert!(report.accuracies.is_none());
    }

    #[test]
    fn trial_reports_are_deterministic() {
        let data = synthesize::<f64>(300, 3, &[0.8, 0.5, 0.3], 2.0, None, 1).unwrap();
        let a = run_trials(&data, 0.2, ScoreKind::Prob, 10, &spec(4), 7, None).unwrap();
        let b = run_trials(&data, 0.2, ScoreKind::Prob, 10, &spec(4), 7, None).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn trial_stats_match_their_lists() {
        let data = synthesize::<f64>(300, 2, &[0.7, 0.4], 2.0, None, 2).unwrap();
        let report = run_trials(&data, 0.2, ScoreKind::Gap, 16, &spec(9), 3, None).unwrap();
        let (mean, sd) = mean_sd(&report.risks);
        assert!((report.mean_risk - mean).abs() < 1e-9);
        assert!((report.sd_risk - sd).abs() < 1e-9);
        assert_eq!(report.lower_bound, 0.2 - 2.0 / (report.n_cal as f64 + 1.0));
    }

    #[test]
    fn infeasible_alpha_fails_before_running() {
        let data = synthesize::<f64>(40, 2, &[0.7, 0.4], 2.0, None, 2).unwrap();
        // n_cal = 20, so alpha must be at least 1/21.
        let err = run_trials(&data, 0.01, ScoreKind::Gap, 4, &spec(9), 3, None).unwrap_err();
        assert!(matches!(
            err,
            EvalError::Calibration(CalibrationError::AlphaInfeasible { .. })
        ));
    }

    #[test]
    fn trial_mean_risk_respects_finite_sample_bounds() {
        // Small-scale version of the acceptance check: the finite-sample bounds
        // are the oracle for the harness.
        let data = synthesize::<f64>(800, 4, &[0.85, 0.6, 0.45, 0.25], 2.0, None, 13).unwrap();
        let report = run_trials(&data, 0.15, ScoreKind::Gap, 30, &spec(5), 11, None).unwrap();
        let se = report.se_risk();
        let upper = 0.15 + 3.0 * se;
        let lower = report.lower_bound - 3.0 * se;
        assert!(
            report.mean_risk <= upper && report.mean_risk >= lower,
            "mean risk {} outside [{lower}, {upper}]",
            report.mean_risk
        );
    }

    #[test]
    fn aggregated_trials_fill_accuracies() {
        let data = synthesize::<f64>(240, 3, &[0.9, 0.6, 0.3], 3.0, None, 21).unwrap();
        let report = run_trials(
            &data,
            0.2,
            ScoreKind::Gap,
            5,
            &spec(2),
            17,
            Some(&AggregationConfig::Majority),
        )
        .unwrap();
        let accs = report.accuracies.expect("aggregation requested");
        assert_eq!(accs.len(), 5);
        for a in accs {
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn sweep_emits_one_row_per_cell() {
        let data = synthesize::<f64>(200, 2, &[0.8, 0.5], 2.0, None, 8).unwrap();
        let table = sweep_alpha(
            &data,
            &[0.15, 0.3],
            &[ScoreKind::Gap, ScoreKind::Prob],
            3,
            &spec(6),
            19,
        )
        .unwrap();
        assert_eq!(table.len(), 4);
        assert_eq!(table[0].kind, ScoreKind::Gap);
        assert_eq!(table[3].kind, ScoreKind::Prob);

        let single = sweep_alpha(&data, &[0.3], &[ScoreKind::Gap], 2, &spec(6), 19).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn full_ensemble_comparison_degenerates_when_sets_cover_everything() {
        let data = synthesize::<f64>(100, 3, &[0.9, 0.8, 0.7], 2.0, None, 31).unwrap();
        // A threshold above every possible score forces every set to be M'.
        let calib = CalibrationResult {
            lambda_hat: 2.0,
            alpha: 0.5,
            n: 100,
            kind: ScoreKind::Prob,
            smoothing_seed: 3,
            empirical_exceedances: 0,
        };
        let cmp =
            compare_full_ensemble(&data, &calib, &AggregationConfig::Majority).unwrap();
        assert_eq!(cmp.racer_calls, cmp.full_calls);
        assert_eq!(cmp.calls_saved_frac, 0.0);
        assert_eq!(cmp.racer_accuracy, cmp.full_accuracy);
    }

    #[test]
    fn calls_saved_fraction_matches_sizes() {
        let data = synthesize::<f64>(400, 7, &[0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3], 4.0, None, 31)
            .unwrap();
        let rows = score_records(&data, ScoreKind::Prob, 3).unwrap();
        let criticals = critical_scores(&rows, &data.ground_truth_pairs()).unwrap();
        let calib = calibrate(&criticals, 0.1, ScoreKind::Prob, 3).unwrap();
        let cmp =
            compare_full_ensemble(&data, &calib, &AggregationConfig::Majority).unwrap();
        let expected = 1.0 - cmp.racer_calls as f64 / cmp.full_calls as f64;
        assert!((cmp.calls_saved_frac - expected).abs() < 1e-12);
        assert_eq!(cmp.full_calls, 400 * 7);
        assert!((0.0..=1.0).contains(&cmp.calls_saved_frac));
    }
}
