//! Combining the answers of routed models into a final prediction.
//!
//! Two strategies:
//!
//! * **Majority voting** over the real members of the set, with ties between
//!   equally-voted answers broken by the higher mean router score of the
//!   models backing each answer, and residual exact ties broken by
//!   lexicographic answer order.
//! * **Weighted voting**: per-model weights (router scores or a precomputed
//!   confidence column) pass through a temperature-scaled softmax and the
//!   answer with the largest weighted mass wins. The softmax subtracts the
//!   maximum weight before exponentiating, so extreme weights cannot
//!   overflow.
//!
//! The null model never votes; a set with no real members yields an
//! abstention. [`tune_temperature`] and [`select_config`] pick the softmax
//! temperature and the `(alpha, method)` combination on validation data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{calibrate, critical_scores, CalibrationError, CalibrationResult};
use crate::dataset::{ModelPool, QueryRecord, RoutingDataset};
use crate::num::Real;
use crate::router::{route_batch, PredictionSet, RouterError};
use crate::scoring::{score_records, ScoreKind, ScoringError};

/// Errors from aggregation and configuration search.
#[derive(Debug, Error)]
pub enum AggregationError {
    #[error("query {query_id:?}: member {model:?} has no recorded answer")]
    MissingAnswer { query_id: String, model: String },

    #[error("query {query_id:?}: member {model:?} is not in the pool")]
    UnknownMember { query_id: String, model: String },

    #[error("query {query_id:?}: member {model:?} has no weight under scheme {scheme:?}")]
    MissingWeight {
        query_id: String,
        model: String,
        scheme: String,
    },

    #[error("query {query_id:?}: confidence scheme {scheme:?} is absent from the dataset")]
    MissingScheme { query_id: String, scheme: String },

    #[error("query {query_id:?}: expected {expected} weights, got {got}")]
    WeightMismatch {
        query_id: String,
        expected: usize,
        got: usize,
    },

    #[error("temperature {0} must be positive and finite")]
    InvalidTemperature(f64),

    #[error("weight {value} for model {model:?} is not finite")]
    NonFiniteWeight { model: String, value: f64 },

    #[error("temperature grid is empty")]
    EmptyGrid,

    #[error("validation set is empty")]
    EmptyValidation,

    #[error("every alpha in the grid is infeasible for n = {n} calibration records")]
    AllAlphasInfeasible { n: usize },

    #[error("scoring failed")]
    Scoring(#[from] ScoringError),

    #[error("routing failed")]
    Routing(#[from] RouterError),

    #[error("calibration failed")]
    Calibration(#[from] CalibrationError),
}

/// Where the per-model weights for weighted voting come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightScheme {
    /// The base router score of each member.
    RouterScore,
    /// A named precomputed confidence column from the dataset.
    Confidence(String),
}

impl std::fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightScheme::RouterScore => f.write_str("router_score"),
            WeightScheme::Confidence(name) => write!(f, "confidence:{name}"),
        }
    }
}

impl std::str::FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "router_score" {
            Ok(WeightScheme::RouterScore)
        } else if let Some(name) = s.strip_prefix("confidence:") {
            if name.is_empty() {
                Err("confidence scheme name is empty".into())
            } else {
                Ok(WeightScheme::Confidence(name.to_string()))
            }
        } else {
            Err(format!(
                "unknown weight scheme {s:?}, expected router_score or confidence:<name>"
            ))
        }
    }
}

impl Serialize for WeightScheme {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for WeightScheme {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A fully resolved aggregation strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AggregationConfig<T = f64> {
    Majority,
    Weighted {
        #[serde(rename = "weight_scheme")]
        scheme: WeightScheme,
        temperature: T,
    },
}

/// Final decision for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Answer(String),
    Abstain,
}

impl Decision {
    pub fn answer(&self) -> Option<&str> {
        match self {
            Decision::Answer(a) => Some(a),
            Decision::Abstain => None,
        }
    }
}

/// Aggregated outcome for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateOutcome<T = f64> {
    pub query_id: String,
    pub decision: Decision,
    /// Vote tally (majority) or normalized weighted mass per answer.
    pub votes: BTreeMap<String, T>,
    pub tie_broken: bool,
}

impl<T: Real> AggregateOutcome<T> {
    pub fn to_record(&self) -> AggregateOutcomeRecord {
        AggregateOutcomeRecord {
            id: self.query_id.clone(),
            decision: self.decision.answer().map(str::to_string),
            abstain: self.decision == Decision::Abstain,
            tie_broken: self.tie_broken,
            votes: self
                .votes
                .iter()
                .map(|(k, v)| (k.clone(), v.as_f64()))
                .collect(),
        }
    }
}

/// JSONL line format for outcomes; `decision` is null on abstention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateOutcomeRecord {
    pub id: String,
    pub decision: Option<String>,
    pub abstain: bool,
    pub tie_broken: bool,
    pub votes: BTreeMap<String, f64>,
}

/// Real members of a set resolved to `(pool index, answer)` pairs.
fn voters<'a, T: Real>(
    pset: &PredictionSet<T>,
    record: &'a QueryRecord<T>,
    pool: &ModelPool,
) -> Result<Vec<(usize, &'a str)>, AggregationError> {
    let mut out = Vec::with_capacity(pset.members.len());
    for name in pset.real_members(pool) {
        let index = pool
            .index_of(name)
            .ok_or_else(|| AggregationError::UnknownMember {
                query_id: pset.query_id.clone(),
                model: name.to_string(),
            })?;
        let answer =
            record.answers[index]
                .as_deref()
                .ok_or_else(|| AggregationError::MissingAnswer {
                    query_id: pset.query_id.clone(),
                    model: name.to_string(),
                })?;
        out.push((index, answer));
    }
    Ok(out)
}

fn abstention<T: Real>(query_id: &str) -> AggregateOutcome<T> {
    AggregateOutcome {
        query_id: query_id.to_string(),
        decision: Decision::Abstain,
        votes: BTreeMap::new(),
        tie_broken: false,
    }
}

/// Majority voting with mean-router-score tie-breaking.
pub fn aggregate_majority<T: Real>(
    pset: &PredictionSet<T>,
    record: &QueryRecord<T>,
    pool: &ModelPool,
) -> Result<AggregateOutcome<T>, AggregationError> {
    let voters = voters(pset, record, pool)?;
    if voters.is_empty() {
        return Ok(abstention(&pset.query_id));
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (index, answer) in &voters {
        groups.entry(answer).or_default().push(*index);
    }
    let max_count = groups.values().map(Vec::len).max().expect("non-empty");
    let tied: Vec<&str> = groups
        .iter()
        .filter(|(_, members)| members.len() == max_count)
        .map(|(answer, _)| *answer)
        .collect();

    let tie_broken = tied.len() > 1;
    let winner = if tie_broken {
        // Highest mean router score among the tied answers; groups iterate in
        // lexicographic order, so strict improvement keeps the smallest
        // answer on residual exact ties.
        let mut best: Option<(&str, T)> = None;
        for &answer in &tied {
            let members = &groups[answer];
            let mean = members
                .iter()
                .map(|&i| record.scores[i])
                .fold(T::zero(), |a, b| a + b)
                / T::from_usize_lossy(members.len());
            match best {
                Some((_, best_mean)) if mean <= best_mean => {}
                _ => best = Some((answer, mean)),
            }
        }
        best.expect("at least one tied answer").0
    } else {
        tied[0]
    };

    let votes = groups
        .into_iter()
        .map(|(answer, members)| (answer.to_string(), T::from_usize_lossy(members.len())))
        .collect();
    Ok(AggregateOutcome {
        query_id: pset.query_id.clone(),
        decision: Decision::Answer(winner.to_string()),
        votes,
        tie_broken,
    })
}

/// Raw weights for the real members of a set, in member order.
pub fn weights_for<T: Real>(
    pset: &PredictionSet<T>,
    record: &QueryRecord<T>,
    pool: &ModelPool,
    scheme: &WeightScheme,
) -> Result<Vec<T>, AggregationError> {
    let mut weights = Vec::new();
    for name in pset.real_members(pool) {
        let index = pool
            .index_of(name)
            .ok_or_else(|| AggregationError::UnknownMember {
                query_id: pset.query_id.clone(),
                model: name.to_string(),
            })?;
        let w = match scheme {
            WeightScheme::RouterScore => record.scores[index],
            WeightScheme::Confidence(column) => {
                let values = record.confidences.get(column).ok_or_else(|| {
                    AggregationError::MissingScheme {
                        query_id: pset.query_id.clone(),
                        scheme: column.clone(),
                    }
                })?;
                values[index].ok_or_else(|| AggregationError::MissingWeight {
                    query_id: pset.query_id.clone(),
                    model: name.to_string(),
                    scheme: column.clone(),
                })?
            }
        };
        weights.push(w);
    }
    Ok(weights)
}

/// Temperature-scaled softmax over finite weights, max-subtracted.
fn softmax<T: Real>(weights: &[T], temperature: T) -> Vec<T> {
    let max = weights
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = weights
        .iter()
        .map(|&w| ((w - max) / temperature).exp())
        .collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Weighted voting: softmax the weights, sum mass per answer, take the argmax.
///
/// `weights` must align with the real members of `pset` in member order
/// (see [`weights_for`]). Exact ties on mass are broken by lexicographic
/// answer order.
pub fn aggregate_weighted<T: Real>(
    pset: &PredictionSet<T>,
    record: &QueryRecord<T>,
    pool: &ModelPool,
    weights: &[T],
    temperature: T,
) -> Result<AggregateOutcome<T>, AggregationError> {
    if !(temperature.is_finite() && temperature > T::zero()) {
        return Err(AggregationError::InvalidTemperature(temperature.as_f64()));
    }
    let voters = voters(pset, record, pool)?;
    if voters.is_empty() {
        return Ok(abstention(&pset.query_id));
    }
    if weights.len() != voters.len() {
        return Err(AggregationError::WeightMismatch {
            query_id: pset.query_id.clone(),
            expected: voters.len(),
            got: weights.len(),
        });
    }
    for ((index, _), &w) in voters.iter().zip(weights) {
        if !w.is_finite() {
            return Err(AggregationError::NonFiniteWeight {
                model: pool.names()[*index].clone(),
                value: w.as_f64(),
            });
        }
    }

    let normalized = softmax(weights, temperature);
    let mut votes: BTreeMap<String, T> = BTreeMap::new();
    for ((_, answer), mass) in voters.iter().zip(normalized) {
        *votes.entry(answer.to_string()).or_insert_with(T::zero) += mass;
    }

    // BTreeMap iterates answers in lexicographic order; strict improvement
    // keeps the smallest answer on exact ties.
    let mut winner: Option<(&str, T)> = None;
    let mut tie_broken = false;
    for (answer, &mass) in &votes {
        match winner {
            Some((_, best)) if mass == best => tie_broken = true,
            Some((_, best)) if mass < best => {}
            _ => {
                winner = Some((answer, mass));
                tie_broken = false;
            }
        }
    }
    let winner = winner.expect("non-empty votes").0.to_string();
    Ok(AggregateOutcome {
        query_id: pset.query_id.clone(),
        decision: Decision::Answer(winner),
        votes,
        tie_broken,
    })
}

/// Apply a resolved [`AggregationConfig`] to one routed query.
pub fn aggregate<T: Real>(
    pset: &PredictionSet<T>,
    record: &QueryRecord<T>,
    pool: &ModelPool,
    config: &AggregationConfig<T>,
) -> Result<AggregateOutcome<T>, AggregationError> {
    match config {
        AggregationConfig::Majority => aggregate_majority(pset, record, pool),
        AggregationConfig::Weighted {
            scheme,
            temperature,
        } => {
            let weights = weights_for(pset, record, pool, scheme)?;
            aggregate_weighted(pset, record, pool, &weights, *temperature)
        }
    }
}

/// Pick the softmax temperature that maximizes weighted-voting accuracy on
/// the validation set; ties go to the smaller temperature.
pub fn tune_temperature<T: Real>(
    val: &RoutingDataset<T>,
    calib: &CalibrationResult<T>,
    scheme: &WeightScheme,
    grid: &[T],
) -> Result<T, AggregationError> {
    if val.is_empty() {
        return Err(AggregationError::EmptyValidation);
    }
    if grid.is_empty() {
        return Err(AggregationError::EmptyGrid);
    }
    for &t in grid {
        if !(t.is_finite() && t > T::zero()) {
            return Err(AggregationError::InvalidTemperature(t.as_f64()));
        }
    }

    let rows = score_records(val, calib.kind, calib.smoothing_seed)?;
    let psets = route_batch(&rows, calib, val.pool())?;
    let weights: Vec<Vec<T>> = psets
        .iter()
        .zip(val.records())
        .map(|(pset, record)| weights_for(pset, record, val.pool(), scheme))
        .collect::<Result<_, _>>()?;

    let mut best: Option<(T, T)> = None; // (temperature, accuracy)
    for &t in grid {
        let mut hits = 0usize;
        for ((pset, record), w) in psets.iter().zip(val.records()).zip(&weights) {
            let outcome = aggregate_weighted(pset, record, val.pool(), w, t)?;
            if outcome.decision.answer() == Some(record.gold.as_str()) {
                hits += 1;
            }
        }
        let accuracy = T::from_usize_lossy(hits) / T::from_usize_lossy(val.len());
        best = match best {
            Some((bt, ba)) if accuracy < ba || (accuracy == ba && t >= bt) => Some((bt, ba)),
            _ => Some((t, accuracy)),
        };
    }
    Ok(best.expect("grid is non-empty").0)
}

/// An aggregation strategy before temperature resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodTemplate<T = f64> {
    Majority,
    Weighted {
        scheme: WeightScheme,
        temperature_grid: Vec<T>,
    },
}

/// One evaluated cell of the configuration grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionCell<T = f64> {
    pub alpha: T,
    pub config: AggregationConfig<T>,
    pub val_accuracy: T,
}

/// Result of the `(alpha, method)` grid search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSelection<T = f64> {
    pub alpha: T,
    pub config: AggregationConfig<T>,
    pub calibration: CalibrationResult<T>,
    pub val_accuracy: T,
    pub cells: Vec<SelectionCell<T>>,
    /// Alphas below the feasibility floor `1/(n_cal+1)`, skipped with a
    /// warning rather than failing the whole search.
    pub skipped_alphas: Vec<T>,
}

/// Grid-search `(alpha, method)` on validation accuracy.
///
/// Calibrates on `cal` for every feasible alpha, evaluates every method on
/// `val` (tuning the temperature there for weighted templates), and returns
/// the accuracy-maximizing combination. Ties break toward the smaller alpha,
/// then the earlier method. `seed` drives the smoothing step.
pub fn select_config<T: Real>(
    val: &RoutingDataset<T>,
    cal: &RoutingDataset<T>,
    alpha_grid: &[T],
    methods: &[MethodTemplate<T>],
    kind: ScoreKind,
    seed: u64,
) -> Result<ConfigSelection<T>, AggregationError> {
    if alpha_grid.is_empty() || methods.is_empty() {
        return Err(AggregationError::EmptyGrid);
    }
    if val.is_empty() {
        return Err(AggregationError::EmptyValidation);
    }

    let cal_rows = score_records(cal, kind, seed)?;
    let criticals = critical_scores(&cal_rows, &cal.ground_truth_pairs())?;

    let mut cells: Vec<(usize, SelectionCell<T>)> = Vec::new();
    let mut skipped_alphas = Vec::new();
    for &alpha in alpha_grid {
        let calib = match calibrate(&criticals, alpha, kind, seed) {
            Ok(c) => c,
            Err(CalibrationError::AlphaInfeasible { .. }) => {
                skipped_alphas.push(alpha);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for (method_index, method) in methods.iter().enumerate() {
            let (config, accuracy) = match method {
                MethodTemplate::Majority => {
                    let accuracy =
                        config_accuracy(val, &calib, &AggregationConfig::Majority)?;
                    (AggregationConfig::Majority, accuracy)
                }
                MethodTemplate::Weighted {
                    scheme,
                    temperature_grid,
                } => {
                    let temperature =
                        tune_temperature(val, &calib, scheme, temperature_grid)?;
                    let config = AggregationConfig::Weighted {
                        scheme: scheme.clone(),
                        temperature,
                    };
                    let accuracy = config_accuracy(val, &calib, &config)?;
                    (config, accuracy)
                }
            };
            cells.push((
                method_index,
                SelectionCell {
                    alpha,
                    config,
                    val_accuracy: accuracy,
                },
            ));
        }
    }

    if cells.is_empty() {
        return Err(AggregationError::AllAlphasInfeasible { n: cal.len() });
    }

    let best = cells
        .iter()
        .min_by(|(mi_a, a), (mi_b, b)| {
            b.val_accuracy
                .partial_cmp(&a.val_accuracy)
                .expect("accuracies are finite")
                .then(
                    a.alpha
                        .partial_cmp(&b.alpha)
                        .expect("alphas are finite"),
                )
                .then(mi_a.cmp(mi_b))
        })
        .expect("cells is non-empty")
        .1
        .clone();

    let calibration = calibrate(&criticals, best.alpha, kind, seed)?;
    Ok(ConfigSelection {
        alpha: best.alpha,
        config: best.config.clone(),
        calibration,
        val_accuracy: best.val_accuracy,
        cells: cells.into_iter().map(|(_, c)| c).collect(),
        skipped_alphas,
    })
}

/// Accuracy of a resolved config on a dataset routed with `calib`.
/// Abstentions count as incorrect.
pub fn config_accuracy<T: Real>(
    data: &RoutingDataset<T>,
    calib: &CalibrationResult<T>,
    config: &AggregationConfig<T>,
) -> Result<T, AggregationError> {
    if data.is_empty() {
        return Err(AggregationError::EmptyValidation);
    }
    let rows = score_records(data, calib.kind, calib.smoothing_seed)?;
    let psets = route_batch(&rows, calib, data.pool())?;
    let mut hits = 0usize;
    for (pset, record) in psets.iter().zip(data.records()) {
        let outcome = aggregate(pset, record, data.pool(), config)?;
        if outcome.decision.answer() == Some(record.gold.as_str()) {
            hits += 1;
        }
    }
    Ok(T::from_usize_lossy(hits) / T::from_usize_lossy(data.len()))
}
