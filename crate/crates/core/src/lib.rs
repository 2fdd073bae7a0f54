//! Calibrated set-valued model routing with finite-sample risk control.
//!
//! Given per-query scores from any base router over a pool of models, this
//! crate turns single-model selection into calibrated set prediction: it
//! augments the pool with a virtual null model so abstention is expressible,
//! converts scores into non-conformity scores, calibrates a threshold on
//! labeled data so that the probability of routing past every correct model
//! stays below a user-chosen level, and aggregates the answers of the
//! selected models by majority or temperature-weighted voting. A Monte Carlo
//! harness verifies the finite-sample risk bounds empirically on any
//! exchangeable dataset.
//!
//! The numeric core is generic over the scalar type via [`num::Real`]
//! (`f32` or `f64`); all file formats and the CLI use [`Scalar`] = `f64`.
//!
//! # Pipeline sketch
//!
//! ```
//! use racer_core::dataset::{synthesize, split, SplitSpec};
//! use racer_core::scoring::{score_records, ScoreKind};
//! use racer_core::calibration::{calibrate, critical_scores};
//! use racer_core::router::route_batch;
//!
//! let data = synthesize::<f64>(200, 3, &[0.8, 0.6, 0.4], 2.0, None, 7).unwrap();
//! let spec = SplitSpec::new(0.5, 0.0, 0.5, 7).unwrap();
//! let (cal, _val, test) = split(&data, &spec).unwrap();
//!
//! let seed = 42;
//! let cal_rows = score_records(&cal, ScoreKind::Gap, seed).unwrap();
//! let criticals = critical_scores(&cal_rows, &cal.ground_truth_pairs()).unwrap();
//! let calib = calibrate(&criticals, 0.2, ScoreKind::Gap, seed).unwrap();
//!
//! let test_rows = score_records(&test, ScoreKind::Gap, seed).unwrap();
//! let sets = route_batch(&test_rows, &calib, test.pool()).unwrap();
//! assert_eq!(sets.len(), test.len());
//! ```

pub mod aggregation;
pub mod calibration;
pub mod canonical;
pub mod dataset;
pub mod evaluation;
pub mod num;
pub mod rng;
pub mod router;
pub mod scoring;

pub use num::Real;

/// Scalar used by every file format and the CLI (JSON numbers are doubles).
pub type Scalar = f64;

/// Double-precision instantiations of the pipeline types, matching the
/// on-disk formats. The underlying types default to `f64` as well; these
/// aliases just give the concrete forms a stable name.
pub type Dataset = dataset::RoutingDataset<Scalar>;
pub type Calibration = calibration::CalibrationResult<Scalar>;
pub type Set = router::PredictionSet<Scalar>;
pub type Outcome = aggregation::AggregateOutcome<Scalar>;
pub type Metrics = evaluation::MetricsReport<Scalar>;
pub type Trials = evaluation::TrialReport<Scalar>;
