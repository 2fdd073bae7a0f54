//! Dataset file formats.
//!
//! JSONL is the primary format, one record per line:
//!
//! ```json
//! {"id": "q0", "scores": {"A": 0.9, "B": 0.3}, "correct_models": ["A"],
//!  "answers": {"A": "4", "B": "5"}, "gold": "4",
//!  "confidences": {"ptrue": {"A": 0.8, "B": 0.2}}}
//! ```
//!
//! The `confidences` field is optional. The model pool is the lexicographically
//! sorted key set of the first record's `scores`; every later record must use
//! exactly the same keys.
//!
//! The CSV alternative uses columns `id`, `score:<model>…`, `correct:<model>`
//! (0/1)…, optional `answer:<model>…`, and `gold`; pool order follows the
//! column order of the header.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, ModelPool, QueryRecord, RoutingDataset};
use crate::canonical::to_canonical_string;
use crate::num::Real;

/// Supported dataset file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Jsonl,
    Csv,
}

/// Loader options.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub format: DataFormat,
    /// Min-max rescale all scores into `[0, 1]` (global over the dataset)
    /// instead of rejecting out-of-range values. Off by default: scores are
    /// required to arrive in `[0, 1]` and are never silently rescaled.
    pub normalize_scores: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            format: DataFormat::Jsonl,
            normalize_scores: false,
        }
    }
}

/// Wire form of one JSONL record.
#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    scores: BTreeMap<String, f64>,
    correct_models: Vec<String>,
    answers: BTreeMap<String, String>,
    gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidences: Option<BTreeMap<String, BTreeMap<String, f64>>>,
}

/// Load and validate a routing dataset from a file.
pub fn load_dataset<T: Real>(
    path: &Path,
    options: &LoadOptions,
) -> Result<RoutingDataset<T>, DatasetError> {
    let file = File::open(path)?;
    match options.format {
        DataFormat::Jsonl => read_jsonl(BufReader::new(file), options),
        DataFormat::Csv => read_csv(BufReader::new(file), options),
    }
}

/// Parse JSONL records from any buffered reader.
pub fn read_jsonl<T: Real>(
    reader: impl BufRead,
    options: &LoadOptions,
) -> Result<RoutingDataset<T>, DatasetError> {
    let mut raws: Vec<(usize, RawRecord)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // Two-stage parse so malformed JSON and schema violations are
        // reported as distinct errors.
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        let raw: RawRecord = serde_json::from_value(value).map_err(|e| DatasetError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        raws.push((line_no, raw));
    }
    assemble(raws, options)
}

fn read_csv<T: Real>(
    reader: impl BufRead,
    options: &LoadOptions,
) -> Result<RoutingDataset<T>, DatasetError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = match csv_reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            return Err(DatasetError::Parse {
                line: 1,
                message: e.to_string(),
            })
        }
    };
    if headers.is_empty() {
        return empty_dataset();
    }

    let mut score_cols: Vec<(usize, String)> = Vec::new();
    let mut correct_cols: BTreeMap<String, usize> = BTreeMap::new();
    let mut answer_cols: BTreeMap<String, usize> = BTreeMap::new();
    let mut id_col = None;
    let mut gold_col = None;
    for (idx, name) in headers.iter().enumerate() {
        if let Some(model) = name.strip_prefix("score:") {
            score_cols.push((idx, model.to_string()));
        } else if let Some(model) = name.strip_prefix("correct:") {
            correct_cols.insert(model.to_string(), idx);
        } else if let Some(model) = name.strip_prefix("answer:") {
            answer_cols.insert(model.to_string(), idx);
        } else if name == "id" {
            id_col = Some(idx);
        } else if name == "gold" {
            gold_col = Some(idx);
        } else {
            return Err(DatasetError::Schema {
                line: 1,
                message: format!("unrecognized column {name:?}"),
            });
        }
    }
    let id_col = id_col.ok_or_else(|| DatasetError::Schema {
        line: 1,
        message: "missing column `id`".into(),
    })?;
    let gold_col = gold_col.ok_or_else(|| DatasetError::Schema {
        line: 1,
        message: "missing column `gold`".into(),
    })?;
    if score_cols.is_empty() {
        return Err(DatasetError::Schema {
            line: 1,
            message: "no `score:<model>` columns".into(),
        });
    }
    for (_, model) in &score_cols {
        if !correct_cols.contains_key(model) {
            return Err(DatasetError::Schema {
                line: 1,
                message: format!("missing column `correct:{model}`"),
            });
        }
    }

    let mut raws: Vec<(usize, RawRecord)> = Vec::new();
    for row in csv_reader.records() {
        let row = row.map_err(|e| DatasetError::Parse {
            line: e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(0),
            message: e.to_string(),
        })?;
        let line_no = row
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(raws.len() + 2);
        let field = |idx: usize| row.get(idx).unwrap_or("").to_string();

        let mut scores = BTreeMap::new();
        let mut correct_models = Vec::new();
        let mut answers = BTreeMap::new();
        for (col, model) in &score_cols {
            let text = field(*col);
            let value: f64 = text.parse().map_err(|_| DatasetError::Parse {
                line: line_no,
                message: format!("score:{model} value {text:?} is not a number"),
            })?;
            scores.insert(model.clone(), value);
            match field(correct_cols[model]).as_str() {
                "1" => correct_models.push(model.clone()),
                "0" => {}
                other => {
                    return Err(DatasetError::Schema {
                        line: line_no,
                        message: format!("correct:{model} value {other:?} must be 0 or 1"),
                    })
                }
            }
            if let Some(&a_col) = answer_cols.get(model) {
                answers.insert(model.clone(), field(a_col));
            }
        }
        raws.push((
            line_no,
            RawRecord {
                id: field(id_col),
                scores,
                correct_models,
                answers,
                gold: field(gold_col),
                confidences: None,
            },
        ));
    }
    // CSV pool order follows the header, so bypass the sorted-key path.
    let pool_names: Vec<String> = score_cols.into_iter().map(|(_, m)| m).collect();
    assemble_with_pool(pool_names, raws, options)
}

fn empty_dataset<T: Real>() -> Result<RoutingDataset<T>, DatasetError> {
    Ok(RoutingDataset::from_parts_unchecked(
        ModelPool::empty(),
        Vec::new(),
    ))
}

fn assemble<T: Real>(
    raws: Vec<(usize, RawRecord)>,
    options: &LoadOptions,
) -> Result<RoutingDataset<T>, DatasetError> {
    let Some((first_line, first)) = raws.first() else {
        return empty_dataset();
    };
    // Pool order: lexicographically sorted keys of the first record's scores.
    let pool_names: Vec<String> = first.scores.keys().cloned().collect();
    if pool_names.is_empty() {
        return Err(DatasetError::Schema {
            line: *first_line,
            message: format!("record {:?} has no scores", first.id),
        });
    }
    assemble_with_pool(pool_names, raws, options)
}

fn assemble_with_pool<T: Real>(
    pool_names: Vec<String>,
    raws: Vec<(usize, RawRecord)>,
    options: &LoadOptions,
) -> Result<RoutingDataset<T>, DatasetError> {
    if raws.is_empty() {
        return empty_dataset();
    }
    let first_line = raws[0].0;
    let pool = ModelPool::new(pool_names).map_err(|e| DatasetError::Schema {
        line: first_line,
        message: e.to_string(),
    })?;

    let mut scores_f64: Vec<Vec<f64>> = Vec::with_capacity(raws.len());
    let mut partials: Vec<(usize, RawRecord)> = Vec::with_capacity(raws.len());
    for (line, raw) in raws {
        if raw.scores.len() != pool.len() {
            return Err(DatasetError::Schema {
                line,
                message: format!(
                    "record {:?} has {} scores, expected {} (pool is fixed by the first record)",
                    raw.id,
                    raw.scores.len(),
                    pool.len()
                ),
            });
        }
        let mut row = Vec::with_capacity(pool.len());
        for name in pool.names() {
            match raw.scores.get(name) {
                Some(&v) => row.push(v),
                None => {
                    return Err(DatasetError::Schema {
                        line,
                        message: format!("record {:?} is missing a score for model {name:?}", raw.id),
                    })
                }
            }
        }
        scores_f64.push(row);
        partials.push((line, raw));
    }

    if options.normalize_scores {
        min_max_rescale(&mut scores_f64);
    }

    let mut records = Vec::with_capacity(partials.len());
    for ((line, raw), row) in partials.into_iter().zip(scores_f64) {
        let schema = |message: String| DatasetError::Schema { line, message };

        let mut correct = vec![false; pool.len()];
        for name in &raw.correct_models {
            let idx = pool
                .index_of(name)
                .ok_or_else(|| schema(format!("unknown model {name:?} in correct_models")))?;
            correct[idx] = true;
        }

        let mut answers: Vec<Option<String>> = vec![None; pool.len()];
        for (name, answer) in raw.answers {
            let idx = pool
                .index_of(&name)
                .ok_or_else(|| schema(format!("unknown model {name:?} in answers")))?;
            answers[idx] = Some(answer);
        }

        let mut confidences = BTreeMap::new();
        for (scheme, by_model) in raw.confidences.unwrap_or_default() {
            let mut aligned: Vec<Option<T>> = vec![None; pool.len()];
            for (name, value) in by_model {
                let idx = pool.index_of(&name).ok_or_else(|| {
                    schema(format!("unknown model {name:?} in confidences/{scheme}"))
                })?;
                aligned[idx] = Some(T::from_f64_lossy(value));
            }
            confidences.insert(scheme, aligned);
        }

        records.push(QueryRecord {
            id: raw.id,
            scores: row.into_iter().map(T::from_f64_lossy).collect(),
            correct,
            answers,
            gold: raw.gold,
            confidences,
        });
    }

    // Full invariant validation (score ranges, unique ids) happens here.
    // Positions in these errors are record indices, not file lines; the
    // message names the record id either way.
    RoutingDataset::new(pool, records)
}

fn min_max_rescale(scores: &mut [Vec<f64>]) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in scores.iter() {
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return; // non-finite values fail validation downstream
    }
    let span = hi - lo;
    for row in scores.iter_mut() {
        for v in row.iter_mut() {
            *v = if span > 0.0 { (*v - lo) / span } else { 0.5 };
        }
    }
}

/// Serialize a dataset as canonical JSONL (sorted keys, fixed float width).
///
/// The rendering is byte-deterministic: equal datasets always produce equal
/// bytes, which is what makes synthetic datasets hashable and reproducible.
pub fn write_jsonl<T: Real>(
    dataset: &RoutingDataset<T>,
    writer: &mut impl Write,
) -> Result<(), DatasetError> {
    for record in dataset.records() {
        let raw = to_raw(dataset.pool(), record);
        let line = to_canonical_string(&raw).map_err(|e| DatasetError::Schema {
            line: 0,
            message: format!("serialization failed: {e}"),
        })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

fn to_raw<T: Real>(pool: &ModelPool, record: &QueryRecord<T>) -> RawRecord {
    let names = pool.names();
    let scores = names
        .iter()
        .zip(&record.scores)
        .map(|(n, s)| (n.clone(), s.as_f64()))
        .collect();
    let correct_models = record
        .correct
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c)
        .map(|(i, _)| names[i].clone())
        .collect();
    let answers = names
        .iter()
        .zip(&record.answers)
        .filter_map(|(n, a)| a.as_ref().map(|a| (n.clone(), a.clone())))
        .collect();
    let confidences = if record.confidences.is_empty() {
        None
    } else {
        Some(
            record
                .confidences
                .iter()
                .map(|(scheme, values)| {
                    let by_model = names
                        .iter()
                        .zip(values)
                        .filter_map(|(n, v)| v.map(|v| (n.clone(), v.as_f64())))
                        .collect();
                    (scheme.clone(), by_model)
                })
                .collect(),
        )
    };
    RawRecord {
        id: record.id.clone(),
        scores,
        correct_models,
        answers,
        gold: record.gold.clone(),
        confidences,
    }
}
