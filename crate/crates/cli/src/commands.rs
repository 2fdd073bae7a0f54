//! Implementations of the seven subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use racer_core::aggregation::{
    aggregate, AggregateOutcome, AggregateOutcomeRecord, AggregationConfig, Decision,
    MethodTemplate, WeightScheme,
};
use racer_core::calibration::{calibrate as calibrate_threshold, critical_scores, CalibrationResult};
use racer_core::dataset::{
    load_dataset, split, write_jsonl, DataFormat, LoadOptions, RoutingDataset, SplitSpec,
};
use racer_core::evaluation::{
    compare_full_ensemble, evaluate, sweep_alpha, EnsembleComparison, MetricsReport, TrialReport,
};
use racer_core::rng::derive_seed;
use racer_core::router::{route_batch, PredictionSet, PredictionSetRecord};
use racer_core::scoring::{score_records, ScoreKind};
use racer_core::Scalar;

use crate::artifacts::ArtifactWriter;
use crate::{
    CalibrateArgs, CompareArgs, EvalArgs, MismatchError, RouteArgs, SelectConfigArgs, SweepArgs,
    SynthArgs, UsageError,
};

/// Calibration / validation / test protocol used when --split is not given.
const DEFAULT_SPLIT: &str = "0.5,0.1,0.4";

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn parse_f64_list(raw: &str, flag: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--{flag}: {piece:?} is not a number")))
        })
        .collect()
}

fn parse_split(raw: &str, seed: u64) -> Result<SplitSpec> {
    let parts = parse_f64_list(raw, "split")?;
    if parts.len() != 3 {
        return Err(usage(format!(
            "--split needs cal,val,test fractions, got {} values",
            parts.len()
        )));
    }
    SplitSpec::new(parts[0], parts[1], parts[2], seed)
        .map_err(|e| usage(format!("--split: {e}")))
}

fn parse_kind(raw: &str) -> Result<ScoreKind> {
    raw.parse::<ScoreKind>().map_err(usage)
}

fn parse_kinds(raw: &str) -> Result<Vec<ScoreKind>> {
    raw.split(',').map(|piece| parse_kind(piece.trim())).collect()
}

fn resolve_format(path: &Path, flag: &str) -> Result<DataFormat> {
    match flag {
        "jsonl" => Ok(DataFormat::Jsonl),
        "csv" => Ok(DataFormat::Csv),
        "auto" => Ok(
            if path.extension().and_then(|e| e.to_str()) == Some("csv") {
                DataFormat::Csv
            } else {
                DataFormat::Jsonl
            },
        ),
        other => Err(usage(format!(
            "--format {other:?} is not one of jsonl, csv, auto"
        ))),
    }
}

fn load_data(path: &Path, format_flag: &str, normalize: bool) -> Result<RoutingDataset<Scalar>> {
    let format = resolve_format(path, format_flag)?;
    let options = LoadOptions {
        format,
        normalize_scores: normalize,
    };
    load_dataset(path, &options).with_context(|| format!("loading {}", path.display()))
}

fn load_calibration(path: &Path) -> Result<CalibrationResult<Scalar>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing calibration {}", path.display()))
}

/// Build an aggregation config from the --aggregate/--weight-scheme/
/// --temperature flag triple.
fn parse_aggregation(
    method: &str,
    weight_scheme: Option<&str>,
    temperature: Option<f64>,
) -> Result<AggregationConfig<Scalar>> {
    match method {
        "majority" => {
            if weight_scheme.is_some() || temperature.is_some() {
                return Err(usage(
                    "--weight-scheme/--temperature only apply to --aggregate weighted",
                ));
            }
            Ok(AggregationConfig::Majority)
        }
        "weighted" => {
            let scheme: WeightScheme = weight_scheme
                .ok_or_else(|| usage("--aggregate weighted requires --weight-scheme"))?
                .parse()
                .map_err(usage)?;
            let temperature =
                temperature.ok_or_else(|| usage("--aggregate weighted requires --temperature"))?;
            Ok(AggregationConfig::Weighted {
                scheme,
                temperature,
            })
        }
        other => Err(usage(format!(
            "--aggregate {other:?} is not one of majority, weighted"
        ))),
    }
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let accuracies = parse_f64_list(&args.accuracies, "accuracies")?;
    if accuracies.len() != args.models {
        return Err(usage(format!(
            "--models {} but --accuracies lists {} values",
            args.models,
            accuracies.len()
        )));
    }
    let data = racer_core::dataset::synthesize::<Scalar>(
        args.n,
        args.models,
        &accuracies,
        args.sharpness,
        args.empty_gt_rate,
        args.seed,
    )
    .map_err(|e| usage(e.to_string()))?;

    let mut bytes = Vec::new();
    write_jsonl(&data, &mut bytes)?;

    let mut writer = ArtifactWriter::new("synth");
    writer
        .arg("n", args.n)
        .arg("models", args.models)
        .arg("accuracies", &args.accuracies)
        .arg("sharpness", args.sharpness)
        .arg_opt("empty_gt_rate", args.empty_gt_rate)
        .arg("out", args.out.display())
        .seed("seed", args.seed);
    writer.write(&args.out, &bytes)?;
    let manifest = writer.finish(&args.out)?;
    println!(
        "wrote {} records to {} (manifest {})",
        data.len(),
        args.out.display(),
        manifest.display()
    );
    Ok(())
}

pub fn calibrate(args: CalibrateArgs) -> Result<()> {
    let kind = parse_kind(&args.score)?;
    let smoothing_seed = derive_seed(args.seed, "smooth");
    let split_seed = derive_seed(args.seed, "split");

    let mut writer = ArtifactWriter::new("calibrate");
    writer
        .arg("alpha", args.alpha)
        .arg("score", kind)
        .arg("out", args.out.display())
        .seed("seed", args.seed)
        .seed("smooth", smoothing_seed);

    let cal: RoutingDataset<Scalar> = match (&args.input, &args.cal_input) {
        (Some(_), Some(_)) => {
            return Err(usage("--input and --cal-input are mutually exclusive"))
        }
        (None, None) => return Err(usage("one of --input or --cal-input is required")),
        (None, Some(path)) => {
            if args.split.is_some() {
                return Err(usage("--split does not apply with --cal-input"));
            }
            writer.arg("cal_input", path.display());
            load_data(path, &args.format, args.normalize)?
        }
        (Some(path), None) => {
            let split_raw = args.split.as_deref().unwrap_or(DEFAULT_SPLIT);
            let spec = parse_split(split_raw, split_seed)?;
            writer
                .arg("input", path.display())
                .arg("split", split_raw)
                .seed("split", split_seed);
            let data = load_data(path, &args.format, args.normalize)?;
            let (cal, _, _) = split(&data, &spec)?;
            cal
        }
    };

    let rows = score_records(&cal, kind, smoothing_seed)?;
    let criticals = critical_scores(&rows, &cal.ground_truth_pairs())?;
    let result = calibrate_threshold(&criticals, args.alpha, kind, smoothing_seed)?;

    writer.write_json(&args.out, &result)?;
    let manifest = writer.finish(&args.out)?;
    println!(
        "calibrated lambda = {} on n = {} (manifest {})",
        result.lambda_hat,
        result.n,
        manifest.display()
    );
    Ok(())
}

pub fn route(args: RouteArgs) -> Result<()> {
    let calib = load_calibration(&args.calib)?;
    if let Some(raw) = &args.score {
        let expected = parse_kind(raw)?;
        if expected != calib.kind {
            return Err(MismatchError(format!(
                "--score {expected} but {} was calibrated with {}",
                args.calib.display(),
                calib.kind
            ))
            .into());
        }
    }
    let config = match &args.aggregate {
        Some(method) => {
            if args.outcomes.is_none() {
                return Err(usage("--aggregate requires --outcomes <path>"));
            }
            Some(parse_aggregation(
                method,
                args.weight_scheme.as_deref(),
                args.temperature,
            )?)
        }
        None => {
            if args.weight_scheme.is_some() || args.temperature.is_some() || args.outcomes.is_some()
            {
                return Err(usage(
                    "--weight-scheme/--temperature/--outcomes require --aggregate",
                ));
            }
            None
        }
    };

    let data = load_data(&args.input, &args.format, args.normalize)?;
    let rows = score_records(&data, calib.kind, calib.smoothing_seed)?;
    let psets = route_batch(&rows, &calib, data.pool())?;

    let mut writer = ArtifactWriter::new("route");
    writer
        .arg("calib", args.calib.display())
        .arg("input", args.input.display())
        .arg("out", args.out.display())
        .arg_opt("aggregate", args.aggregate.as_deref())
        .arg_opt("weight_scheme", args.weight_scheme.as_deref())
        .arg_opt("temperature", args.temperature)
        .seed("smooth", calib.smoothing_seed);

    let set_records: Vec<PredictionSetRecord> = psets.iter().map(|p| p.to_record()).collect();
    writer.write_jsonl(&args.out, &set_records)?;

    if let Some(config) = config {
        let outcomes_path = args.outcomes.as_ref().expect("checked above");
        let outcome_records: Vec<AggregateOutcomeRecord> = psets
            .iter()
            .zip(data.records())
            .map(|(pset, record)| {
                aggregate(pset, record, data.pool(), &config).map(|o| o.to_record())
            })
            .collect::<Result<_, _>>()?;
        writer.arg("outcomes", outcomes_path.display());
        writer.write_jsonl(outcomes_path, &outcome_records)?;
    }

    let abstained = psets.iter().filter(|p| p.abstain).count();
    let manifest = writer.finish(&args.out)?;
    println!(
        "routed {} queries ({abstained} abstentions) to {} (manifest {})",
        psets.len(),
        args.out.display(),
        manifest.display()
    );
    Ok(())
}

fn read_jsonl_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))
        })
        .collect()
}

fn outcome_from_record(record: AggregateOutcomeRecord) -> AggregateOutcome<Scalar> {
    let decision = if record.abstain {
        Decision::Abstain
    } else {
        Decision::Answer(record.decision.unwrap_or_default())
    };
    AggregateOutcome {
        query_id: record.id,
        decision,
        votes: record.votes.into_iter().collect(),
        tie_broken: record.tie_broken,
    }
}

fn metrics_csv(report: &MetricsReport<Scalar>) -> String {
    let accuracy = report
        .accuracy
        .map(|a| a.to_string())
        .unwrap_or_default();
    format!(
        "risk,avg_size,accuracy,abstain_rate,n_test\n{},{},{accuracy},{},{}\n",
        report.risk, report.avg_size, report.abstain_rate, report.n_test
    )
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let data = load_data(&args.input, &args.format, args.normalize)?;
    let set_records: Vec<PredictionSetRecord> = read_jsonl_records(&args.sets)?;
    let psets: Vec<PredictionSet<Scalar>> = set_records
        .into_iter()
        .map(|r| r.into_set(Scalar::NAN))
        .collect();
    let outcomes: Option<Vec<AggregateOutcome<Scalar>>> = match &args.outcomes {
        Some(path) => Some(
            read_jsonl_records::<AggregateOutcomeRecord>(path)?
                .into_iter()
                .map(outcome_from_record)
                .collect(),
        ),
        None => None,
    };

    let report = evaluate(&psets, &data, outcomes.as_deref())?;

    let mut writer = ArtifactWriter::new("eval");
    writer
        .arg("input", args.input.display())
        .arg("sets", args.sets.display())
        .arg_opt("outcomes", args.outcomes.as_ref().map(|p| p.display()))
        .arg("out", args.out.display());
    let json_path = args.out.with_extension("json");
    let csv_path = args.out.with_extension("csv");
    writer.write_json(&json_path, &report)?;
    writer.write(&csv_path, metrics_csv(&report).as_bytes())?;
    let manifest = writer.finish(&args.out)?;
    println!(
        "risk {} over {} queries (manifest {})",
        report.risk,
        report.n_test,
        manifest.display()
    );
    Ok(())
}

fn sweep_cells_csv(table: &[TrialReport<Scalar>]) -> String {
    let mut out = String::from(
        "kind,alpha,n_trials,n_cal,n_test,mean_risk,sd_risk,se_risk,mean_size,sd_size,se_size,lower_bound\n",
    );
    for report in table {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            report.kind,
            report.alpha,
            report.n_trials,
            report.n_cal,
            report.n_test,
            report.mean_risk,
            report.sd_risk,
            report.se_risk(),
            report.mean_size,
            report.sd_size,
            report.se_size(),
            report.lower_bound,
        ));
    }
    out
}

fn sweep_trials_csv(table: &[TrialReport<Scalar>]) -> String {
    let mut out = String::from("kind,alpha,trial,risk,size\n");
    for report in table {
        for (t, (risk, size)) in report.risks.iter().zip(&report.sizes).enumerate() {
            out.push_str(&format!(
                "{},{},{t},{risk},{size}\n",
                report.kind, report.alpha
            ));
        }
    }
    out
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let alphas = parse_f64_list(&args.alphas, "alphas")?;
    let kinds = parse_kinds(&args.kinds)?;
    let split_seed = derive_seed(args.seed, "split");
    let trial_seed = derive_seed(args.seed, "trials");
    let spec = parse_split(&args.split, split_seed)?;

    let data = load_data(&args.input, &args.format, args.normalize)?;
    let table = sweep_alpha(&data, &alphas, &kinds, args.trials, &spec, trial_seed)?;

    let mut writer = ArtifactWriter::new("sweep");
    writer
        .arg("input", args.input.display())
        .arg("alphas", &args.alphas)
        .arg("kinds", &args.kinds)
        .arg("trials", args.trials)
        .arg("split", &args.split)
        .arg("out", args.out.display())
        .seed("seed", args.seed)
        .seed("split", split_seed)
        .seed("trials", trial_seed);

    let json_path = args.out.with_extension("json");
    let csv_path = args.out.with_extension("csv");
    let trials_path = trials_csv_path(&args.out);
    writer.write_json(&json_path, &table)?;
    writer.write(&csv_path, sweep_cells_csv(&table).as_bytes())?;
    writer.write(&trials_path, sweep_trials_csv(&table).as_bytes())?;
    let manifest = writer.finish(&args.out)?;
    println!(
        "swept {} cells x {} trials (manifest {})",
        table.len(),
        args.trials,
        manifest.display()
    );
    Ok(())
}

fn trials_csv_path(stem: &Path) -> PathBuf {
    let mut name = stem.as_os_str().to_os_string();
    name.push("_trials.csv");
    PathBuf::from(name)
}

fn comparison_csv(cmp: &EnsembleComparison<Scalar>) -> String {
    format!(
        "racer_accuracy,full_accuracy,racer_calls,full_calls,calls_saved_frac\n{},{},{},{},{}\n",
        cmp.racer_accuracy, cmp.full_accuracy, cmp.racer_calls, cmp.full_calls, cmp.calls_saved_frac
    )
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let calib = load_calibration(&args.calib)?;
    let config = parse_aggregation(
        &args.aggregate,
        args.weight_scheme.as_deref(),
        args.temperature,
    )?;
    let data = load_data(&args.input, &args.format, args.normalize)?;
    let cmp = compare_full_ensemble(&data, &calib, &config)?;

    let mut writer = ArtifactWriter::new("compare");
    writer
        .arg("input", args.input.display())
        .arg("calib", args.calib.display())
        .arg("aggregate", &args.aggregate)
        .arg_opt("weight_scheme", args.weight_scheme.as_deref())
        .arg_opt("temperature", args.temperature)
        .arg("out", args.out.display())
        .seed("smooth", calib.smoothing_seed);
    let json_path = args.out.with_extension("json");
    let csv_path = args.out.with_extension("csv");
    writer.write_json(&json_path, &cmp)?;
    writer.write(&csv_path, comparison_csv(&cmp).as_bytes())?;
    let manifest = writer.finish(&args.out)?;
    println!(
        "routed accuracy {} vs full {} saving {} of calls (manifest {})",
        cmp.racer_accuracy,
        cmp.full_accuracy,
        cmp.calls_saved_frac,
        manifest.display()
    );
    Ok(())
}

fn parse_methods(raw: &str, temperatures: &[f64]) -> Result<Vec<MethodTemplate<Scalar>>> {
    raw.split(',')
        .map(|piece| {
            let piece = piece.trim();
            if piece == "majority" {
                Ok(MethodTemplate::Majority)
            } else if let Some(scheme_raw) = piece.strip_prefix("weighted:") {
                let scheme: WeightScheme = scheme_raw.parse().map_err(usage)?;
                Ok(MethodTemplate::Weighted {
                    scheme,
                    temperature_grid: temperatures.to_vec(),
                })
            } else {
                Err(usage(format!(
                    "--methods entry {piece:?} is not majority or weighted:<scheme>"
                )))
            }
        })
        .collect()
}

pub fn select_config(args: SelectConfigArgs) -> Result<()> {
    let kind = parse_kind(&args.score)?;
    let alphas = parse_f64_list(&args.alphas, "alphas")?;
    let temperatures = parse_f64_list(&args.temperatures, "temperatures")?;
    let methods = parse_methods(&args.methods, &temperatures)?;
    let smoothing_seed = derive_seed(args.seed, "smooth");
    let split_seed = derive_seed(args.seed, "split");

    let mut writer = ArtifactWriter::new("select-config");
    writer
        .arg("alphas", &args.alphas)
        .arg("methods", &args.methods)
        .arg("temperatures", &args.temperatures)
        .arg("score", kind)
        .arg("out", args.out.display())
        .seed("seed", args.seed)
        .seed("smooth", smoothing_seed);

    let (cal, val): (RoutingDataset<Scalar>, RoutingDataset<Scalar>) =
        match (&args.input, &args.cal_input, &args.val_input) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(usage(
                    "--input is mutually exclusive with --cal-input/--val-input",
                ))
            }
            (Some(path), None, None) => {
                let split_raw = args.split.as_deref().unwrap_or(DEFAULT_SPLIT);
                let spec = parse_split(split_raw, split_seed)?;
                writer
                    .arg("input", path.display())
                    .arg("split", split_raw)
                    .seed("split", split_seed);
                let data = load_data(path, &args.format, args.normalize)?;
                let (cal, val, _) = split(&data, &spec)?;
                (cal, val)
            }
            (None, Some(cal_path), Some(val_path)) => {
                if args.split.is_some() {
                    return Err(usage("--split does not apply with --cal-input/--val-input"));
                }
                writer
                    .arg("cal_input", cal_path.display())
                    .arg("val_input", val_path.display());
                (
                    load_data(cal_path, &args.format, args.normalize)?,
                    load_data(val_path, &args.format, args.normalize)?,
                )
            }
            _ => {
                return Err(usage(
                    "provide either --input or both --cal-input and --val-input",
                ))
            }
        };

    let selection =
        racer_core::aggregation::select_config(&val, &cal, &alphas, &methods, kind, smoothing_seed)?;
    for alpha in &selection.skipped_alphas {
        eprintln!(
            "warning: alpha {alpha} infeasible for n = {} and was skipped",
            cal.len()
        );
    }

    writer.write_json(&args.out, &selection)?;
    let manifest = writer.finish(&args.out)?;
    println!(
        "selected alpha {} with validation accuracy {} (manifest {})",
        selection.alpha,
        selection.val_accuracy,
        manifest.display()
    );
    Ok(())
}
