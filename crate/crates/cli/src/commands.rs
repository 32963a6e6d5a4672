//! Subcommand implementations: each loads what it needs, writes its outputs,
//! then drops a manifest beside them.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use conformal_triage_core::diagnostics::{
    cumulative_distribution, infer_threshold, ks_distance, ThresholdDecision,
};
use conformal_triage_core::ranking::{
    entropy_scores, mcd_std_scores, random_scores, set_size_scores, width_scores,
};
use conformal_triage_core::report::{
    write_cdf_csv, write_coverage_csv, write_depth_predictions_csv, write_label_predictions_csv,
    write_ranking_csv, write_reliability_csv, write_summary_csv, write_svg, write_sweep_csv,
    write_thresholds_csv, LinePlot, Series,
};
use conformal_triage_core::simulate::argmax_label;
use conformal_triage_core::{
    calibrate_tasks, calibration_curve, classification_scores, coverage_curve, covered_fraction,
    depth_rows, fit_residual_model, generate_synthetic, label_rows, load_dataset, predict_interval,
    predict_set, rank, regression_scores, residual_table_from_model, run_sweep, save_dataset,
    Calibration, Dataset, MetricKind, QueryUnit, ResidualMode, ResidualTable, Result, Split,
    StrategyKind, SweepInputs, Task, TrainedResidual, TriageError, UnitId, WireFormat,
};

use crate::config::{write_manifest, RunConfig};

const DEPTH_CAL_FILE: &str = "depths_calibration.json";
const LABEL_CAL_FILE: &str = "horizons_calibration.json";
const RESIDUAL_MODEL_FILE: &str = "residual_model.json";

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| TriageError::io(path.display().to_string(), e))
}

/// JSON-lines datasets are files; the CSV pair lives in a directory.
fn detect_format(path: &Path) -> WireFormat {
    if path.is_dir() {
        WireFormat::CsvPair
    } else {
        WireFormat::JsonLines
    }
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.data_path()?;
    load_dataset(path, detect_format(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(TriageError::MissingArtifact(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| TriageError::io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| TriageError::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| TriageError::Config(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| TriageError::io(path.display().to_string(), e))
}

/// Resolves the residual table for commands that consume prior artifacts.
fn load_residuals(cfg: &RunConfig, ds: &Dataset) -> Result<ResidualTable> {
    match cfg.residual_mode {
        ResidualMode::Fit => {
            let path = cfg.artifacts_path()?.join(RESIDUAL_MODEL_FILE);
            let model: TrainedResidual = read_json(&path)?;
            residual_table_from_model(ds, &model.params)
        }
        ResidualMode::Column => ResidualTable::from_column(ds),
    }
}

fn load_calibration(cfg: &RunConfig, file: &str, task: Task) -> Result<Calibration> {
    let cal: Calibration = read_json(&cfg.artifacts_path()?.join(file))?;
    if cal.task != task {
        return Err(TriageError::Config(format!(
            "{file} holds a {} calibration, expected {task}",
            cal.task
        )));
    }
    Ok(cal)
}

pub fn cmd_generate(cfg: &RunConfig, format: WireFormat) -> Result<()> {
    let out = cfg.out_path()?;
    ensure_dir(out)?;
    let ds = generate_synthetic(&cfg.synthetic)?;

    let name = match format {
        WireFormat::JsonLines => "dataset.jsonl",
        WireFormat::CsvPair => "dataset",
    };
    let path = out.join(name);
    save_dataset(&ds, &path, format)?;

    let counts: Vec<usize> = Split::ALL
        .iter()
        .map(|s| ds.split_samples(*s).count())
        .collect();
    let horizons: usize = ds.samples.iter().map(|s| s.num_horizons).sum();
    println!(
        "wrote {}: {} profiles ({} train / {} val / {} calib / {} test), {} horizons",
        path.display(),
        ds.samples.len(),
        counts[0],
        counts[1],
        counts[2],
        counts[3],
        horizons
    );

    let outputs = match format {
        WireFormat::JsonLines => vec![name.to_string()],
        WireFormat::CsvPair => vec!["dataset/samples.csv".into(), "dataset/predictions.csv".into()],
    };
    write_manifest(out, "generate", cfg, outputs)
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_path()?;
    ensure_dir(out)?;
    let ds = load_data(cfg)?;

    let mut outputs = Vec::new();
    let residuals = match cfg.residual_mode {
        ResidualMode::Fit => {
            let fit = fit_residual_model(&ds, &cfg.training)?;
            println!(
                "residual model: MSE {:.6} -> {:.6} over {} epochs",
                fit.loss_history[0],
                fit.loss_history.last().unwrap(),
                cfg.training.epochs
            );
            write_json(&out.join(RESIDUAL_MODEL_FILE), &fit)?;
            outputs.push(RESIDUAL_MODEL_FILE.to_string());
            residual_table_from_model(&ds, &fit.params)?
        }
        ResidualMode::Column => ResidualTable::from_column(&ds)?,
    };

    let (depth_cal, label_cal) = calibrate_tasks(&ds, &residuals, cfg.alpha)?;
    for (file, cal) in [(DEPTH_CAL_FILE, &depth_cal), (LABEL_CAL_FILE, &label_cal)] {
        write_json(&out.join(file), cal)?;
        outputs.push(file.to_string());
        println!("{}: n = {}, q = {}", cal.task, cal.n, cal.q);
    }

    let summary = vec![
        ("alpha".to_string(), cfg.alpha),
        ("depths_n".to_string(), depth_cal.n as f64),
        ("depths_q".to_string(), depth_cal.q),
        ("horizons_n".to_string(), label_cal.n as f64),
        ("horizons_q".to_string(), label_cal.q),
    ];
    write_summary_csv(&out.join("calibration.csv"), &summary)?;
    outputs.push("calibration.csv".into());

    write_manifest(out, "calibrate", cfg, outputs)
}

/// Builds ranked uncertainty blocks for every selected strategy compatible
/// with the selected tasks, over the real layers of `split`.
fn strategy_rankings(
    cfg: &RunConfig,
    ds: &Dataset,
    split: Split,
    depth_cal: Option<&Calibration>,
    label_cal: Option<&Calibration>,
    residuals: Option<&ResidualTable>,
) -> Result<Vec<QueryUnit>> {
    let pairs = ds.paired(split)?;
    let mut ranked = Vec::new();
    for &task in &cfg.tasks {
        for &strategy in &cfg.sweep.strategies {
            if strategy.task().map(|t| t != task).unwrap_or(false) {
                continue;
            }
            let units = match strategy {
                StrategyKind::ConformalWidth => {
                    let cal = depth_cal.ok_or_else(|| {
                        TriageError::MissingArtifact("depth calibration for widths".into())
                    })?;
                    let residuals = residuals.ok_or_else(|| {
                        TriageError::MissingArtifact("residual scales for widths".into())
                    })?;
                    let mut with_intervals = Vec::new();
                    for (s, b) in &pairs {
                        for t in 0..s.num_horizons {
                            let u = residuals.get(&s.id, t).ok_or_else(|| {
                                TriageError::MissingArtifact(format!(
                                    "residual for profile `{}` marker {}",
                                    s.id,
                                    t + 1
                                ))
                            })?;
                            let interval = predict_interval(b.pred_depths[t], u, cal)?;
                            with_intervals.push((UnitId::new(s.id.clone(), t + 1), interval));
                        }
                    }
                    width_scores(&with_intervals)
                }
                StrategyKind::McdStd => {
                    let mut with_replicates = Vec::new();
                    for (s, b) in &pairs {
                        let mcd = b.mcd_depths.as_ref().ok_or_else(|| {
                            TriageError::MissingArtifact(format!(
                                "dropout replicates for profile `{}`",
                                s.id
                            ))
                        })?;
                        for t in 0..s.num_horizons {
                            let column: Vec<f64> = mcd.iter().map(|row| row[t]).collect();
                            with_replicates.push((UnitId::new(s.id.clone(), t + 1), column));
                        }
                    }
                    mcd_std_scores(&with_replicates)?
                }
                StrategyKind::Entropy => {
                    let mut rows = Vec::new();
                    for (s, b) in &pairs {
                        for t in 0..s.num_horizons {
                            rows.push((UnitId::new(s.id.clone(), t + 1), b.softmax[t].as_slice()));
                        }
                    }
                    entropy_scores(&rows)
                }
                StrategyKind::SetSize => {
                    let cal = label_cal.ok_or_else(|| {
                        TriageError::MissingArtifact("label calibration for set sizes".into())
                    })?;
                    let mut sets = Vec::new();
                    for (s, b) in &pairs {
                        for t in 0..s.num_horizons {
                            sets.push((
                                UnitId::new(s.id.clone(), t + 1),
                                predict_set(&b.softmax[t], cal)?,
                            ));
                        }
                    }
                    let views: Vec<_> = sets.iter().map(|(u, set)| (u.clone(), set)).collect();
                    set_size_scores(&views)
                }
                StrategyKind::Random => {
                    let mut ids = Vec::new();
                    for (s, _) in &pairs {
                        for t in 0..s.num_horizons {
                            ids.push(UnitId::new(s.id.clone(), t + 1));
                        }
                    }
                    random_scores(&ids, task, cfg.sweep.seed)
                }
            };
            ranked.extend(rank(units)?);
        }
    }
    Ok(ranked)
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_path()?;
    ensure_dir(out)?;
    let ds = load_data(cfg)?;
    let split: Split = cfg.predict_split.parse()?;

    let wants_depth = cfg.tasks.contains(&Task::Depth);
    let wants_label = cfg.tasks.contains(&Task::Label);
    let residuals = if wants_depth { Some(load_residuals(cfg, &ds)?) } else { None };
    let depth_cal = if wants_depth {
        Some(load_calibration(cfg, DEPTH_CAL_FILE, Task::Depth)?)
    } else {
        None
    };
    let label_cal = if wants_label {
        Some(load_calibration(cfg, LABEL_CAL_FILE, Task::Label)?)
    } else {
        None
    };

    let mut outputs = Vec::new();
    let mut summary = vec![("alpha".to_string(), cfg.alpha)];
    if let (Some(cal), Some(residuals)) = (&depth_cal, &residuals) {
        let rows = depth_rows(&ds, split, cal, residuals)?;
        write_depth_predictions_csv(&out.join("depth_predictions.csv"), &rows)?;
        outputs.push("depth_predictions.csv".into());
        let coverage = covered_fraction(rows.iter().map(|r| r.covered));
        let mean_width =
            rows.iter().map(|r| r.interval.width()).sum::<f64>() / rows.len() as f64;
        println!(
            "depths: {} rows, empirical coverage {:.4}, mean width {:.4}",
            rows.len(),
            coverage,
            mean_width
        );
        summary.push(("depths_rows".into(), rows.len() as f64));
        summary.push(("depths_coverage".into(), coverage));
        summary.push(("depths_mean_width".into(), mean_width));
    }
    if let Some(cal) = &label_cal {
        let rows = label_rows(&ds, split, cal)?;
        write_label_predictions_csv(&out.join("label_predictions.csv"), &rows)?;
        outputs.push("label_predictions.csv".into());
        let coverage = covered_fraction(rows.iter().map(|r| r.covered));
        let mean_size =
            rows.iter().map(|r| r.set.size() as f64).sum::<f64>() / rows.len() as f64;
        println!(
            "horizons: {} rows, empirical coverage {:.4}, mean set size {:.2}",
            rows.len(),
            coverage,
            mean_size
        );
        summary.push(("horizons_rows".into(), rows.len() as f64));
        summary.push(("horizons_coverage".into(), coverage));
        summary.push(("horizons_mean_set_size".into(), mean_size));
    }

    let ranked = strategy_rankings(
        cfg,
        &ds,
        split,
        depth_cal.as_ref(),
        label_cal.as_ref(),
        residuals.as_ref(),
    )?;
    write_ranking_csv(&out.join("rankings.csv"), &ranked)?;
    outputs.push("rankings.csv".into());

    write_summary_csv(&out.join("summary.csv"), &summary)?;
    outputs.push("summary.csv".into());
    write_manifest(out, "predict", cfg, outputs)
}

pub fn cmd_simulate(cfg: &RunConfig, svg: bool) -> Result<()> {
    let out = cfg.out_path()?;
    ensure_dir(out)?;
    let ds = load_data(cfg)?;

    let wants_depth = cfg.tasks.contains(&Task::Depth);
    let needs_widths = cfg.sweep.strategies.contains(&StrategyKind::ConformalWidth);
    let needs_sets = cfg.sweep.strategies.contains(&StrategyKind::SetSize);
    let residuals = if wants_depth && needs_widths {
        Some(load_residuals(cfg, &ds)?)
    } else {
        None
    };
    let depth_cal = if wants_depth && needs_widths {
        Some(load_calibration(cfg, DEPTH_CAL_FILE, Task::Depth)?)
    } else {
        None
    };
    let label_cal = if cfg.tasks.contains(&Task::Label) && needs_sets {
        Some(load_calibration(cfg, LABEL_CAL_FILE, Task::Label)?)
    } else {
        None
    };

    let inputs = SweepInputs {
        dataset: &ds,
        depth_cal: depth_cal.as_ref(),
        label_cal: label_cal.as_ref(),
        residuals: residuals.as_ref(),
        tasks: &cfg.tasks,
        average: cfg.average,
    };
    let result = run_sweep(&inputs, &cfg.sweep)?;
    write_sweep_csv(&out.join("sweep.csv"), &result)?;
    let mut outputs = vec!["sweep.csv".to_string()];
    println!(
        "wrote sweep.csv: {} cells over {} budgets, {} strategies, {} tasks",
        result.cells.len(),
        cfg.sweep.budgets.len(),
        cfg.sweep.strategies.len(),
        cfg.tasks.len()
    );

    if svg {
        for &task in &cfg.tasks {
            let metric = match task {
                Task::Depth => MetricKind::Iou,
                Task::Label => MetricKind::Accuracy,
            };
            let mut series = Vec::new();
            for &strategy in &cfg.sweep.strategies {
                let points: Vec<(f64, f64)> = result
                    .cells
                    .iter()
                    .filter(|c| c.task == task && c.strategy == strategy && c.metric == metric)
                    .map(|c| (c.budget as f64, c.mean))
                    .collect();
                if !points.is_empty() {
                    series.push(Series {
                        label: strategy.to_string(),
                        points,
                    });
                }
            }
            let name = format!("sweep_{task}.svg");
            write_svg(
                &out.join(&name),
                &LinePlot {
                    title: format!("corrected {metric} vs budget ({task})"),
                    x_label: "budget (units)".into(),
                    y_label: metric.to_string(),
                    series,
                    diagonal: false,
                },
            )?;
            outputs.push(name);
        }
    }

    write_manifest(out, "simulate", cfg, outputs)
}

/// Raw uncertainty values for one strategy over the real layers of a split,
/// in pair order (used for deferral thresholds, so no ranking is needed).
fn strategy_uncertainties(
    cfg: &RunConfig,
    ds: &Dataset,
    split: Split,
    strategy: StrategyKind,
    depth_cal: Option<&Calibration>,
    label_cal: Option<&Calibration>,
    residuals: Option<&ResidualTable>,
) -> Result<Vec<f64>> {
    let task = strategy.task().unwrap_or(Task::Depth);
    let mut narrowed = cfg.clone();
    narrowed.tasks = vec![task];
    narrowed.sweep.strategies = vec![strategy];
    let ranked = strategy_rankings(&narrowed, ds, split, depth_cal, label_cal, residuals)?;
    Ok(ranked.into_iter().map(|u| u.uncertainty).collect())
}

fn threshold_rows(
    cfg: &RunConfig,
    ds: &Dataset,
    depth_cal: Option<&Calibration>,
    label_cal: Option<&Calibration>,
    residuals: Option<&ResidualTable>,
) -> Result<Vec<(String, f64, ThresholdDecision)>> {
    let source: StrategyKind = cfg.threshold_source.parse()?;
    let uncertainties = strategy_uncertainties(
        cfg,
        ds,
        Split::Calib,
        source,
        depth_cal,
        label_cal,
        residuals,
    )?;
    let mut rows = Vec::new();
    for &budget in &cfg.deferral_budgets {
        let decision = infer_threshold(&uncertainties, budget)?;
        println!(
            "budget {:.0}%: defer {} >= {} ({} of {} units, realized {:.4})",
            budget * 100.0,
            source,
            decision.threshold,
            decision.deferred,
            decision.total,
            decision.realized_fraction
        );
        rows.push((source.to_string(), budget, decision));
    }
    Ok(rows)
}

/// Loads exactly the artifacts the configured threshold source requires.
fn threshold_inputs(
    cfg: &RunConfig,
    ds: &Dataset,
) -> Result<(Option<Calibration>, Option<Calibration>, Option<ResidualTable>)> {
    let source: StrategyKind = cfg.threshold_source.parse()?;
    Ok(match source {
        StrategyKind::ConformalWidth => (
            Some(load_calibration(cfg, DEPTH_CAL_FILE, Task::Depth)?),
            None,
            Some(load_residuals(cfg, ds)?),
        ),
        StrategyKind::SetSize => (
            None,
            Some(load_calibration(cfg, LABEL_CAL_FILE, Task::Label)?),
            None,
        ),
        _ => (None, None, None),
    })
}

pub fn cmd_threshold(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_path()?;
    ensure_dir(out)?;
    let ds = load_data(cfg)?;
    let (depth_cal, label_cal, residuals) = threshold_inputs(cfg, &ds)?;
    let rows = threshold_rows(
        cfg,
        &ds,
        depth_cal.as_ref(),
        label_cal.as_ref(),
        residuals.as_ref(),
    )?;
    write_thresholds_csv(&out.join("thresholds.csv"), &rows)?;
    write_manifest(out, "threshold", cfg, vec!["thresholds.csv".into()])
}

pub fn cmd_diagnose(cfg: &RunConfig, svg: bool) -> Result<()> {
    let out = cfg.out_path()?;
    ensure_dir(out)?;
    let ds = load_data(cfg)?;
    let calib = ds.paired(Split::Calib)?;
    let test = ds.paired(Split::Test)?;

    let wants_depth = cfg.tasks.contains(&Task::Depth);
    let wants_label = cfg.tasks.contains(&Task::Label);
    let mut outputs = Vec::new();
    let mut summary = Vec::new();

    let residuals = if wants_depth { Some(load_residuals(cfg, &ds)?) } else { None };

    // Nonconformity CDFs per task: calibration vs test, with the KS gap as
    // an exchangeability health check.
    if let Some(residuals) = &residuals {
        let calib_scores = regression_scores(&calib, residuals)?;
        let test_scores = regression_scores(&test, residuals)?;
        let dist = cumulative_distribution(&calib_scores, &test_scores)?;
        let ks = ks_distance(&dist.calib, &dist.test);
        write_cdf_csv(&out.join("depth_score_cdf.csv"), &dist)?;
        outputs.push("depth_score_cdf.csv".into());
        summary.push(("depths_score_ks".to_string(), ks));
        println!("depths: score KS distance {ks:.4} (calib vs test)");
    }
    if wants_label {
        let calib_scores = classification_scores(&calib);
        let test_scores = classification_scores(&test);
        let dist = cumulative_distribution(&calib_scores, &test_scores)?;
        let ks = ks_distance(&dist.calib, &dist.test);
        write_cdf_csv(&out.join("horizon_score_cdf.csv"), &dist)?;
        outputs.push("horizon_score_cdf.csv".into());
        summary.push(("horizons_score_ks".to_string(), ks));
        println!("horizons: score KS distance {ks:.4} (calib vs test)");

        // Reliability of the raw softmax on the test split.
        let mut confidences = Vec::new();
        let mut correct = Vec::new();
        let mut test_units: Vec<(&[f64], usize)> = Vec::new();
        for (s, b) in &test {
            for t in 0..s.num_horizons {
                let row = b.softmax[t].as_slice();
                let arg = argmax_label(row);
                confidences.push(row[arg - 1]);
                correct.push(arg == s.true_labels[t]);
                test_units.push((row, s.true_labels[t]));
            }
        }
        let reliability = calibration_curve(&confidences, &correct);
        write_reliability_csv(&out.join("reliability.csv"), &reliability)?;
        outputs.push("reliability.csv".into());
        summary.push(("reliability_mae".to_string(), reliability.mae(false)));
        summary.push(("reliability_mae_weighted".to_string(), reliability.mae(true)));

        // Conformal coverage across target levels.
        let coverage = coverage_curve(&calib_scores, &test_units, &cfg.coverage_targets)?;
        write_coverage_csv(&out.join("coverage_curve.csv"), &coverage)?;
        outputs.push("coverage_curve.csv".into());
        summary.push(("coverage_mae".to_string(), coverage.mae));
        println!(
            "horizons: reliability MAE {:.4}, conformal coverage MAE {:.4}",
            reliability.mae(false),
            coverage.mae
        );

        if svg {
            let points: Vec<(f64, f64)> = reliability
                .bins
                .iter()
                .filter(|b| b.count > 0)
                .map(|b| (b.mean_confidence, b.accuracy))
                .collect();
            write_svg(
                &out.join("reliability.svg"),
                &LinePlot {
                    title: "reliability (test split)".into(),
                    x_label: "mean confidence".into(),
                    y_label: "accuracy".into(),
                    series: vec![Series { label: "observed".into(), points }],
                    diagonal: true,
                },
            )?;
            outputs.push("reliability.svg".into());

            let points: Vec<(f64, f64)> = coverage
                .levels
                .iter()
                .map(|l| (l.target, l.empirical))
                .collect();
            write_svg(
                &out.join("coverage_curve.svg"),
                &LinePlot {
                    title: "conformal set coverage".into(),
                    x_label: "target coverage".into(),
                    y_label: "empirical coverage".into(),
                    series: vec![Series { label: "conformal".into(), points }],
                    diagonal: true,
                },
            )?;
            outputs.push("coverage_curve.svg".into());
        }
    }

    // Deferral thresholds for each configured budget.
    let (t_depth_cal, t_label_cal, t_residuals) = threshold_inputs(cfg, &ds)?;
    let rows = threshold_rows(
        cfg,
        &ds,
        t_depth_cal.as_ref(),
        t_label_cal.as_ref(),
        t_residuals.as_ref(),
    )?;
    write_thresholds_csv(&out.join("thresholds.csv"), &rows)?;
    outputs.push("thresholds.csv".into());

    write_summary_csv(&out.join("diagnostics.csv"), &summary)?;
    outputs.push("diagnostics.csv".into());
    write_manifest(out, "diagnose", cfg, outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_detection_prefers_directories() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(detect_format(dir.path()), WireFormat::CsvPair);
        let file = dir.path().join("x.jsonl");
        std::fs::write(&file, "").unwrap();
        assert_eq!(detect_format(&file), WireFormat::JsonLines);
        // Nonexistent paths default to the file format; the loader reports
        // the missing file.
        assert_eq!(detect_format(&dir.path().join("absent")), WireFormat::JsonLines);
    }

    #[test]
    fn missing_artifacts_are_reported_as_such() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_json::<Calibration>(&dir.path().join("absent.json")).unwrap_err();
        assert!(matches!(err, TriageError::MissingArtifact(_)), "{err:?}");
    }
}
