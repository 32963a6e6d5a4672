//! End-to-end plumbing shared by the CLI and integration tests: residual
//! features, calibration of both tasks, and per-unit prediction tables.

use serde::{Deserialize, Serialize};

use crate::conformal::{
    classification_scores, predict_interval, predict_set, regression_scores, Calibration,
    DepthInterval, LabelSet, ResidualTable,
};
use crate::data::types::{Dataset, ProfileSample, Split, Task, DEPTH_SLOTS};
use crate::error::{Result, TriageError};
use crate::ranking::entropy;
use crate::residual::{predict_residual, train_residual, TrainConfig, TrainedResidual};
use crate::simulate::argmax_label;

/// Where interval scales come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    /// Fit the residual MLP on the train split.
    Fit,
    /// Use the residual column shipped with the prediction bundles.
    Column,
}

impl std::str::FromStr for ResidualMode {
    type Err = TriageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fit" => Ok(ResidualMode::Fit),
            "column" => Ok(ResidualMode::Column),
            other => Err(TriageError::Config(format!(
                "unknown residual mode `{other}` (expected fit|column)"
            ))),
        }
    }
}

/// Feature vector for one marker slot: the layer's feature row plus the
/// normalized slot position. Padded slots borrow the last real layer's
/// features — they have no features of their own, but the position
/// coordinate still lets the model distinguish them.
pub fn unit_features(sample: &ProfileSample, slot: usize) -> Vec<f64> {
    let row = &sample.features[slot.min(sample.num_horizons - 1)];
    let mut v = Vec::with_capacity(row.len() + 1);
    v.extend_from_slice(row);
    v.push((slot + 1) as f64 / DEPTH_SLOTS as f64);
    v
}

/// Residual-model training pairs from one split: unit features against
/// observed absolute depth errors, over every marker slot.
pub fn residual_training_data(ds: &Dataset, split: Split) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let pairs = ds.paired(split)?;
    let mut inputs = Vec::with_capacity(pairs.len() * DEPTH_SLOTS);
    let mut targets = Vec::with_capacity(pairs.len() * DEPTH_SLOTS);
    for (sample, bundle) in pairs {
        for t in 0..DEPTH_SLOTS {
            inputs.push(unit_features(sample, t));
            targets.push((bundle.pred_depths[t] - sample.true_depths[t]).abs());
        }
    }
    Ok((inputs, targets))
}

/// Fits the residual MLP on the train split.
pub fn fit_residual_model(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainedResidual> {
    let (inputs, targets) = residual_training_data(ds, Split::Train)?;
    train_residual(&inputs, &targets, cfg)
}

/// Evaluates a fitted residual model on every sample of the dataset.
pub fn residual_table_from_model(
    ds: &Dataset,
    params: &crate::residual::MlpParams,
) -> Result<ResidualTable> {
    let mut table = ResidualTable::new();
    for sample in &ds.samples {
        let residuals: Vec<f64> = (0..DEPTH_SLOTS)
            .map(|t| predict_residual(params, &unit_features(sample, t)))
            .collect::<Result<_>>()?;
        table.insert(sample.id.clone(), residuals)?;
    }
    Ok(table)
}

/// Fits both task calibrations on the calibration split.
pub fn calibrate_tasks(
    ds: &Dataset,
    residuals: &ResidualTable,
    alpha: f64,
) -> Result<(Calibration, Calibration)> {
    let pairs = ds.paired(Split::Calib)?;
    let depth_scores = regression_scores(&pairs, residuals)?;
    let label_scores = classification_scores(&pairs);
    Ok((
        Calibration::fit(Task::Depth, &depth_scores, alpha)?,
        Calibration::fit(Task::Label, &label_scores, alpha)?,
    ))
}

/// One deployed depth prediction: marker, interval, and outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthRow {
    pub profile_id: String,
    /// 1-based marker slot.
    pub horizon_index: usize,
    /// True for slots past the profile's real layers.
    pub padding: bool,
    pub pred_depth: f64,
    pub residual: f64,
    pub interval: DepthInterval,
    pub true_depth: f64,
    pub covered: bool,
}

/// One deployed label prediction: top-1, label set, and outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelRow {
    pub profile_id: String,
    /// 1-based layer index.
    pub horizon_index: usize,
    pub pred_label: usize,
    /// Probability of the top-1 label.
    pub confidence: f64,
    pub entropy: f64,
    pub set: LabelSet,
    pub true_label: usize,
    pub covered: bool,
}

/// Interval table over every marker slot of a split (padded slots
/// included, mirroring the calibration population).
pub fn depth_rows(
    ds: &Dataset,
    split: Split,
    cal: &Calibration,
    residuals: &ResidualTable,
) -> Result<Vec<DepthRow>> {
    let mut rows = Vec::new();
    for (sample, bundle) in ds.paired(split)? {
        for t in 0..DEPTH_SLOTS {
            let residual = residuals.get(&sample.id, t).ok_or_else(|| {
                TriageError::MissingArtifact(format!(
                    "residual for profile `{}` marker {}",
                    sample.id,
                    t + 1
                ))
            })?;
            let interval = predict_interval(bundle.pred_depths[t], residual, cal)?;
            rows.push(DepthRow {
                profile_id: sample.id.clone(),
                horizon_index: t + 1,
                padding: t >= sample.num_horizons,
                pred_depth: bundle.pred_depths[t],
                residual,
                interval,
                true_depth: sample.true_depths[t],
                covered: interval.contains(sample.true_depths[t]),
            });
        }
    }
    Ok(rows)
}

/// Label-set table over every real layer of a split.
pub fn label_rows(ds: &Dataset, split: Split, cal: &Calibration) -> Result<Vec<LabelRow>> {
    let mut rows = Vec::new();
    for (sample, bundle) in ds.paired(split)? {
        for t in 0..sample.num_horizons {
            let row = &bundle.softmax[t];
            let set = predict_set(row, cal)?;
            let pred_label = argmax_label(row);
            let true_label = sample.true_labels[t];
            rows.push(LabelRow {
                profile_id: sample.id.clone(),
                horizon_index: t + 1,
                pred_label,
                confidence: row[pred_label - 1],
                entropy: entropy(row),
                covered: set.contains(true_label),
                set,
                true_label,
            });
        }
    }
    Ok(rows)
}

/// Fraction of covered rows. `NaN` on empty input.
pub fn covered_fraction(covered: impl Iterator<Item = bool>) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for c in covered {
        total += 1;
        if c {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate_synthetic, SyntheticConfig};

    fn fixture() -> Dataset {
        let cfg = SyntheticConfig {
            n_profiles: 300,
            class_count: 10,
            feature_dim: 3,
            mcd_runs: 0,
            seed: 41,
            ..SyntheticConfig::default()
        };
        generate_synthetic(&cfg).unwrap()
    }

    #[test]
    fn padded_slots_borrow_last_layer_features() {
        let ds = fixture();
        let sample = ds.samples.iter().find(|s| s.num_horizons < 5).unwrap();
        let last_real = unit_features(sample, sample.num_horizons - 1);
        let padded = unit_features(sample, DEPTH_SLOTS - 1);
        assert_eq!(
            last_real[..ds.feature_dim],
            padded[..ds.feature_dim],
            "padded slots reuse the last real feature row"
        );
        assert!(padded[ds.feature_dim] > last_real[ds.feature_dim]);
        assert_eq!(padded[ds.feature_dim], 1.0);
    }

    #[test]
    fn training_data_covers_every_slot() {
        let ds = fixture();
        let (inputs, targets) = residual_training_data(&ds, Split::Train).unwrap();
        let expected = ds.split_samples(Split::Train).count() * DEPTH_SLOTS;
        assert_eq!(inputs.len(), expected);
        assert_eq!(targets.len(), expected);
        assert!(targets.iter().all(|t| *t >= 0.0));
        assert_eq!(inputs[0].len(), ds.feature_dim + 1);
    }

    #[test]
    fn fitted_table_covers_all_samples_with_positive_scales() {
        let ds = fixture();
        let cfg = TrainConfig {
            hidden_dims: vec![8],
            epochs: 3,
            seed: 1,
            ..TrainConfig::default()
        };
        let fit = fit_residual_model(&ds, &cfg).unwrap();
        let table = residual_table_from_model(&ds, &fit.params).unwrap();
        assert_eq!(table.len(), ds.samples.len());
        for sample in &ds.samples {
            for t in 0..DEPTH_SLOTS {
                assert!(table.get(&sample.id, t).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn calibrated_coverage_lands_near_target() {
        let ds = fixture();
        let cfg = TrainConfig {
            hidden_dims: vec![16],
            epochs: 40,
            seed: 2,
            ..TrainConfig::default()
        };
        let fit = fit_residual_model(&ds, &cfg).unwrap();
        let table = residual_table_from_model(&ds, &fit.params).unwrap();
        let (depth_cal, label_cal) = calibrate_tasks(&ds, &table, 0.1).unwrap();
        assert!(depth_cal.q.is_finite());
        assert!(label_cal.q.is_finite());

        let d_rows = depth_rows(&ds, Split::Test, &depth_cal, &table).unwrap();
        let l_rows = label_rows(&ds, Split::Test, &label_cal).unwrap();
        let depth_cov = covered_fraction(d_rows.iter().map(|r| r.covered));
        let label_cov = covered_fraction(l_rows.iter().map(|r| r.covered));
        // Small-sample bounds: the guarantee is marginal over draws.
        assert!(
            (0.8..=1.0).contains(&depth_cov),
            "depth coverage {depth_cov}"
        );
        assert!(
            (0.8..=1.0).contains(&label_cov),
            "label coverage {label_cov}"
        );
    }

    #[test]
    fn label_rows_expose_consistent_top1_and_sets() {
        let ds = fixture();
        let pairs = ds.paired(Split::Calib).unwrap();
        let scores = classification_scores(&pairs);
        let cal = Calibration::fit(Task::Label, &scores, 0.1).unwrap();
        let rows = label_rows(&ds, Split::Test, &cal).unwrap();
        assert_eq!(rows.len(), ds.horizon_units(Split::Test));
        for row in &rows {
            assert!(row.confidence > 0.0);
            assert!(row.entropy >= 0.0);
            assert_eq!(row.covered, row.set.contains(row.true_label));
        }
    }
}
