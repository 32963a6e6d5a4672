//! Domain model: layered depth profiles, model predictions, and datasets.
//!
//! A *profile* is an ordered stack of layers ("horizons") described by the
//! normalized depth at which each layer ends. The depth head of an upstream
//! model emits a fixed-width vector of [`DEPTH_SLOTS`] markers; profiles with
//! fewer layers are padded with the stop token `1.0`. The label head emits
//! one probability row per real layer over `class_count` classes.
//!
//! All depth values live in `(0, 1]` (normalized by total profile depth).
//! Padding is *always* resolved through the explicit `num_horizons` field,
//! never by scanning for the stop-token value, because a genuine final
//! marker may itself equal `1.0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TriageError};

/// Fixed width of the depth-marker vector (maximum number of layers).
pub const DEPTH_SLOTS: usize = 8;

/// Padding sentinel for unused marker slots. Compared exactly, never with a
/// tolerance: the generator and the wire formats both preserve it bit-for-bit.
pub const STOP_TOKEN: f64 = 1.0;

/// Minimum number of real layers in a profile.
pub const MIN_HORIZONS: usize = 2;

/// Absolute slack allowed on the sum of a probability row.
pub const SOFTMAX_SUM_TOLERANCE: f64 = 1e-6;

/// Default number of label classes.
pub const DEFAULT_CLASS_COUNT: usize = 99;

/// Default per-layer feature dimension.
pub const DEFAULT_FEATURE_DIM: usize = 16;

/// Which of the four dataset partitions a profile belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Calib,
    Test,
}

impl Split {
    /// All splits in canonical order (the order used by ratio vectors).
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Calib, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Calib => "calib",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = TriageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "calib" => Ok(Split::Calib),
            "test" => Ok(Split::Test),
            other => Err(TriageError::Config(format!(
                "unknown split `{other}` (expected train|val|calib|test)"
            ))),
        }
    }
}

/// The two prediction tasks covered by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    /// Regression on the depth markers.
    #[serde(rename = "depths")]
    Depth,
    /// Classification of the per-layer labels.
    #[serde(rename = "horizons")]
    Label,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Depth => "depths",
            Task::Label => "horizons",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = TriageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depths" => Ok(Task::Depth),
            "horizons" => Ok(Task::Label),
            other => Err(TriageError::Config(format!(
                "unknown task `{other}` (expected depths|horizons)"
            ))),
        }
    }
}

/// Ground truth for one profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    /// Unique profile identifier.
    pub id: String,
    /// Number of real layers, in `[MIN_HORIZONS, DEPTH_SLOTS]`.
    pub num_horizons: usize,
    /// `DEPTH_SLOTS` normalized lower-boundary depths; positions at or past
    /// `num_horizons` hold the stop token exactly.
    pub true_depths: Vec<f64>,
    /// One 1-based class label per real layer.
    pub true_labels: Vec<usize>,
    /// One feature row per real layer (length = dataset feature dim).
    pub features: Vec<Vec<f64>>,
    /// Partition this profile belongs to.
    pub split: Split,
}

impl ProfileSample {
    /// Checks every structural invariant against the dataset-level
    /// `class_count` and `feature_dim`.
    pub fn validate(&self, class_count: usize, feature_dim: usize) -> Result<()> {
        let fail = |msg: String| Err(TriageError::invariant(&self.id, msg));

        if self.num_horizons < MIN_HORIZONS || self.num_horizons > DEPTH_SLOTS {
            return fail(format!(
                "num_horizons {} outside [{MIN_HORIZONS}, {DEPTH_SLOTS}]",
                self.num_horizons
            ));
        }
        if self.true_depths.len() != DEPTH_SLOTS {
            return fail(format!(
                "true_depths has {} entries, expected {DEPTH_SLOTS}",
                self.true_depths.len()
            ));
        }
        for (t, &d) in self.true_depths.iter().enumerate() {
            if !d.is_finite() {
                return fail(format!("true_depths[{t}] is not finite"));
            }
            if t < self.num_horizons {
                if d <= 0.0 || d > 1.0 {
                    return fail(format!("true_depths[{t}] = {d} outside (0, 1]"));
                }
                if t > 0 && d <= self.true_depths[t - 1] {
                    return fail(format!("true_depths[{t}] = {d} does not increase"));
                }
            } else if d != STOP_TOKEN {
                return fail(format!("padded true_depths[{t}] = {d} is not the stop token"));
            }
        }
        if self.true_labels.len() != self.num_horizons {
            return fail(format!(
                "true_labels has {} entries, expected {}",
                self.true_labels.len(),
                self.num_horizons
            ));
        }
        for (t, &label) in self.true_labels.iter().enumerate() {
            if label < 1 || label > class_count {
                return fail(format!(
                    "true_labels[{t}] = {label} outside [1, {class_count}]"
                ));
            }
        }
        if self.features.len() != self.num_horizons {
            return fail(format!(
                "features has {} rows, expected {}",
                self.features.len(),
                self.num_horizons
            ));
        }
        for (t, row) in self.features.iter().enumerate() {
            if row.len() != feature_dim {
                return fail(format!(
                    "features[{t}] has {} entries, expected {feature_dim}",
                    row.len()
                ));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return fail(format!("features[{t}][{j}] is not finite"));
            }
        }
        Ok(())
    }
}

/// Upstream-model outputs for one profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle {
    /// Profile this bundle belongs to.
    pub id: String,
    /// `DEPTH_SLOTS` predicted markers, each in `[0, 1]`.
    pub pred_depths: Vec<f64>,
    /// Optional dropout-replicate marker matrix, `R x DEPTH_SLOTS` with
    /// `R >= 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcd_depths: Option<Vec<Vec<f64>>>,
    /// One probability row per real layer over `class_count` classes.
    pub softmax: Vec<Vec<f64>>,
    /// Optional precomputed per-marker residual scales (positive reals,
    /// `DEPTH_SLOTS` entries). Present when the producing system ships its
    /// own difficulty estimates instead of relying on the fitted model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Vec<f64>>,
}

impl PredictionBundle {
    /// Checks this bundle against its sample and the dataset-level
    /// `class_count`.
    pub fn validate(&self, sample: &ProfileSample, class_count: usize) -> Result<()> {
        let fail = |msg: String| Err(TriageError::invariant(&self.id, msg));

        if self.pred_depths.len() != DEPTH_SLOTS {
            return fail(format!(
                "pred_depths has {} entries, expected {DEPTH_SLOTS}",
                self.pred_depths.len()
            ));
        }
        for (t, &d) in self.pred_depths.iter().enumerate() {
            if !d.is_finite() || !(0.0..=1.0).contains(&d) {
                return fail(format!("pred_depths[{t}] = {d} outside [0, 1]"));
            }
        }
        if let Some(mcd) = &self.mcd_depths {
            if mcd.len() < 2 {
                return fail(format!("mcd_depths has {} rows, need at least 2", mcd.len()));
            }
            for (r, row) in mcd.iter().enumerate() {
                if row.len() != DEPTH_SLOTS {
                    return fail(format!(
                        "mcd_depths[{r}] has {} entries, expected {DEPTH_SLOTS}",
                        row.len()
                    ));
                }
                if let Some(t) = row
                    .iter()
                    .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
                {
                    return fail(format!("mcd_depths[{r}][{t}] outside [0, 1]"));
                }
            }
        }
        if self.softmax.len() != sample.num_horizons {
            return fail(format!(
                "softmax has {} rows, expected {}",
                self.softmax.len(),
                sample.num_horizons
            ));
        }
        for (t, row) in self.softmax.iter().enumerate() {
            if row.len() != class_count {
                return fail(format!(
                    "softmax[{t}] has {} entries, expected {class_count}",
                    row.len()
                ));
            }
            let mut sum = 0.0;
            for (k, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return fail(format!("softmax[{t}][{k}] = {p} is not a probability"));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > SOFTMAX_SUM_TOLERANCE {
                return fail(format!("softmax[{t}] sums to {sum}, expected 1"));
            }
        }
        if let Some(res) = &self.residuals {
            if res.len() != DEPTH_SLOTS {
                return fail(format!(
                    "residuals has {} entries, expected {DEPTH_SLOTS}",
                    res.len()
                ));
            }
            if let Some(t) = res.iter().position(|v| !v.is_finite() || *v <= 0.0) {
                return fail(format!("residuals[{t}] = {} is not positive", res[t]));
            }
        }
        Ok(())
    }
}

/// A full dataset: samples, their prediction bundles, and the shared
/// dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<ProfileSample>,
    /// Keyed by profile id; iteration order is therefore deterministic.
    pub predictions: BTreeMap<String, PredictionBundle>,
    /// Number of label classes shared by every probability row.
    pub class_count: usize,
    /// Feature dimension shared by every feature row.
    pub feature_dim: usize,
}

impl Dataset {
    /// Validates every sample, every bundle, and the cross-references
    /// between them.
    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 {
            return Err(TriageError::Config("class_count must be positive".into()));
        }
        if self.feature_dim == 0 {
            return Err(TriageError::Config("feature_dim must be positive".into()));
        }
        let mut seen = BTreeMap::new();
        for sample in &self.samples {
            sample.validate(self.class_count, self.feature_dim)?;
            if seen.insert(sample.id.as_str(), sample).is_some() {
                return Err(TriageError::invariant(&sample.id, "duplicate profile id"));
            }
        }
        for (id, bundle) in &self.predictions {
            if *id != bundle.id {
                return Err(TriageError::invariant(
                    id.clone(),
                    format!("prediction keyed `{id}` carries id `{}`", bundle.id),
                ));
            }
            let sample = seen
                .get(id.as_str())
                .ok_or_else(|| TriageError::invariant(id.clone(), "prediction without sample"))?;
            bundle.validate(sample, self.class_count)?;
        }
        Ok(())
    }

    /// Samples belonging to one split, in stored order.
    pub fn split_samples(&self, split: Split) -> impl Iterator<Item = &ProfileSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Looks up a sample by id (linear scan; build [`Dataset::index`] for
    /// repeated lookups).
    pub fn sample_by_id(&self, id: &str) -> Option<&ProfileSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Id-to-sample index for repeated lookups.
    pub fn index(&self) -> BTreeMap<&str, &ProfileSample> {
        self.samples.iter().map(|s| (s.id.as_str(), s)).collect()
    }

    /// Pairs each sample in `split` with its prediction bundle.
    ///
    /// Fails with [`TriageError::MissingPrediction`] if any sample in the
    /// split has no bundle.
    pub fn paired(&self, split: Split) -> Result<Vec<(&ProfileSample, &PredictionBundle)>> {
        self.split_samples(split)
            .map(|s| {
                self.predictions
                    .get(&s.id)
                    .map(|b| (s, b))
                    .ok_or_else(|| TriageError::MissingPrediction(s.id.clone()))
            })
            .collect()
    }

    /// Total number of real layers across one split.
    pub fn horizon_units(&self, split: Split) -> usize {
        self.split_samples(split).map(|s| s.num_horizons).sum()
    }
}
