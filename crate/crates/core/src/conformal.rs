//! Split conformal prediction for the two profile tasks.
//!
//! Calibration computes the finite-sample-corrected empirical quantile of
//! nonconformity scores on a held-out calibration split:
//!
//! * regression score for one marker slot: `|pred - true| / residual`,
//!   where the residual is a positive per-unit difficulty scale;
//! * classification score for one real layer: `1 - p_true`.
//!
//! With `n` calibration scores and miscoverage level `alpha`, the quantile
//! is the k-th smallest score with `k = ceil((1 - alpha) * (n + 1))`; when
//! `k > n` the quantile is `+inf` and predictions become maximally
//! conservative (full-range intervals, full label sets). Under
//! exchangeability this yields marginal coverage in
//! `[1 - alpha, 1 - alpha + 1/(n+1)]`.
//!
//! Regression scores cover *all* marker slots, padded ones included, so a
//! deployed interval exists for every slot of the fixed-width head.
//! Classification scores cover real layers only, since padded slots carry
//! no label.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::types::{Dataset, PredictionBundle, ProfileSample, Task, DEPTH_SLOTS};
use crate::error::{Result, TriageError};

// ───────────────────────── residual scales ─────────────────────────

/// Per-unit positive residual scales, keyed by profile id and marker slot.
///
/// Built either from a fitted residual model or from the optional residual
/// column shipped with prediction bundles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualTable {
    map: BTreeMap<String, Vec<f64>>,
}

impl ResidualTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the residual vector (one entry per marker slot) for a profile.
    pub fn insert(&mut self, id: impl Into<String>, residuals: Vec<f64>) -> Result<()> {
        let id = id.into();
        if residuals.len() != DEPTH_SLOTS {
            return Err(TriageError::DimensionMismatch {
                expected: DEPTH_SLOTS,
                got: residuals.len(),
            });
        }
        if let Some(t) = residuals.iter().position(|v| !v.is_finite()) {
            return Err(TriageError::invariant(
                &id,
                format!("residual for marker {} is not finite", t + 1),
            ));
        }
        self.map.insert(id, residuals);
        Ok(())
    }

    /// Residual for `(profile, slot)`, slot 0-based.
    pub fn get(&self, id: &str, slot: usize) -> Option<f64> {
        self.map.get(id).and_then(|v| v.get(slot)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Residual for scoring: absent entries and nonpositive values are
    /// errors because they would silently corrupt the score distribution.
    fn fetch(&self, id: &str, slot: usize) -> Result<f64> {
        let value = self.get(id, slot).ok_or_else(|| {
            TriageError::MissingArtifact(format!("residual for profile `{id}` marker {}", slot + 1))
        })?;
        if value <= 0.0 {
            return Err(TriageError::NonpositiveResidual {
                profile_id: id.to_string(),
                horizon_index: slot + 1,
                value,
            });
        }
        Ok(value)
    }

    /// Builds the table from the residual column stored on each bundle.
    pub fn from_column(ds: &Dataset) -> Result<Self> {
        let mut table = ResidualTable::new();
        for (id, bundle) in &ds.predictions {
            let residuals = bundle.residuals.clone().ok_or_else(|| {
                TriageError::MissingArtifact(format!("residual column for profile `{id}`"))
            })?;
            table.insert(id.clone(), residuals)?;
        }
        Ok(table)
    }
}

// ───────────────────────── nonconformity scores ─────────────────────────

/// Normalized regression scores over every marker slot of every pair, in
/// pair order then slot order.
pub fn regression_scores(
    pairs: &[(&ProfileSample, &PredictionBundle)],
    residuals: &ResidualTable,
) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(pairs.len() * DEPTH_SLOTS);
    for (sample, bundle) in pairs {
        for t in 0..DEPTH_SLOTS {
            let u = residuals.fetch(&sample.id, t)?;
            scores.push((bundle.pred_depths[t] - sample.true_depths[t]).abs() / u);
        }
    }
    Ok(scores)
}

/// Classification scores `1 - p_true` over every real layer of every pair,
/// in pair order then layer order.
pub fn classification_scores(pairs: &[(&ProfileSample, &PredictionBundle)]) -> Vec<f64> {
    let mut scores = Vec::new();
    for (sample, bundle) in pairs {
        for t in 0..sample.num_horizons {
            let p_true = bundle.softmax[t][sample.true_labels[t] - 1];
            scores.push(1.0 - p_true);
        }
    }
    scores
}

// ───────────────────────── quantile ─────────────────────────

/// Finite-sample-corrected conformal quantile of a score multiset.
///
/// Returns the `ceil((1 - alpha) * (n + 1))`-th smallest score, or `+inf`
/// when that rank exceeds `n` (too few calibration points for the requested
/// level).
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(TriageError::EmptyScores(
            "conformal quantile needs at least one calibration score".into(),
        ));
    }
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(TriageError::Config(format!(
            "alpha {alpha} must lie strictly between 0 and 1"
        )));
    }
    let n = scores.len();
    let rank = ((1.0 - alpha) * (n as f64 + 1.0)).ceil() as usize;
    if rank > n {
        return Ok(f64::INFINITY);
    }
    let mut work = scores.to_vec();
    let (_, kth, _) = work.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    Ok(*kth)
}

// ───────────────────────── calibration ─────────────────────────

/// A fitted conformal calibration for one task.
///
/// Serializes with `q` as a JSON number, or the string `"inf"` when the
/// calibration is degenerate (rank beyond the score count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub task: Task,
    pub alpha: f64,
    /// Number of calibration scores the quantile was computed from.
    pub n: usize,
    #[serde(with = "quantile_serde")]
    pub q: f64,
}

impl Calibration {
    /// Fits the quantile for `task` from calibration scores.
    pub fn fit(task: Task, scores: &[f64], alpha: f64) -> Result<Self> {
        let q = conformal_quantile(scores, alpha)?;
        Ok(Calibration {
            task,
            alpha,
            n: scores.len(),
            q,
        })
    }

    fn expect_task(&self, task: Task) -> Result<()> {
        if self.task != task {
            return Err(TriageError::Config(format!(
                "calibration fitted for task `{}` used for task `{}`",
                self.task, task
            )));
        }
        Ok(())
    }
}

mod quantile_serde {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &f64, s: S) -> Result<S::Ok, S::Error> {
        if q.is_finite() {
            s.serialize_f64(*q)
        } else {
            s.serialize_str("inf")
        }
    }

    struct QuantileVisitor;

    impl Visitor<'_> for QuantileVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or the string \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                other => Err(de::Error::custom(format!("unexpected quantile `{other}`"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(QuantileVisitor)
    }
}

// ───────────────────────── deployment ─────────────────────────

/// A closed depth interval clamped to the unit range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthInterval {
    pub lo: f64,
    pub hi: f64,
}

impl DepthInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Membership with closed endpoints.
    pub fn contains(&self, depth: f64) -> bool {
        self.lo <= depth && depth <= self.hi
    }
}

/// Interval around one predicted marker, scaled by its residual.
///
/// An infinite quantile collapses to the maximally conservative `[0, 1]`.
pub fn predict_interval(pred: f64, residual: f64, cal: &Calibration) -> Result<DepthInterval> {
    cal.expect_task(Task::Depth)?;
    if !(0.0..=1.0).contains(&pred) {
        return Err(TriageError::Config(format!(
            "predicted marker {pred} outside [0, 1]"
        )));
    }
    if !residual.is_finite() || residual <= 0.0 {
        return Err(TriageError::NonpositiveResidual {
            profile_id: String::new(),
            horizon_index: 0,
            value: residual,
        });
    }
    let margin = cal.q * residual;
    Ok(DepthInterval {
        lo: (pred - margin).max(0.0),
        hi: (pred + margin).min(1.0),
    })
}

/// A set of candidate 1-based class labels, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub members: Vec<usize>,
}

impl LabelSet {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.members.binary_search(&label).is_ok()
    }
}

/// Label set for one probability row: all classes with `p >= 1 - q`.
///
/// The comparison is `>=` exactly, so `q >= 1` (threshold at or below zero)
/// or an infinite quantile admits every class.
pub fn predict_set(softmax_row: &[f64], cal: &Calibration) -> Result<LabelSet> {
    cal.expect_task(Task::Label)?;
    let threshold = 1.0 - cal.q;
    let members = softmax_row
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(k, _)| k + 1)
        .collect();
    Ok(LabelSet { members })
}

/// Fraction of depths falling inside their interval. `NaN` on empty input.
pub fn empirical_coverage_regression(truths: &[f64], intervals: &[DepthInterval]) -> f64 {
    assert_eq!(truths.len(), intervals.len(), "paired inputs required");
    let hits = truths
        .iter()
        .zip(intervals)
        .filter(|(d, iv)| iv.contains(**d))
        .count();
    hits as f64 / truths.len() as f64
}

/// Fraction of labels falling inside their set. `NaN` on empty input.
pub fn empirical_coverage_classification(truths: &[usize], sets: &[LabelSet]) -> f64 {
    assert_eq!(truths.len(), sets.len(), "paired inputs required");
    let hits = truths
        .iter()
        .zip(sets)
        .filter(|(label, set)| set.contains(**label))
        .count();
    hits as f64 / truths.len() as f64
}
