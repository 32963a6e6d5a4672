//! Calibration and deployment diagnostics.
//!
//! * Reliability curve: fixed ten-bin diagram of top-1 confidence versus
//!   empirical accuracy, with a mean-absolute-error summary.
//! * Coverage curve: conformal analogue — recalibrate the quantile at a
//!   ladder of target levels and measure empirical set coverage at each.
//! * Empirical CDFs and Kolmogorov–Smirnov distance for comparing
//!   uncertainty distributions across splits.
//! * Threshold inference: turn a relative deferral budget into an
//!   uncertainty cutoff whose realized deferral never exceeds the budget.
//! * Spearman rank correlation with average ranks on ties.

use serde::{Deserialize, Serialize};

use crate::conformal::{conformal_quantile, predict_set, Calibration};
use crate::data::types::Task;
use crate::error::{Result, TriageError};

/// Number of reliability bins.
pub const RELIABILITY_BINS: usize = 10;

/// Default coverage-curve targets: 0.50 to 0.95 in steps of 0.05.
pub const DEFAULT_COVERAGE_TARGETS: [f64; 10] =
    [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

// ───────────────────────── reliability curve ─────────────────────────

/// One confidence bin of the reliability curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    /// Inclusive lower edge.
    pub lo: f64,
    /// Exclusive upper edge (inclusive for the last bin).
    pub hi: f64,
    /// Mean top-1 confidence of members, `NaN` when empty.
    pub mean_confidence: f64,
    /// Fraction of members whose top-1 prediction was correct, `NaN` when
    /// empty.
    pub accuracy: f64,
    pub count: usize,
}

/// A ten-bin reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationCurve {
    /// Mean |confidence - accuracy| over bins. Empty bins are excluded;
    /// `count_weighted` weights the remaining bins by membership instead of
    /// equally.
    pub fn mae(&self, count_weighted: bool) -> f64 {
        let mut total = 0.0;
        let mut weight = 0.0;
        for bin in &self.bins {
            if bin.count == 0 {
                continue;
            }
            let w = if count_weighted { bin.count as f64 } else { 1.0 };
            total += w * (bin.mean_confidence - bin.accuracy).abs();
            weight += w;
        }
        total / weight
    }
}

/// Bins paired `(top-1 confidence, top-1 correct)` observations into ten
/// equal-width bins over `[0, 1]`, the last bin closed above.
pub fn calibration_curve(confidences: &[f64], correct: &[bool]) -> CalibrationCurve {
    assert_eq!(confidences.len(), correct.len(), "paired inputs required");
    let mut sums = [0.0f64; RELIABILITY_BINS];
    let mut hits = [0usize; RELIABILITY_BINS];
    let mut counts = [0usize; RELIABILITY_BINS];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let bin = ((c * RELIABILITY_BINS as f64) as usize).min(RELIABILITY_BINS - 1);
        sums[bin] += c;
        counts[bin] += 1;
        if ok {
            hits[bin] += 1;
        }
    }
    let bins = (0..RELIABILITY_BINS)
        .map(|b| CalibrationBin {
            lo: b as f64 / RELIABILITY_BINS as f64,
            hi: (b + 1) as f64 / RELIABILITY_BINS as f64,
            mean_confidence: sums[b] / counts[b] as f64,
            accuracy: hits[b] as f64 / counts[b] as f64,
            count: counts[b],
        })
        .collect();
    CalibrationCurve { bins }
}

// ───────────────────────── coverage curve ─────────────────────────

/// One point of the conformal coverage curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageLevel {
    /// Requested coverage `1 - alpha`.
    pub target: f64,
    /// Quantile recomputed at this target.
    pub quantile: f64,
    /// Fraction of test labels inside their set.
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub levels: Vec<CoverageLevel>,
    /// Mean |empirical - target| over levels.
    pub mae: f64,
}

/// Recalibrates at each target level and measures empirical label-set
/// coverage on `(probability row, true label)` test units.
pub fn coverage_curve(
    calib_scores: &[f64],
    test_units: &[(&[f64], usize)],
    targets: &[f64],
) -> Result<CoverageCurve> {
    if test_units.is_empty() {
        return Err(TriageError::EmptyScores("no test units for coverage".into()));
    }
    if targets.is_empty() {
        return Err(TriageError::Config("no coverage targets".into()));
    }
    let mut levels = Vec::with_capacity(targets.len());
    let mut mae = 0.0;
    for &target in targets {
        if !target.is_finite() || target <= 0.0 || target >= 1.0 {
            return Err(TriageError::Config(format!(
                "coverage target {target} outside (0, 1)"
            )));
        }
        let alpha = 1.0 - target;
        let quantile = conformal_quantile(calib_scores, alpha)?;
        let cal = Calibration {
            task: Task::Label,
            alpha,
            n: calib_scores.len(),
            q: quantile,
        };
        let mut covered = 0usize;
        for (row, label) in test_units {
            if predict_set(row, &cal)?.contains(*label) {
                covered += 1;
            }
        }
        let empirical = covered as f64 / test_units.len() as f64;
        mae += (empirical - target).abs();
        levels.push(CoverageLevel {
            target,
            quantile,
            empirical,
        });
    }
    Ok(CoverageCurve {
        levels,
        mae: mae / targets.len() as f64,
    })
}

// ───────────────────────── empirical CDFs ─────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    /// Fraction of observations `<= value`.
    pub cumulative: f64,
}

/// Right-continuous empirical CDF over distinct sorted values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    pub points: Vec<CdfPoint>,
}

impl EmpiricalCdf {
    /// Builds the CDF of a non-empty value multiset.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(TriageError::EmptyScores("empty distribution".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len() as f64;
        let mut points: Vec<CdfPoint> = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            let cumulative = (i + 1) as f64 / n;
            match points.last_mut() {
                Some(last) if last.value == v => last.cumulative = cumulative,
                _ => points.push(CdfPoint {
                    value: v,
                    cumulative,
                }),
            }
        }
        Ok(EmpiricalCdf { points })
    }

    /// `F(x)`: fraction of observations at or below `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.points.partition_point(|p| p.value <= x) {
            0 => 0.0,
            i => self.points[i - 1].cumulative,
        }
    }
}

/// CDFs of the same statistic on two splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeDistribution {
    pub calib: EmpiricalCdf,
    pub test: EmpiricalCdf,
}

pub fn cumulative_distribution(calib: &[f64], test: &[f64]) -> Result<CumulativeDistribution> {
    Ok(CumulativeDistribution {
        calib: EmpiricalCdf::from_values(calib)?,
        test: EmpiricalCdf::from_values(test)?,
    })
}

/// Kolmogorov–Smirnov distance: the largest gap between two CDFs, attained
/// at one of their jump points.
pub fn ks_distance(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    let mut worst = 0.0f64;
    for p in a.points.iter().chain(&b.points) {
        worst = worst.max((a.eval(p.value) - b.eval(p.value)).abs());
    }
    worst
}

// ───────────────────────── threshold inference ─────────────────────────

/// An inferred deferral rule: route units with uncertainty at or above
/// `threshold` to a human.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    /// Cutoff value; `+inf` when no observed value fits the budget.
    pub threshold: f64,
    /// Fraction of units at or above the cutoff; always `<= budget`.
    pub realized_fraction: f64,
    /// Number of units deferred at this cutoff.
    pub deferred: usize,
    pub total: usize,
}

/// Smallest observed uncertainty value whose deferral fraction stays
/// within `budget`.
///
/// The deferral set `{u >= threshold}` grows as the threshold drops, so the
/// chosen cutoff is the lowest distinct value still within budget. When
/// even the largest value overshoots (budget below one tie block), the
/// threshold is `+inf` and nothing is deferred.
pub fn infer_threshold(uncertainties: &[f64], budget: f64) -> Result<ThresholdDecision> {
    if uncertainties.is_empty() {
        return Err(TriageError::EmptyScores("no uncertainties to threshold".into()));
    }
    if !budget.is_finite() || budget <= 0.0 || budget > 1.0 {
        return Err(TriageError::Config(format!(
            "deferral budget {budget} outside (0, 1]"
        )));
    }
    if let Some(bad) = uncertainties.iter().find(|u| !u.is_finite()) {
        return Err(TriageError::Config(format!(
            "non-finite uncertainty {bad}"
        )));
    }
    let n = uncertainties.len();
    // Nudged so budgets that are exact multiples of 1/n keep their full
    // allowance despite float rounding.
    let allowance = ((budget * n as f64) + 1e-9).floor() as usize;

    let mut sorted = uncertainties.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut decision: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < n {
        let value = sorted[i];
        let mut end = i + 1;
        while end < n && sorted[end] == value {
            end += 1;
        }
        // `end` units are >= value.
        if end > allowance {
            break;
        }
        decision = Some((value, end));
        i = end;
    }
    let (threshold, deferred) = decision.unwrap_or((f64::INFINITY, 0));
    Ok(ThresholdDecision {
        threshold,
        realized_fraction: deferred as f64 / n as f64,
        deferred,
        total: n,
    })
}

// ───────────────────────── rank correlation ─────────────────────────

/// Ranks with ties replaced by the average of their positions (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut end = i + 1;
        while end < n && values[order[end]] == values[order[i]] {
            end += 1;
        }
        let avg = (i + 1 + end) as f64 / 2.0; // mean of positions i+1 ..= end
        for &idx in &order[i..end] {
            ranks[idx] = avg;
        }
        i = end;
    }
    ranks
}

/// Spearman correlation of two paired samples: Pearson correlation of the
/// average ranks. Returns 0 when either sample has no rank variance.
pub fn spearman_rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TriageError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(TriageError::Config(
            "rank correlation needs at least two pairs".into(),
        ));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reliability_bins_and_mae() {
        let conf = [0.05, 0.15, 0.95, 0.92];
        let correct = [false, true, true, true];
        let curve = calibration_curve(&conf, &correct);
        assert_eq!(curve.bins.len(), RELIABILITY_BINS);
        assert_eq!(curve.bins[0].count, 1);
        assert_eq!(curve.bins[1].count, 1);
        assert_eq!(curve.bins[9].count, 2);
        assert!((curve.bins[9].mean_confidence - 0.935).abs() < 1e-12);
        assert_eq!(curve.bins[9].accuracy, 1.0);

        let expected_equal = (0.05 + 0.85 + 0.065) / 3.0;
        assert!((curve.mae(false) - expected_equal).abs() < 1e-12);
        let expected_weighted = (0.05 + 0.85 + 2.0 * 0.065) / 4.0;
        assert!((curve.mae(true) - expected_weighted).abs() < 1e-12);
    }

    #[test]
    fn top_confidence_of_one_lands_in_last_bin() {
        let curve = calibration_curve(&[1.0], &[true]);
        assert_eq!(curve.bins[9].count, 1);
    }

    #[test]
    fn coverage_curve_recomputes_quantile_per_target() {
        // Calibration scores 0.01..0.99; test rows built so that p_true is
        // 1 - score for the same grid.
        let calib: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let rows: Vec<Vec<f64>> = (1..100)
            .map(|i| {
                let p = 1.0 - i as f64 / 100.0;
                vec![p, 1.0 - p]
            })
            .collect();
        let units: Vec<(&[f64], usize)> = rows.iter().map(|r| (r.as_slice(), 1)).collect();
        let curve = coverage_curve(&calib, &units, &[0.5, 0.9]).unwrap();
        assert_eq!(
            curve.levels[0].quantile,
            conformal_quantile(&calib, 0.5).unwrap()
        );
        assert_eq!(
            curve.levels[1].quantile,
            conformal_quantile(&calib, 0.1).unwrap()
        );
        for level in &curve.levels {
            assert!(
                level.empirical >= level.target,
                "coverage {} below target {}",
                level.empirical,
                level.target
            );
        }
        assert!(curve.mae < 0.02);
    }

    #[test]
    fn coverage_curve_validates_targets() {
        let calib = [0.5];
        let row = [1.0];
        let units: Vec<(&[f64], usize)> = vec![(&row, 1)];
        assert!(coverage_curve(&calib, &units, &[1.0]).is_err());
        assert!(coverage_curve(&calib, &units, &[]).is_err());
    }

    #[test]
    fn empirical_cdf_collapses_duplicates() {
        let cdf = EmpiricalCdf::from_values(&[3.0, 1.0, 2.0, 2.0]).unwrap();
        let expect: Vec<(f64, f64)> = vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)];
        let got: Vec<(f64, f64)> = cdf.points.iter().map(|p| (p.value, p.cumulative)).collect();
        assert_eq!(got, expect);
        assert_eq!(cdf.eval(0.5), 0.0);
        assert_eq!(cdf.eval(2.0), 0.75);
        assert_eq!(cdf.eval(2.5), 0.75);
        assert_eq!(cdf.eval(9.0), 1.0);
    }

    #[test]
    fn ks_distance_extremes() {
        let a = EmpiricalCdf::from_values(&[1.0, 2.0]).unwrap();
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b = EmpiricalCdf::from_values(&[10.0, 20.0]).unwrap();
        assert_eq!(ks_distance(&a, &b), 1.0);
        let c = EmpiricalCdf::from_values(&[1.0, 20.0]).unwrap();
        assert_eq!(ks_distance(&a, &c), 0.5);
    }

    #[test]
    fn threshold_matches_worked_example() {
        let values: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let d = infer_threshold(&values, 0.3).unwrap();
        assert_eq!(d.threshold, 8.0);
        assert_eq!(d.deferred, 3);
        assert!((d.realized_fraction - 0.3).abs() < 1e-12);
    }

    #[test]
    fn threshold_respects_budget_under_ties() {
        // A tie block larger than the allowance cannot be split.
        let d = infer_threshold(&[5.0, 5.0, 5.0, 1.0], 0.5).unwrap();
        assert!(d.threshold.is_infinite());
        assert_eq!(d.deferred, 0);
        // With room for the whole block it is taken.
        let d = infer_threshold(&[5.0, 5.0, 5.0, 1.0], 0.75).unwrap();
        assert_eq!(d.threshold, 5.0);
        assert_eq!(d.deferred, 3);
    }

    #[test]
    fn threshold_handles_tiny_budgets() {
        let values: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let d = infer_threshold(&values, 0.05).unwrap();
        assert!(d.threshold.is_infinite());
        assert_eq!(d.deferred, 0);
        assert_eq!(d.realized_fraction, 0.0);
    }

    #[test]
    fn threshold_validates_inputs() {
        assert!(infer_threshold(&[], 0.5).is_err());
        assert!(infer_threshold(&[1.0], 0.0).is_err());
        assert!(infer_threshold(&[1.0], 1.5).is_err());
        assert!(infer_threshold(&[f64::NAN], 0.5).is_err());
    }

    #[test]
    fn spearman_handles_monotone_and_ties() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let up = [10.0, 20.0, 30.0, 40.0];
        assert!((spearman_rank_correlation(&a, &up).unwrap() - 1.0).abs() < 1e-12);
        let down = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman_rank_correlation(&a, &down).unwrap() + 1.0).abs() < 1e-12);
        // Identical tie structure is still a perfect rank match.
        let tied_a = [1.0, 2.0, 2.0, 3.0];
        let tied_b = [5.0, 7.0, 7.0, 9.0];
        assert!((spearman_rank_correlation(&tied_a, &tied_b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_zero_variance_is_zero() {
        let a = [1.0, 1.0, 1.0];
        let b = [1.0, 2.0, 3.0];
        assert_eq!(spearman_rank_correlation(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn spearman_validates_inputs() {
        assert!(spearman_rank_correlation(&[1.0], &[1.0, 2.0]).is_err());
        assert!(spearman_rank_correlation(&[1.0], &[1.0]).is_err());
    }
}
