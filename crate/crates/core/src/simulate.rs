//! Simulated expert-in-the-loop annotation and budget sweeps.
//!
//! The simulator mimics a reviewer who receives the top-K most uncertain
//! units of a ranking and fixes them perfectly: corrected depth markers
//! snap to ground truth and corrected label rows become one-hot. Quality is
//! then re-measured on the test split — segment IoU for depths, accuracy /
//! precision / recall for labels — and swept across budgets, with a
//! replicated random baseline for comparison.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{predict_interval, predict_set, Calibration, ResidualTable};
use crate::data::types::{Dataset, PredictionBundle, ProfileSample, Split, Task};
use crate::error::{Result, TriageError};
use crate::ranking::{
    entropy_scores, mcd_std_scores, random_scores, rank, set_size_scores, width_scores, QueryUnit,
    StrategyKind, UnitId,
};

// ───────────────────────── profile IoU ─────────────────────────

/// Mean per-layer segment IoU of one profile.
///
/// Markers cut `(0, 1]` into half-open segments starting at depth 0; layer
/// `t` spans `(d_{t-1}, d_t]`. Predicted markers are copied and sorted
/// before segmentation so a non-monotone prediction still yields valid
/// segments. A zero-length predicted and true segment pair counts as a
/// perfect match; a zero-length segment against a real one counts as zero.
pub fn compute_iou(pred_depths: &[f64], true_depths: &[f64], num_horizons: usize) -> f64 {
    let mut pred: Vec<f64> = pred_depths[..num_horizons].to_vec();
    pred.sort_by(|a, b| a.total_cmp(b));

    let mut total = 0.0;
    let (mut prev_p, mut prev_t) = (0.0f64, 0.0f64);
    for t in 0..num_horizons {
        let (p_lo, p_hi) = (prev_p, pred[t]);
        let (t_lo, t_hi) = (prev_t, true_depths[t]);
        let inter = (p_hi.min(t_hi) - p_lo.max(t_lo)).max(0.0);
        let union = (p_hi - p_lo) + (t_hi - t_lo) - inter;
        total += if union == 0.0 { 1.0 } else { inter / union };
        prev_p = pred[t];
        prev_t = true_depths[t];
    }
    total / num_horizons as f64
}

/// Mean profile IoU over sample/bundle pairs. `NaN` on empty input.
pub fn dataset_iou(pairs: &[(&ProfileSample, &PredictionBundle)]) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|(s, b)| compute_iou(&b.pred_depths, &s.true_depths, s.num_horizons))
        .sum();
    total / pairs.len() as f64
}

// ───────────────────────── classification metrics ─────────────────────────

/// 1-based argmax of a probability row; ties resolve to the lowest class.
pub fn argmax_label(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = k;
        }
    }
    best + 1
}

/// Averaging mode for precision and recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    /// Unweighted mean over the classes present in the truth; classes the
    /// predictor never emits contribute zero precision.
    Macro,
    /// Pooled counts; for single-label data this equals accuracy.
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Accuracy plus averaged precision/recall for paired label vectors.
pub fn compute_classification_metrics(
    pred_labels: &[usize],
    true_labels: &[usize],
    average: Average,
) -> ClassificationMetrics {
    assert_eq!(pred_labels.len(), true_labels.len(), "paired inputs required");
    let n = true_labels.len();
    let correct = pred_labels
        .iter()
        .zip(true_labels)
        .filter(|(p, t)| p == t)
        .count();
    let accuracy = correct as f64 / n as f64;

    match average {
        Average::Micro => ClassificationMetrics {
            accuracy,
            precision: accuracy,
            recall: accuracy,
        },
        Average::Macro => {
            // Confusion counts per class present in the truth.
            let mut tp: BTreeMap<usize, usize> = BTreeMap::new();
            let mut fp: BTreeMap<usize, usize> = BTreeMap::new();
            let mut fn_: BTreeMap<usize, usize> = BTreeMap::new();
            for &t in true_labels {
                tp.entry(t).or_insert(0);
                fp.entry(t).or_insert(0);
                fn_.entry(t).or_insert(0);
            }
            for (&p, &t) in pred_labels.iter().zip(true_labels) {
                if p == t {
                    *tp.get_mut(&t).unwrap() += 1;
                } else {
                    *fn_.get_mut(&t).unwrap() += 1;
                    // Spurious predictions of classes absent from the truth
                    // fall outside every averaged class.
                    if let Some(count) = fp.get_mut(&p) {
                        *count += 1;
                    }
                }
            }
            let classes = tp.len() as f64;
            let mut precision = 0.0;
            let mut recall = 0.0;
            for (&c, &tp_c) in &tp {
                let fp_c = fp[&c];
                let fn_c = fn_[&c];
                if tp_c + fp_c > 0 {
                    precision += tp_c as f64 / (tp_c + fp_c) as f64;
                }
                recall += tp_c as f64 / (tp_c + fn_c) as f64;
            }
            ClassificationMetrics {
                accuracy,
                precision: precision / classes,
                recall: recall / classes,
            }
        }
    }
}

// ───────────────────────── budgets ─────────────────────────

/// A correction budget, either an absolute unit count or a fraction of the
/// query pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetSpec {
    Count(usize),
    Fraction(f64),
}

impl BudgetSpec {
    /// Resolves to a unit count. Fractions round to nearest with ties
    /// toward fewer corrections; counts beyond the pool are errors.
    pub fn resolve(&self, pool: usize) -> Result<usize> {
        match *self {
            BudgetSpec::Count(k) => {
                if k > pool {
                    Err(TriageError::BudgetExceedsPool {
                        requested: k,
                        pool,
                    })
                } else {
                    Ok(k)
                }
            }
            BudgetSpec::Fraction(f) => {
                if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                    return Err(TriageError::Config(format!(
                        "budget fraction {f} outside [0, 1]"
                    )));
                }
                // Nudged so products that are exact halves or integers in
                // real arithmetic are not pushed over by float error.
                let k = ((f * pool as f64) - 0.5 - 1e-9).ceil().max(0.0) as usize;
                Ok(k.min(pool))
            }
        }
    }
}

impl std::fmt::Display for BudgetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BudgetSpec::Count(k) => write!(f, "{k}"),
            BudgetSpec::Fraction(x) => write!(f, "{x}"),
        }
    }
}

/// Configuration for one budget sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetSweepConfig {
    /// Budgets in ascending order.
    pub budgets: Vec<BudgetSpec>,
    /// Strategies to sweep.
    pub strategies: Vec<StrategyKind>,
    /// Replications of the random baseline.
    pub random_replications: usize,
    /// Expected dropout replicate count (informational; the sweep reads the
    /// stored matrices).
    pub mcd_runs: usize,
    /// Seed for the random baseline.
    pub seed: u64,
}

impl Default for BudgetSweepConfig {
    fn default() -> Self {
        BudgetSweepConfig {
            budgets: (0..=20).map(|i| BudgetSpec::Fraction(i as f64 * 0.05)).collect(),
            strategies: StrategyKind::ALL.to_vec(),
            random_replications: 100,
            mcd_runs: 50,
            seed: 42,
        }
    }
}

/// Quality metric reported by a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Iou,
    Accuracy,
    Precision,
    Recall,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Iou => "iou",
            MetricKind::Accuracy => "accuracy",
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One measured point of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub task: Task,
    pub strategy: StrategyKind,
    /// Resolved budget in units.
    pub budget: usize,
    pub metric: MetricKind,
    pub mean: f64,
    /// Population standard deviation across replications (0 for
    /// single-replication deterministic strategies).
    pub std: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

// ───────────────────────── corrections ─────────────────────────

/// Predictions after simulated expert corrections: an overlay of corrected
/// bundles on top of the untouched originals.
#[derive(Debug)]
pub struct CorrectedPredictions<'a> {
    base: &'a BTreeMap<String, PredictionBundle>,
    overrides: BTreeMap<String, PredictionBundle>,
}

impl CorrectedPredictions<'_> {
    pub fn get(&self, id: &str) -> Option<&PredictionBundle> {
        self.overrides.get(id).or_else(|| self.base.get(id))
    }

    /// Number of profiles with at least one correction.
    pub fn corrected_profiles(&self) -> usize {
        self.overrides.len()
    }
}

/// Applies perfect corrections to the top `k` units of a ranking.
///
/// Depth units snap the predicted marker to the true depth; label units
/// replace the probability row with a one-hot row on the true label. A
/// whole-profile unit (`horizon_index` 0) corrects every real layer of its
/// task. The input dataset is never mutated.
pub fn apply_corrections<'a>(
    ds: &'a Dataset,
    ranking: &[QueryUnit],
    k: usize,
) -> Result<CorrectedPredictions<'a>> {
    if k > ranking.len() {
        return Err(TriageError::BudgetExceedsPool {
            requested: k,
            pool: ranking.len(),
        });
    }
    let index = ds.index();
    let mut overrides: BTreeMap<String, PredictionBundle> = BTreeMap::new();
    for qu in &ranking[..k] {
        let id = qu.unit.profile_id.as_str();
        let sample = *index
            .get(id)
            .ok_or_else(|| TriageError::invariant(id, "ranked unit without sample"))?;
        if !overrides.contains_key(id) {
            let bundle = ds
                .predictions
                .get(id)
                .ok_or_else(|| TriageError::MissingPrediction(id.to_string()))?;
            overrides.insert(id.to_string(), bundle.clone());
        }
        let bundle = overrides.get_mut(id).expect("inserted above");

        let slots: Vec<usize> = if qu.unit.horizon_index == 0 {
            (0..sample.num_horizons).collect()
        } else {
            if qu.unit.horizon_index > sample.num_horizons {
                return Err(TriageError::invariant(
                    id,
                    format!("ranked marker {} beyond real layers", qu.unit.horizon_index),
                ));
            }
            vec![qu.unit.horizon_index - 1]
        };
        for t in slots {
            match qu.task {
                Task::Depth => bundle.pred_depths[t] = sample.true_depths[t],
                Task::Label => {
                    let row = &mut bundle.softmax[t];
                    row.iter_mut().for_each(|p| *p = 0.0);
                    row[sample.true_labels[t] - 1] = 1.0;
                }
            }
        }
    }
    Ok(CorrectedPredictions {
        base: &ds.predictions,
        overrides,
    })
}

// ───────────────────────── sweep ─────────────────────────

/// Borrowed context required by [`run_sweep`].
pub struct SweepInputs<'a> {
    pub dataset: &'a Dataset,
    /// Depth calibration; required by the interval-width strategy.
    pub depth_cal: Option<&'a Calibration>,
    /// Label calibration; required by the set-size strategy.
    pub label_cal: Option<&'a Calibration>,
    /// Residual scales; required by the interval-width strategy.
    pub residuals: Option<&'a ResidualTable>,
    /// Tasks to sweep, usually `[Task::Depth, Task::Label]`.
    pub tasks: &'a [Task],
    pub average: Average,
}

/// Metrics measured for one task under one corrected prediction overlay.
fn task_metrics(
    task: Task,
    pairs: &[(&ProfileSample, &PredictionBundle)],
    corrected: &CorrectedPredictions,
    average: Average,
) -> Vec<(MetricKind, f64)> {
    match task {
        Task::Depth => {
            let total: f64 = pairs
                .iter()
                .map(|(s, b)| {
                    let bundle = corrected.get(&s.id).unwrap_or(b);
                    compute_iou(&bundle.pred_depths, &s.true_depths, s.num_horizons)
                })
                .sum();
            vec![(MetricKind::Iou, total / pairs.len() as f64)]
        }
        Task::Label => {
            let mut preds = Vec::new();
            let mut truths = Vec::new();
            for (s, b) in pairs {
                let bundle = corrected.get(&s.id).unwrap_or(b);
                for t in 0..s.num_horizons {
                    preds.push(argmax_label(&bundle.softmax[t]));
                    truths.push(s.true_labels[t]);
                }
            }
            let m = compute_classification_metrics(&preds, &truths, average);
            vec![
                (MetricKind::Accuracy, m.accuracy),
                (MetricKind::Precision, m.precision),
                (MetricKind::Recall, m.recall),
            ]
        }
    }
}

/// Query pool for one task: every real layer of every test pair, in pair
/// order.
fn unit_pool(pairs: &[(&ProfileSample, &PredictionBundle)]) -> Vec<UnitId> {
    let mut pool = Vec::new();
    for (s, _) in pairs {
        for t in 1..=s.num_horizons {
            pool.push(UnitId::new(s.id.clone(), t));
        }
    }
    pool
}

/// Deterministic ranking for one strategy over the test pool.
fn strategy_ranking(
    strategy: StrategyKind,
    pairs: &[(&ProfileSample, &PredictionBundle)],
    inputs: &SweepInputs,
) -> Result<Vec<QueryUnit>> {
    let scored = match strategy {
        StrategyKind::ConformalWidth => {
            let cal = inputs.depth_cal.ok_or_else(|| {
                TriageError::MissingArtifact("depth calibration for interval widths".into())
            })?;
            let residuals = inputs.residuals.ok_or_else(|| {
                TriageError::MissingArtifact("residual table for interval widths".into())
            })?;
            let mut units = Vec::new();
            for (s, b) in pairs {
                for t in 0..s.num_horizons {
                    let u = residuals.get(&s.id, t).ok_or_else(|| {
                        TriageError::MissingArtifact(format!(
                            "residual for profile `{}` marker {}",
                            s.id,
                            t + 1
                        ))
                    })?;
                    let interval = predict_interval(b.pred_depths[t], u, cal)?;
                    units.push((UnitId::new(s.id.clone(), t + 1), interval));
                }
            }
            width_scores(&units)
        }
        StrategyKind::McdStd => {
            let mut units = Vec::new();
            for (s, b) in pairs {
                let mcd = b.mcd_depths.as_ref().ok_or_else(|| {
                    TriageError::MissingArtifact(format!(
                        "dropout replicates for profile `{}`",
                        s.id
                    ))
                })?;
                for t in 0..s.num_horizons {
                    let column: Vec<f64> = mcd.iter().map(|row| row[t]).collect();
                    units.push((UnitId::new(s.id.clone(), t + 1), column));
                }
            }
            mcd_std_scores(&units)?
        }
        StrategyKind::Entropy => {
            let mut units = Vec::new();
            for (s, b) in pairs {
                for t in 0..s.num_horizons {
                    units.push((UnitId::new(s.id.clone(), t + 1), b.softmax[t].as_slice()));
                }
            }
            entropy_scores(&units)
        }
        StrategyKind::SetSize => {
            let cal = inputs.label_cal.ok_or_else(|| {
                TriageError::MissingArtifact("label calibration for set sizes".into())
            })?;
            let mut sets = Vec::new();
            for (s, b) in pairs {
                for t in 0..s.num_horizons {
                    sets.push((UnitId::new(s.id.clone(), t + 1), predict_set(&b.softmax[t], cal)?));
                }
            }
            let views: Vec<_> = sets.iter().map(|(u, set)| (u.clone(), set)).collect();
            set_size_scores(&views)
        }
        StrategyKind::Random => {
            return Err(TriageError::Config(
                "random rankings are drawn per replication inside the sweep".into(),
            ))
        }
    };
    rank(scored)
}

/// Splitmix-style seed derivation for replication streams.
fn derive_seed(base: u64, lane: u64, counter: u64) -> u64 {
    let mut z = base
        ^ lane.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ counter.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sweeps every configured strategy and budget over the test split.
///
/// Deterministic strategies are ranked once and evaluated at each budget;
/// the random baseline redraws its ranking `random_replications` times with
/// counter-derived seeds (replications run in parallel, assembled in
/// replication order, so results do not depend on thread count).
pub fn run_sweep(inputs: &SweepInputs, cfg: &BudgetSweepConfig) -> Result<SweepResult> {
    if cfg.budgets.is_empty() {
        return Err(TriageError::Config("no budgets to sweep".into()));
    }
    if cfg.strategies.is_empty() {
        return Err(TriageError::Config("no strategies to sweep".into()));
    }
    let pairs = inputs.dataset.paired(Split::Test)?;
    if pairs.is_empty() {
        return Err(TriageError::EmptyScores("test split is empty".into()));
    }
    let pool = unit_pool(&pairs);
    let budgets: Vec<usize> = cfg
        .budgets
        .iter()
        .map(|b| b.resolve(pool.len()))
        .collect::<Result<_>>()?;
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(TriageError::Config(
            "budgets must be sorted ascending".into(),
        ));
    }

    let mut cells = Vec::new();
    for &task in inputs.tasks {
        for &strategy in &cfg.strategies {
            match strategy.task() {
                Some(t) if t != task => continue,
                _ => {}
            }
            if strategy == StrategyKind::Random {
                let reps = cfg.random_replications;
                if reps == 0 {
                    return Err(TriageError::Config(
                        "random_replications must be positive".into(),
                    ));
                }
                // rep -> budget -> metric values, assembled in rep order.
                let per_rep: Vec<Result<Vec<Vec<(MetricKind, f64)>>>> = (0..reps)
                    .into_par_iter()
                    .map(|rep| {
                        let seed = derive_seed(cfg.seed, task as u64, rep as u64);
                        let ranking = rank(random_scores(&pool, task, seed))?;
                        budgets
                            .iter()
                            .map(|&k| {
                                let corrected = apply_corrections(inputs.dataset, &ranking, k)?;
                                Ok(task_metrics(task, &pairs, &corrected, inputs.average))
                            })
                            .collect()
                    })
                    .collect();
                let per_rep: Vec<Vec<Vec<(MetricKind, f64)>>> =
                    per_rep.into_iter().collect::<Result<_>>()?;
                for (bi, &budget) in budgets.iter().enumerate() {
                    let metric_count = per_rep[0][bi].len();
                    for mi in 0..metric_count {
                        let metric = per_rep[0][bi][mi].0;
                        let values: Vec<f64> =
                            per_rep.iter().map(|rep| rep[bi][mi].1).collect();
                        let mean = values.iter().sum::<f64>() / reps as f64;
                        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                            / reps as f64;
                        cells.push(SweepCell {
                            task,
                            strategy,
                            budget,
                            metric,
                            mean,
                            std: var.sqrt(),
                            replications: reps,
                        });
                    }
                }
            } else {
                let ranking = strategy_ranking(strategy, &pairs, inputs)?;
                for &budget in &budgets {
                    let corrected = apply_corrections(inputs.dataset, &ranking, budget)?;
                    for (metric, mean) in task_metrics(task, &pairs, &corrected, inputs.average) {
                        cells.push(SweepCell {
                            task,
                            strategy,
                            budget,
                            metric,
                            mean,
                            std: 0.0,
                            replications: 1,
                        });
                    }
                }
            }
        }
    }
    Ok(SweepResult { cells })
}
