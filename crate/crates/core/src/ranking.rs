//! Uncertainty scores and descending-priority rankings for query selection.
//!
//! Every strategy maps annotation units (one marker slot or one layer label
//! of a profile) to a real uncertainty, then [`rank`] orders units from most
//! to least uncertain with a deterministic tie-break. Query pools are built
//! from real layers only — padded marker slots carry no annotatable content,
//! so callers never present them here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{DepthInterval, LabelSet};
use crate::data::types::Task;
use crate::error::{Result, TriageError};

/// RNG stream for the random baseline.
const RANDOM_STREAM: u64 = 5;

/// The selectable ranking strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Width of the conformal depth interval (regression units).
    ConformalWidth,
    /// Population standard deviation across dropout replicates (regression
    /// units).
    McdStd,
    /// Shannon entropy of the probability row (label units).
    Entropy,
    /// Conformal label-set size (label units).
    SetSize,
    /// Uniform random priority, the control baseline (either task).
    Random,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::ConformalWidth,
        StrategyKind::McdStd,
        StrategyKind::Entropy,
        StrategyKind::SetSize,
        StrategyKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::ConformalWidth => "conformal_width",
            StrategyKind::McdStd => "mcd_std",
            StrategyKind::Entropy => "entropy",
            StrategyKind::SetSize => "set_size",
            StrategyKind::Random => "random",
        }
    }

    /// The task whose units this strategy scores; `None` for the random
    /// baseline, which applies to both.
    pub fn task(self) -> Option<Task> {
        match self {
            StrategyKind::ConformalWidth | StrategyKind::McdStd => Some(Task::Depth),
            StrategyKind::Entropy | StrategyKind::SetSize => Some(Task::Label),
            StrategyKind::Random => None,
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = TriageError;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                TriageError::Config(format!(
                    "unknown strategy `{s}` (expected one of conformal_width|mcd_std|entropy|set_size|random)"
                ))
            })
    }
}

/// Identifies one annotation unit: a profile plus a 1-based layer index.
/// Index 0 denotes a whole-profile unit produced by aggregation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitId {
    pub profile_id: String,
    pub horizon_index: usize,
}

impl UnitId {
    pub fn new(profile_id: impl Into<String>, horizon_index: usize) -> Self {
        UnitId {
            profile_id: profile_id.into(),
            horizon_index,
        }
    }
}

/// One scored annotation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryUnit {
    pub unit: UnitId,
    pub task: Task,
    pub strategy: StrategyKind,
    pub uncertainty: f64,
}

/// Interval width as uncertainty.
pub fn width_scores(units: &[(UnitId, DepthInterval)]) -> Vec<QueryUnit> {
    units
        .iter()
        .map(|(unit, interval)| QueryUnit {
            unit: unit.clone(),
            task: Task::Depth,
            strategy: StrategyKind::ConformalWidth,
            uncertainty: interval.width(),
        })
        .collect()
}

/// Population standard deviation of each unit's dropout replicates.
pub fn mcd_std_scores(units: &[(UnitId, Vec<f64>)]) -> Result<Vec<QueryUnit>> {
    units
        .iter()
        .map(|(unit, replicates)| {
            let r = replicates.len();
            if r < 2 {
                return Err(TriageError::InsufficientReplicates {
                    profile_id: unit.profile_id.clone(),
                    horizon_index: unit.horizon_index,
                    got: r,
                });
            }
            let mean = replicates.iter().sum::<f64>() / r as f64;
            let var = replicates.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r as f64;
            Ok(QueryUnit {
                unit: unit.clone(),
                task: Task::Depth,
                strategy: StrategyKind::McdStd,
                uncertainty: var.sqrt(),
            })
        })
        .collect()
}

/// Shannon entropy in nats, with the `0 ln 0 := 0` convention.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Entropy of each unit's probability row.
pub fn entropy_scores(units: &[(UnitId, &[f64])]) -> Vec<QueryUnit> {
    units
        .iter()
        .map(|(unit, row)| QueryUnit {
            unit: unit.clone(),
            task: Task::Label,
            strategy: StrategyKind::Entropy,
            uncertainty: entropy(row),
        })
        .collect()
}

/// Conformal label-set size as uncertainty.
pub fn set_size_scores(units: &[(UnitId, &LabelSet)]) -> Vec<QueryUnit> {
    units
        .iter()
        .map(|(unit, set)| QueryUnit {
            unit: unit.clone(),
            task: Task::Label,
            strategy: StrategyKind::SetSize,
            uncertainty: set.size() as f64,
        })
        .collect()
}

/// Uniform random priorities, deterministic given the seed: one draw per
/// unit, in input order.
pub fn random_scores(units: &[UnitId], task: Task, seed: u64) -> Vec<QueryUnit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(RANDOM_STREAM);
    units
        .iter()
        .map(|unit| QueryUnit {
            unit: unit.clone(),
            task,
            strategy: StrategyKind::Random,
            uncertainty: rng.random::<f64>(),
        })
        .collect()
}

/// Orders units by descending uncertainty; ties break ascending by
/// `(profile_id, horizon_index)` so rankings are total and reproducible.
///
/// All units must share one task and strategy, carry finite uncertainties,
/// and have distinct ids.
pub fn rank(mut units: Vec<QueryUnit>) -> Result<Vec<QueryUnit>> {
    if let Some(first) = units.first() {
        let (task, strategy) = (first.task, first.strategy);
        for u in &units {
            if u.task != task || u.strategy != strategy {
                return Err(TriageError::Config(
                    "cannot rank a mix of tasks or strategies".into(),
                ));
            }
            if !u.uncertainty.is_finite() {
                return Err(TriageError::invariant(
                    &u.unit.profile_id,
                    format!(
                        "non-finite uncertainty for marker {}",
                        u.unit.horizon_index
                    ),
                ));
            }
        }
    }
    let mut ids: Vec<&UnitId> = units.iter().map(|u| &u.unit).collect();
    ids.sort();
    for pair in ids.windows(2) {
        if pair[0] == pair[1] {
            return Err(TriageError::invariant(
                &pair[0].profile_id,
                format!("duplicate query unit {}", pair[0].horizon_index),
            ));
        }
    }
    drop(ids);
    units.sort_by(|a, b| {
        b.uncertainty
            .total_cmp(&a.uncertainty)
            .then_with(|| a.unit.cmp(&b.unit))
    });
    Ok(units)
}

/// How to combine a profile's unit uncertainties into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileAggregate {
    Max,
    Mean,
}

/// Collapses unit scores to one whole-profile unit each (`horizon_index`
/// 0), keyed and ordered by profile id.
pub fn aggregate_by_profile(units: &[QueryUnit], mode: ProfileAggregate) -> Vec<QueryUnit> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<&str, (Task, StrategyKind, Vec<f64>)> = BTreeMap::new();
    for u in units {
        groups
            .entry(u.unit.profile_id.as_str())
            .or_insert((u.task, u.strategy, Vec::new()))
            .2
            .push(u.uncertainty);
    }
    groups
        .into_iter()
        .map(|(id, (task, strategy, values))| {
            let uncertainty = match mode {
                ProfileAggregate::Max => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ProfileAggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
            };
            QueryUnit {
                unit: UnitId::new(id, 0),
                task,
                strategy,
                uncertainty,
            }
        })
        .collect()
}
