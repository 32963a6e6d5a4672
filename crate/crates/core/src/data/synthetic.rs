//! Synthetic profile generator with controllable difficulty.
//!
//! The generator builds ground truth and upstream-model predictions in one
//! pass, which makes the corpus *calibrated by construction*: each label is
//! drawn from the very distribution the model would report at temperature 1,
//! so reported confidence matches empirical accuracy exactly in expectation.
//! Two knobs then break that idealization in controlled ways:
//!
//! * `heteroscedasticity` scales how strongly the depth-error spread depends
//!   on feature coordinate 0, giving a residual model signal to learn;
//! * `miscalibration_temperature` tempers the *reported* probability rows
//!   (T < 1 sharpens them into overconfidence) while labels keep being drawn
//!   from the untempered distribution.
//!
//! All randomness flows through one seeded ChaCha stream per concern, so a
//! config reproduces its dataset bit for bit.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::split::split_assign;
use crate::data::types::{
    Dataset, PredictionBundle, ProfileSample, Split, DEFAULT_CLASS_COUNT, DEFAULT_FEATURE_DIM,
    DEPTH_SLOTS, MIN_HORIZONS, STOP_TOKEN,
};
use crate::error::{Result, TriageError};

/// Stream index for profile content (split assignment uses its own).
const CONTENT_STREAM: u64 = 1;

/// Base scale of depth-marker noise.
const NOISE_BASE: f64 = 0.03;
/// Fraction of the base scale that is always present.
const NOISE_FLOOR: f64 = 0.25;
/// Feature-driven part of the noise scale (active when heteroscedasticity > 0).
const NOISE_SLOPE: f64 = 1.75;
/// Noise scale applied to padded marker slots.
const PAD_NOISE: f64 = 0.005;
/// Smallest relative gap between consecutive depth markers.
const MIN_GAP: f64 = 0.05;

/// Everything needed to generate one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Number of profiles to generate.
    pub n_profiles: usize,
    /// Number of label classes.
    pub class_count: usize,
    /// Per-layer feature dimension.
    pub feature_dim: usize,
    /// Strength of the feature-dependent depth-noise component, `>= 0`.
    /// At 0 the noise scale is constant.
    pub heteroscedasticity: f64,
    /// Temperature applied to the reported probability rows, `> 0`.
    /// 1 reports the true generative distribution; < 1 is overconfident.
    pub miscalibration_temperature: f64,
    /// Probability of replacing a true label with a uniform class, `[0, 1)`.
    pub label_corruption: f64,
    /// Dropout replicates stored per bundle; 0 disables, otherwise `>= 2`.
    pub mcd_runs: usize,
    /// Master seed for content and split assignment.
    pub seed: u64,
    /// Train / val / calib / test ratios, summing to 1.
    pub split_ratios: [f64; 4],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_profiles: 1000,
            class_count: DEFAULT_CLASS_COUNT,
            feature_dim: DEFAULT_FEATURE_DIM,
            heteroscedasticity: 1.0,
            miscalibration_temperature: 1.0,
            label_corruption: 0.0,
            mcd_runs: 50,
            seed: 42,
            split_ratios: [0.6, 0.2, 0.1, 0.1],
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_profiles == 0 {
            return Err(TriageError::Config("n_profiles must be positive".into()));
        }
        if self.class_count == 0 {
            return Err(TriageError::Config("class_count must be positive".into()));
        }
        if self.feature_dim == 0 {
            return Err(TriageError::Config("feature_dim must be positive".into()));
        }
        if !self.heteroscedasticity.is_finite() || self.heteroscedasticity < 0.0 {
            return Err(TriageError::Config(format!(
                "heteroscedasticity {} must be finite and >= 0",
                self.heteroscedasticity
            )));
        }
        if !self.miscalibration_temperature.is_finite() || self.miscalibration_temperature <= 0.0 {
            return Err(TriageError::Config(format!(
                "miscalibration_temperature {} must be finite and > 0",
                self.miscalibration_temperature
            )));
        }
        if !self.label_corruption.is_finite() || !(0.0..1.0).contains(&self.label_corruption) {
            return Err(TriageError::Config(format!(
                "label_corruption {} must lie in [0, 1)",
                self.label_corruption
            )));
        }
        if self.mcd_runs == 1 {
            return Err(TriageError::Config(
                "mcd_runs must be 0 (disabled) or at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Numerically stable softmax over a logit slice.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Draws an index from a discrete distribution given one uniform variate.
fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Depth-noise scale for a real marker with feature coordinate `f0`.
fn noise_scale(heteroscedasticity: f64, f0: f64) -> f64 {
    NOISE_BASE * (NOISE_FLOOR + NOISE_SLOPE * heteroscedasticity * f0)
}

/// Generates a dataset from `cfg`, deterministic given `cfg.seed`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(CONTENT_STREAM);
    let unit_normal = Normal::new(0.0, 1.0).expect("unit normal is well-formed");

    let mut samples = Vec::with_capacity(cfg.n_profiles);
    let mut predictions = BTreeMap::new();

    for i in 0..cfg.n_profiles {
        let id = format!("p{i:06}");
        let num_horizons = rng.random_range(MIN_HORIZONS..=DEPTH_SLOTS);

        // Depth markers from normalized positive gaps; the final real marker
        // is pinned to the profile bottom exactly.
        let gaps: Vec<f64> = (0..num_horizons)
            .map(|_| rng.random_range(MIN_GAP..1.0))
            .collect();
        let total: f64 = gaps.iter().sum();
        let mut true_depths = vec![STOP_TOKEN; DEPTH_SLOTS];
        let mut acc = 0.0;
        for (t, gap) in gaps.iter().enumerate() {
            acc += gap;
            true_depths[t] = acc / total;
        }
        true_depths[num_horizons - 1] = 1.0;

        let features: Vec<Vec<f64>> = (0..num_horizons)
            .map(|_| (0..cfg.feature_dim).map(|_| rng.random::<f64>()).collect())
            .collect();

        // Labels and reported probability rows. The true label is drawn from
        // the untempered softmax; the stored row may be tempered.
        let mut true_labels = Vec::with_capacity(num_horizons);
        let mut softmax_rows = Vec::with_capacity(num_horizons);
        for _ in 0..num_horizons {
            let peak = rng.random_range(0..cfg.class_count);
            let strength = rng.random_range(0.5..10.0);
            let mut logits: Vec<f64> = (0..cfg.class_count)
                .map(|_| unit_normal.sample(&mut rng))
                .collect();
            logits[peak] += strength;
            let generative = softmax(&logits);
            let mut label = categorical(&generative, rng.random::<f64>());
            let corrupt_draw = rng.random::<f64>();
            if corrupt_draw < cfg.label_corruption {
                label = rng.random_range(0..cfg.class_count);
            }
            true_labels.push(label + 1);
            let tempered: Vec<f64> = logits
                .iter()
                .map(|z| z / cfg.miscalibration_temperature)
                .collect();
            softmax_rows.push(softmax(&tempered));
        }

        // Predicted markers: truth plus feature-scaled noise, clamped, then
        // sorted over the real prefix so predicted profiles stay monotone.
        let mut pred_depths = vec![STOP_TOKEN; DEPTH_SLOTS];
        let mut scales = vec![PAD_NOISE; DEPTH_SLOTS];
        for t in 0..DEPTH_SLOTS {
            if t < num_horizons {
                scales[t] = noise_scale(cfg.heteroscedasticity, features[t][0]);
            }
            let noise = unit_normal.sample(&mut rng) * scales[t];
            pred_depths[t] = (true_depths[t] + noise).clamp(0.0, 1.0);
        }
        pred_depths[..num_horizons].sort_by(|a, b| a.total_cmp(b));

        let mcd_depths = if cfg.mcd_runs >= 2 {
            let rows: Vec<Vec<f64>> = (0..cfg.mcd_runs)
                .map(|_| {
                    (0..DEPTH_SLOTS)
                        .map(|t| {
                            let noise = unit_normal.sample(&mut rng) * scales[t];
                            (pred_depths[t] + noise).clamp(0.0, 1.0)
                        })
                        .collect()
                })
                .collect();
            Some(rows)
        } else {
            None
        };

        samples.push(ProfileSample {
            id: id.clone(),
            num_horizons,
            true_depths,
            true_labels,
            features,
            split: Split::Train, // reassigned below
        });
        predictions.insert(
            id.clone(),
            PredictionBundle {
                id,
                pred_depths,
                mcd_depths,
                softmax: softmax_rows,
                residuals: None,
            },
        );
    }

    let ds = Dataset {
        samples,
        predictions,
        class_count: cfg.class_count,
        feature_dim: cfg.feature_dim,
    };
    let ds = split_assign(ds, cfg.split_ratios, cfg.seed)?;
    ds.validate()?;
    Ok(ds)
}
