//! Distribution-free uncertainty toolkit for a two-task soil-profile
//! predictor, plus a simulated expert-correction harness.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`data`] — profile samples, prediction bundles, splits, wire formats,
//!    and a seeded synthetic generator.
//! 2. [`residual`] — a small hand-written MLP that learns per-slot residual
//!    scales for depth-marker normalization.
//! 3. [`conformal`] — split conformal calibration producing depth intervals
//!    and horizon label sets with finite-sample coverage.
//! 4. [`ranking`] — uncertainty scores and deterministic triage orderings.
//! 5. [`simulate`] — simulated expert corrections and budget sweeps.
//! 6. [`diagnostics`] — reliability curves, coverage curves, score CDFs,
//!    and deferral-threshold inference.
//! 7. [`report`] — CSV/SVG export.
//!
//! Everything downstream of a seed is deterministic: ordered maps, fixed
//! iteration orders, and named RNG streams mean two runs with the same seed
//! produce byte-identical artifacts.

pub mod conformal;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod pipeline;
pub mod ranking;
pub mod report;
pub mod residual;
pub mod simulate;

pub use conformal::{
    classification_scores, conformal_quantile, empirical_coverage_classification,
    empirical_coverage_regression, predict_interval, predict_set, regression_scores, Calibration,
    DepthInterval, LabelSet, ResidualTable,
};
pub use data::{
    generate_synthetic, load_dataset, save_dataset, split_assign, split_counts, Dataset,
    PredictionBundle, ProfileSample, Split, SyntheticConfig, Task, WireFormat,
};
pub use data::types::{DEFAULT_CLASS_COUNT, DEFAULT_FEATURE_DIM, DEPTH_SLOTS, STOP_TOKEN};
pub use diagnostics::{
    calibration_curve, coverage_curve, cumulative_distribution, infer_threshold, ks_distance,
    spearman_rank_correlation, CalibrationCurve, CoverageCurve, CumulativeDistribution,
    EmpiricalCdf, ThresholdDecision,
};
pub use error::{Result, TriageError};
pub use pipeline::{
    calibrate_tasks, covered_fraction, depth_rows, fit_residual_model, label_rows,
    residual_table_from_model, residual_training_data, DepthRow, LabelRow, ResidualMode,
};
pub use ranking::{
    aggregate_by_profile, entropy, rank, ProfileAggregate, QueryUnit, StrategyKind, UnitId,
};
pub use residual::{
    glorot_init, gradient_check, predict_residual, train_residual, MlpParams, Optimizer,
    TrainConfig, TrainedResidual,
};
pub use simulate::{
    apply_corrections, compute_classification_metrics, compute_iou, dataset_iou, run_sweep,
    Average, BudgetSpec, BudgetSweepConfig, CorrectedPredictions, MetricKind, SweepCell,
    SweepInputs, SweepResult,
};
