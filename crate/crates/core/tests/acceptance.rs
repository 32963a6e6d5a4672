//! Acceptance gate for the library: one test per contract, each asserting a
//! pinned numeric condition and printing a `PASS` line with the measured
//! values. Reference values come from independent oracle implementations
//! written inside this file, never from the code under test.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use conformal_triage_core::diagnostics::DEFAULT_COVERAGE_TARGETS;
use conformal_triage_core::residual::OUTPUT_EPSILON;
use conformal_triage_core::simulate::BudgetSpec;
use conformal_triage_core::{
    calibration_curve, calibrate_tasks, classification_scores, compute_classification_metrics,
    compute_iou, conformal_quantile, coverage_curve, dataset_iou, entropy, fit_residual_model,
    generate_synthetic, glorot_init, gradient_check, infer_threshold, predict_interval,
    predict_residual, predict_set, regression_scores, run_sweep, spearman_rank_correlation,
    Average, BudgetSweepConfig, Calibration, Dataset, MetricKind, MlpParams, ResidualTable, Split,
    StrategyKind, SweepInputs, SyntheticConfig, Task, TrainConfig, DEPTH_SLOTS,
};

/// A flat positive residual scale for contracts that do not depend on
/// adaptivity (the coverage guarantee holds for any fixed positive scale).
fn constant_residuals(ds: &Dataset) -> ResidualTable {
    let mut table = ResidualTable::new();
    for s in &ds.samples {
        table.insert(s.id.clone(), vec![0.05; DEPTH_SLOTS]).unwrap();
    }
    table
}

#[test]
fn acceptance_01_coverage_guarantee() {
    let start = Instant::now();
    const SEEDS: u64 = 20;
    const ALPHA: f64 = 0.1;

    let per_seed: Vec<(f64, f64, usize, usize)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cfg = SyntheticConfig {
                n_profiles: 4000,
                mcd_runs: 0,
                seed: 1_000 + seed,
                ..SyntheticConfig::default()
            };
            let ds = generate_synthetic(&cfg).unwrap();
            let residuals = constant_residuals(&ds);
            let calib = ds.paired(Split::Calib).unwrap();
            let test = ds.paired(Split::Test).unwrap();

            let depth_scores = regression_scores(&calib, &residuals).unwrap();
            let depth_cal = Calibration::fit(Task::Depth, &depth_scores, ALPHA).unwrap();
            let mut depth_hits = 0usize;
            let mut depth_total = 0usize;
            for (s, b) in &test {
                for t in 0..DEPTH_SLOTS {
                    let u = residuals.get(&s.id, t).unwrap();
                    let interval = predict_interval(b.pred_depths[t], u, &depth_cal).unwrap();
                    depth_hits += usize::from(interval.contains(s.true_depths[t]));
                    depth_total += 1;
                }
            }

            let label_scores = classification_scores(&calib);
            let label_cal = Calibration::fit(Task::Label, &label_scores, ALPHA).unwrap();
            let mut label_hits = 0usize;
            let mut label_total = 0usize;
            for (s, b) in &test {
                for t in 0..s.num_horizons {
                    let set = predict_set(&b.softmax[t], &label_cal).unwrap();
                    label_hits += usize::from(set.contains(s.true_labels[t]));
                    label_total += 1;
                }
            }

            (
                depth_hits as f64 / depth_total as f64,
                label_hits as f64 / label_total as f64,
                label_scores.len(),
                label_total,
            )
        })
        .collect();

    let mean_interval: f64 = per_seed.iter().map(|r| r.0).sum::<f64>() / SEEDS as f64;
    let mean_set: f64 = per_seed.iter().map(|r| r.1).sum::<f64>() / SEEDS as f64;
    let mean_calib_units: f64 = per_seed.iter().map(|r| r.2 as f64).sum::<f64>() / SEEDS as f64;
    let mean_test_units: f64 = per_seed.iter().map(|r| r.3 as f64).sum::<f64>() / SEEDS as f64;

    // Calibration/test pools are sized at ~2000 label units per seed.
    assert!(
        (1600.0..=2400.0).contains(&mean_calib_units),
        "calibration pool drifted: {mean_calib_units}"
    );
    assert!(
        (1600.0..=2400.0).contains(&mean_test_units),
        "test pool drifted: {mean_test_units}"
    );
    assert!(
        (0.885..=0.925).contains(&mean_interval),
        "mean interval coverage {mean_interval} outside [0.885, 0.925]"
    );
    assert!(
        (0.885..=0.925).contains(&mean_set),
        "mean set coverage {mean_set} outside [0.885, 0.925]"
    );
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "coverage check took {secs:.1}s, budget 30s");
    println!(
        "PASS 01 coverage: intervals {mean_interval:.4}, sets {mean_set:.4} \
         (bounds [0.885, 0.925]; ~{mean_calib_units:.0} calib units; {secs:.1}s)"
    );
}

/// Reference quantile: sort ascending and index directly.
fn quantile_oracle(scores: &[f64], alpha: f64) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((1.0 - alpha) * (n as f64 + 1.0)).ceil() as usize;
    if rank > n {
        f64::INFINITY
    } else {
        sorted[rank - 1]
    }
}

#[test]
fn acceptance_02_quantile_matches_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut infinite_cases = 0usize;
    for case in 0..1000 {
        let n = rng.random_range(1..=200);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        // Every third case drives alpha below 1/(n+1) to force the +inf
        // sentinel branch.
        let alpha = if case % 3 == 0 {
            rng.random_range(1e-6..(1.0 / (n as f64 + 1.0)))
        } else {
            rng.random_range(0.01..0.99)
        };
        let got = conformal_quantile(&scores, alpha).unwrap();
        let expect = quantile_oracle(&scores, alpha);
        if expect.is_infinite() {
            infinite_cases += 1;
            assert!(got.is_infinite(), "case {case}: expected +inf, got {got}");
        } else {
            assert_eq!(got, expect, "case {case}: n={n}, alpha={alpha}");
        }
    }
    assert!(infinite_cases >= 100, "only {infinite_cases} sentinel cases exercised");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "quantile oracle sweep took {secs:.1}s, budget 5s");
    println!("PASS 02 quantile oracle: 1000 cases exact, {infinite_cases} +inf cases ({secs:.1}s)");
}

#[test]
fn acceptance_03_width_ranking_beats_random() {
    let start = Instant::now();
    const SEEDS: u64 = 20;
    let budgets: Vec<BudgetSpec> = (1..=19).map(|i| BudgetSpec::Fraction(0.05 * i as f64)).collect();

    // Per budget index: summed mean IoU across seeds for each strategy.
    let per_seed: Vec<(Vec<f64>, Vec<f64>)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cfg = SyntheticConfig {
                n_profiles: 400,
                feature_dim: 8,
                heteroscedasticity: 1.0,
                mcd_runs: 0,
                seed: 3_000 + seed,
                ..SyntheticConfig::default()
            };
            let ds = generate_synthetic(&cfg).unwrap();
            // The softplus head must travel from its ~0.69 cold start down
            // into the 0.01..0.05 target range before it can learn the
            // per-unit structure; a short low-rate fit stalls at a constant.
            let fit = fit_residual_model(
                &ds,
                &TrainConfig {
                    hidden_dims: vec![32],
                    epochs: 150,
                    learning_rate: 5e-3,
                    seed: 97 + seed,
                    ..TrainConfig::default()
                },
            )
            .unwrap();
            let table =
                conformal_triage_core::residual_table_from_model(&ds, &fit.params).unwrap();
            let (depth_cal, _) = calibrate_tasks(&ds, &table, 0.1).unwrap();

            let inputs = SweepInputs {
                dataset: &ds,
                depth_cal: Some(&depth_cal),
                label_cal: None,
                residuals: Some(&table),
                tasks: &[Task::Depth],
                average: Average::Macro,
            };
            let sweep_cfg = BudgetSweepConfig {
                budgets: budgets.clone(),
                strategies: vec![StrategyKind::ConformalWidth, StrategyKind::Random],
                random_replications: 100,
                mcd_runs: 0,
                seed: 555 + seed,
            };
            let result = run_sweep(&inputs, &sweep_cfg).unwrap();
            let series = |strategy: StrategyKind| -> Vec<f64> {
                result
                    .cells
                    .iter()
                    .filter(|c| c.strategy == strategy && c.metric == MetricKind::Iou)
                    .map(|c| c.mean)
                    .collect()
            };
            (series(StrategyKind::ConformalWidth), series(StrategyKind::Random))
        })
        .collect();

    let n_budgets = budgets.len();
    let mut width_mean = vec![0.0f64; n_budgets];
    let mut random_mean = vec![0.0f64; n_budgets];
    for (width, random) in &per_seed {
        assert_eq!(width.len(), n_budgets);
        assert_eq!(random.len(), n_budgets);
        for i in 0..n_budgets {
            width_mean[i] += width[i] / SEEDS as f64;
            random_mean[i] += random[i] / SEEDS as f64;
        }
    }

    let mut strict = 0usize;
    for i in 0..n_budgets {
        assert!(
            width_mean[i] >= random_mean[i],
            "budget {}%: width {:.5} < random {:.5}",
            5 * (i + 1),
            width_mean[i],
            random_mean[i]
        );
        if width_mean[i] > random_mean[i] {
            strict += 1;
        }
    }
    assert!(
        strict * 2 >= n_budgets,
        "strict improvement at only {strict}/{n_budgets} budgets"
    );
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 300.0, "ranking efficacy took {secs:.1}s, budget 300s");
    let mid = n_budgets / 2;
    println!(
        "PASS 03 ranking: width >= random at 19/19 budgets, strict at {strict} \
         (50% budget: {:.4} vs {:.4}; {secs:.1}s)",
        width_mean[mid], random_mean[mid]
    );
}

#[test]
fn acceptance_04_conformal_beats_reliability_on_overconfident_model() {
    let start = Instant::now();
    const SEEDS: u64 = 20;
    let outcomes: Vec<(f64, f64)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cfg = SyntheticConfig {
                n_profiles: 600,
                miscalibration_temperature: 0.5,
                mcd_runs: 0,
                seed: 4_000 + seed,
                ..SyntheticConfig::default()
            };
            let ds = generate_synthetic(&cfg).unwrap();
            let calib = ds.paired(Split::Calib).unwrap();
            let test = ds.paired(Split::Test).unwrap();

            let calib_scores = classification_scores(&calib);
            let mut test_units: Vec<(&[f64], usize)> = Vec::new();
            let mut confidences = Vec::new();
            let mut correct = Vec::new();
            for (s, b) in &test {
                for t in 0..s.num_horizons {
                    let row = b.softmax[t].as_slice();
                    test_units.push((row, s.true_labels[t]));
                    let arg = conformal_triage_core::simulate::argmax_label(row);
                    confidences.push(row[arg - 1]);
                    correct.push(arg == s.true_labels[t]);
                }
            }

            let conformal_mae = coverage_curve(&calib_scores, &test_units, &DEFAULT_COVERAGE_TARGETS)
                .unwrap()
                .mae;
            let reliability_mae = calibration_curve(&confidences, &correct).mae(false);
            (conformal_mae, reliability_mae)
        })
        .collect();

    let wins = outcomes.iter().filter(|(c, r)| c < r).count();
    assert!(
        wins >= 19,
        "conformal MAE beat reliability MAE in only {wins}/20 seeds: {outcomes:?}"
    );
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "calibration comparison took {secs:.1}s, budget 60s");
    let mean_c: f64 = outcomes.iter().map(|o| o.0).sum::<f64>() / SEEDS as f64;
    let mean_r: f64 = outcomes.iter().map(|o| o.1).sum::<f64>() / SEEDS as f64;
    println!(
        "PASS 04 calibration: conformal MAE {mean_c:.4} < reliability MAE {mean_r:.4} \
         in {wins}/20 seeds ({secs:.1}s)"
    );
}

#[test]
fn acceptance_05_entropy_tracks_set_size() {
    let start = Instant::now();
    let cfg = SyntheticConfig {
        n_profiles: 300,
        miscalibration_temperature: 2.0,
        mcd_runs: 0,
        seed: 5,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&cfg).unwrap();
    let residuals = constant_residuals(&ds);
    let (_, label_cal) = calibrate_tasks(&ds, &residuals, 0.1).unwrap();

    let mut entropies = Vec::new();
    let mut sizes = Vec::new();
    for s in &ds.samples {
        let b = &ds.predictions[&s.id];
        for t in 0..s.num_horizons {
            entropies.push(entropy(&b.softmax[t]));
            sizes.push(predict_set(&b.softmax[t], &label_cal).unwrap().size() as f64);
        }
    }
    assert!(entropies.len() >= 1000, "only {} units", entropies.len());
    let rho = spearman_rank_correlation(&entropies, &sizes).unwrap();
    assert!(rho >= 0.8, "Spearman rho {rho:.4} < 0.8 over {} units", entropies.len());
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "correlation check took {secs:.1}s, budget 5s");
    println!(
        "PASS 05 entropy/set-size: Spearman rho {rho:.4} >= 0.8 over {} units ({secs:.1}s)",
        entropies.len()
    );
}

#[test]
fn acceptance_06_threshold_equals_top_k_modulo_ties() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..100 {
        let n = rng.random_range(1..=500);
        // Alternate continuous values with a coarse grid that forces ties.
        let values: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
        } else {
            (0..n).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect()
        };
        for budget in [0.05, 0.10, 0.25] {
            let d = infer_threshold(&values, budget).unwrap();
            assert!(
                d.realized_fraction <= budget,
                "case {case}: realized {} > budget {budget}",
                d.realized_fraction
            );

            // Top-K oracle: walk descending distinct tie blocks while the
            // running total fits the allowance.
            let allowance = (budget * n as f64 + 1e-9).floor() as usize;
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let mut expect_deferred = 0usize;
            let mut expect_threshold = f64::INFINITY;
            let mut i = 0;
            while i < n {
                let mut j = i;
                while j < n && sorted[j] == sorted[i] {
                    j += 1;
                }
                if j > allowance {
                    break;
                }
                expect_deferred = j;
                expect_threshold = sorted[i];
                i = j;
            }
            assert_eq!(d.deferred, expect_deferred, "case {case}, budget {budget}");
            if expect_deferred == 0 {
                assert!(d.threshold.is_infinite(), "case {case}: empty deferral needs +inf");
            } else {
                assert_eq!(d.threshold, expect_threshold, "case {case}, budget {budget}");
            }
            assert_eq!(
                values.iter().filter(|&&v| v >= d.threshold).count(),
                d.deferred,
                "case {case}: cutoff does not reproduce the deferral set"
            );
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "threshold duality took {secs:.1}s, budget 5s");
    println!("PASS 06 threshold duality: 100 multisets x 3 budgets exact ({secs:.1}s)");
}

/// Reference overlap: per segment, measure intersection and union over the
/// elementary intervals between all four endpoint breakpoints.
fn iou_oracle(pred: &[f64], truth: &[f64], num_horizons: usize) -> f64 {
    let mut p = pred[..num_horizons].to_vec();
    p.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for i in 0..num_horizons {
        let (pl, ph) = (if i == 0 { 0.0 } else { p[i - 1] }, p[i]);
        let (tl, th) = (if i == 0 { 0.0 } else { truth[i - 1] }, truth[i]);
        let mut breaks = vec![pl, ph, tl, th];
        breaks.sort_by(f64::total_cmp);
        let mut inter = 0.0;
        let mut union = 0.0;
        for w in breaks.windows(2) {
            let len = w[1] - w[0];
            if len <= 0.0 {
                continue;
            }
            let mid = 0.5 * (w[0] + w[1]);
            let in_pred = mid > pl && mid < ph;
            let in_true = mid > tl && mid < th;
            if in_pred && in_true {
                inter += len;
            }
            if in_pred || in_true {
                union += len;
            }
        }
        total += if union == 0.0 { 1.0 } else { inter / union };
    }
    total / num_horizons as f64
}

/// Reference metrics: explicit confusion counts.
fn metrics_oracle(preds: &[usize], truths: &[usize], average: Average) -> (f64, f64, f64) {
    let n = truths.len();
    let correct = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    let accuracy = correct as f64 / n as f64;
    if matches!(average, Average::Micro) {
        return (accuracy, accuracy, accuracy);
    }
    let mut classes: Vec<usize> = truths.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut precision = 0.0;
    let mut recall = 0.0;
    for &c in &classes {
        let tp = preds.iter().zip(truths).filter(|(p, t)| **p == c && **t == c).count();
        let fp = preds.iter().zip(truths).filter(|(p, t)| **p == c && **t != c).count();
        let fn_ = preds.iter().zip(truths).filter(|(p, t)| **p != c && **t == c).count();
        precision += if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        recall += tp as f64 / (tp + fn_) as f64;
    }
    (accuracy, precision / classes.len() as f64, recall / classes.len() as f64)
}

#[test]
fn acceptance_07_metric_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        // Segment overlap on up to 4 random profiles per instance.
        let profiles = rng.random_range(1..=4);
        for _ in 0..profiles {
            let n_h = rng.random_range(2..=4);
            let mut truth: Vec<f64> = (0..n_h).map(|_| rng.random_range(0.01..1.0)).collect();
            truth.sort_by(f64::total_cmp);
            truth.dedup();
            while truth.len() < n_h {
                truth.push(truth.last().unwrap() + 0.01);
            }
            truth.resize(DEPTH_SLOTS, 1.0);
            // Predictions may be unsorted; both sides must sort identically.
            let mut pred: Vec<f64> = (0..n_h).map(|_| rng.random_range(0.0..1.0)).collect();
            pred.resize(DEPTH_SLOTS, 1.0);
            let got = compute_iou(&pred, &truth, n_h);
            let expect = iou_oracle(&pred, &truth, n_h);
            assert!(
                (got - expect).abs() <= 1e-12,
                "case {case}: overlap {got} vs oracle {expect}"
            );
        }

        // Classification metrics on up to 16 units over <= 4 classes.
        let classes = rng.random_range(2..=4);
        let units = rng.random_range(1..=16);
        let preds: Vec<usize> = (0..units).map(|_| rng.random_range(1..=classes)).collect();
        let truths: Vec<usize> = (0..units).map(|_| rng.random_range(1..=classes)).collect();
        for average in [Average::Macro, Average::Micro] {
            let got = compute_classification_metrics(&preds, &truths, average);
            let (acc, prec, rec) = metrics_oracle(&preds, &truths, average);
            assert!((got.accuracy - acc).abs() <= 1e-12, "case {case} accuracy");
            assert!((got.precision - prec).abs() <= 1e-12, "case {case} precision");
            assert!((got.recall - rec).abs() <= 1e-12, "case {case} recall");
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "metric oracles took {secs:.1}s, budget 5s");
    println!("PASS 07 metric oracles: 200 instances exact to 1e-12 ({secs:.1}s)");
}

/// Test-local forward pass exposing every pre-activation, used to verify the
/// gradient-check precondition (no pre-activation within reach of the
/// finite-difference step of a ReLU kink).
fn min_abs_preactivation(params: &MlpParams, inputs: &[Vec<f64>]) -> f64 {
    let mut min_abs = f64::INFINITY;
    for x in inputs {
        let mut act = x.clone();
        for l in 0..params.weights.len() {
            let (fan_in, fan_out) = (params.layer_dims[l], params.layer_dims[l + 1]);
            let mut next = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut z = params.biases[l][o];
                for i in 0..fan_in {
                    z += params.weights[l][o * fan_in + i] * act[i];
                }
                next[o] = z;
                if l + 1 < params.weights.len() {
                    min_abs = min_abs.min(z.abs());
                    next[o] = z.max(0.0);
                }
            }
            act = next;
        }
    }
    min_abs
}

#[test]
fn acceptance_08_gradient_check_and_positivity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for net in 0..20u64 {
        let input_dim = rng.random_range(2..=6);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2))
            .map(|_| rng.random_range(4..=12))
            .collect();
        let batch = rng.random_range(8..=16);
        let inputs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(0.05..0.5)).collect();

        // Resample initializations that start adjacent to a ReLU kink; the
        // central difference would straddle the kink and measure a
        // different one-sided slope there.
        let mut params = glorot_init(input_dim, &hidden, 80_000 + net);
        let mut attempt = 0u64;
        while min_abs_preactivation(&params, &inputs) < 1e-3 {
            attempt += 1;
            assert!(attempt < 50, "net {net}: no kink-free initialization found");
            params = glorot_init(input_dim, &hidden, 80_000 + net + 1_000 * attempt);
        }

        let err = gradient_check(&params, &inputs, &targets).unwrap();
        assert!(err < 1e-4, "net {net} ({input_dim}->{hidden:?}): gradient error {err:e}");
        worst = worst.max(err);
    }

    // Strict positivity of the softplus head over a wide input range.
    let params = glorot_init(6, &[16, 16], 88);
    let mut min_out = f64::INFINITY;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let u = predict_residual(&params, &x).unwrap();
        assert!(u > 0.0, "nonpositive residual {u}");
        min_out = min_out.min(u);
    }
    assert!(min_out >= OUTPUT_EPSILON);
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "gradient check took {secs:.1}s, budget 30s");
    println!(
        "PASS 08 network: max gradient error {worst:.2e} < 1e-4 on 20 nets; \
         min output {min_out:.2e} > 0 on 1e4 inputs ({secs:.1}s)"
    );
}

#[test]
fn acceptance_09_simulation_endpoints_and_monotonicity() {
    let start = Instant::now();
    let cfg = SyntheticConfig {
        n_profiles: 60,
        mcd_runs: 8,
        seed: 9,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&cfg).unwrap();
    let residuals = constant_residuals(&ds);
    let (depth_cal, label_cal) = calibrate_tasks(&ds, &residuals, 0.1).unwrap();
    let test = ds.paired(Split::Test).unwrap();
    let pool = ds.horizon_units(Split::Test);
    assert!(pool > 0);

    // Baselines computed directly on the uncorrected test split.
    let baseline_iou = dataset_iou(&test);
    let mut pred_labels = Vec::new();
    let mut true_labels = Vec::new();
    for (s, b) in &test {
        for t in 0..s.num_horizons {
            pred_labels.push(conformal_triage_core::simulate::argmax_label(&b.softmax[t]));
            true_labels.push(s.true_labels[t]);
        }
    }
    let baseline_acc =
        compute_classification_metrics(&pred_labels, &true_labels, Average::Macro).accuracy;

    let inputs = SweepInputs {
        dataset: &ds,
        depth_cal: Some(&depth_cal),
        label_cal: Some(&label_cal),
        residuals: Some(&residuals),
        tasks: &[Task::Depth, Task::Label],
        average: Average::Macro,
    };
    let sweep_cfg = BudgetSweepConfig {
        budgets: (0..=pool).map(BudgetSpec::Count).collect(),
        strategies: vec![
            StrategyKind::ConformalWidth,
            StrategyKind::McdStd,
            StrategyKind::Entropy,
            StrategyKind::SetSize,
        ],
        random_replications: 1,
        mcd_runs: 8,
        seed: 1,
    };
    let result = run_sweep(&inputs, &sweep_cfg).unwrap();

    let mut curves = 0usize;
    for (strategy, metric, baseline) in [
        (StrategyKind::ConformalWidth, MetricKind::Iou, baseline_iou),
        (StrategyKind::McdStd, MetricKind::Iou, baseline_iou),
        (StrategyKind::Entropy, MetricKind::Accuracy, baseline_acc),
        (StrategyKind::SetSize, MetricKind::Accuracy, baseline_acc),
    ] {
        let curve: Vec<(usize, f64)> = result
            .cells
            .iter()
            .filter(|c| c.strategy == strategy && c.metric == metric)
            .map(|c| (c.budget, c.mean))
            .collect();
        assert_eq!(curve.len(), pool + 1, "{strategy:?} curve incomplete");
        assert_eq!(curve[0].0, 0);
        assert_eq!(
            curve[0].1, baseline,
            "{strategy:?}: zero-budget cell differs from the direct baseline"
        );
        assert_eq!(
            curve[pool].1, 1.0,
            "{strategy:?}: full-budget {metric:?} must be exactly 1"
        );
        for pair in curve.windows(2) {
            assert!(
                pair[1].1 >= pair[0].1,
                "{strategy:?}: {metric:?} drops from {} to {} at budget {}",
                pair[0].1,
                pair[1].1,
                pair[1].0
            );
        }
        curves += 1;
    }
    assert_eq!(curves, 4);
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "simulation endpoints took {secs:.1}s, budget 60s");
    println!(
        "PASS 09 simulation: K=0 bit-exact, K={pool} reaches 1.0, 4 curves monotone \
         over every unit budget ({secs:.1}s)"
    );
}
