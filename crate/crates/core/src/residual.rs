//! Hand-rolled residual model: a small MLP mapping per-unit features to a
//! strictly positive difficulty scale.
//!
//! Architecture: `[input, hidden..., 1]` with ReLU between hidden layers and
//! a softplus head plus a small epsilon, so the output can never reach zero
//! (it is used as a divisor in normalized nonconformity scores). Training
//! minimizes mean squared error against observed absolute depth errors with
//! mini-batch Adam or SGD, through the softplus head, in a single-threaded
//! loop so identical seeds reproduce identical parameters bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TriageError};

/// RNG stream for weight initialization.
const INIT_STREAM: u64 = 3;
/// RNG stream for batch shuffling.
const SHUFFLE_STREAM: u64 = 4;

/// Additive floor of the softplus head.
pub const OUTPUT_EPSILON: f64 = 1e-6;

/// Step size for central finite differences in [`gradient_check`].
const FD_STEP: f64 = 1e-5;

/// Absolute floor of the gradient-check denominator. Without it, parameters
/// on dead ReLU paths (analytic gradient exactly zero) would divide
/// finite-difference rounding noise by itself and report spurious errors.
const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Weights and biases of the residual MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Layer widths including input and the scalar output, e.g. `[17, 64, 64, 1]`.
    pub layer_dims: Vec<usize>,
    /// One flat row-major matrix per layer: `weights[l]` has shape
    /// `layer_dims[l + 1] x layer_dims[l]`.
    pub weights: Vec<Vec<f64>>,
    /// One bias vector per layer, length `layer_dims[l + 1]`.
    pub biases: Vec<Vec<f64>>,
    /// Additive floor applied after the softplus head.
    pub output_epsilon: f64,
}

impl MlpParams {
    /// Checks that the dimension chain is consistent and every parameter is
    /// finite.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(TriageError::invariant("<mlp>", msg));
        if self.layer_dims.len() < 2 {
            return fail("needs at least input and output dims".into());
        }
        if *self.layer_dims.last().unwrap() != 1 {
            return fail("output layer must be scalar".into());
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return fail("zero-width layer".into());
        }
        let layers = self.layer_dims.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return fail(format!(
                "expected {layers} weight/bias pairs, got {}/{}",
                self.weights.len(),
                self.biases.len()
            ));
        }
        for l in 0..layers {
            let (rows, cols) = (self.layer_dims[l + 1], self.layer_dims[l]);
            if self.weights[l].len() != rows * cols {
                return fail(format!("weights[{l}] is not {rows}x{cols}"));
            }
            if self.biases[l].len() != rows {
                return fail(format!("biases[{l}] is not length {rows}"));
            }
            if self.weights[l].iter().chain(&self.biases[l]).any(|v| !v.is_finite()) {
                return fail(format!("non-finite parameter in layer {l}"));
            }
        }
        if !self.output_epsilon.is_finite() || self.output_epsilon <= 0.0 {
            return fail("output_epsilon must be positive".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }
}

/// Numerically stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Derivative of softplus.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pre-activations and activations of every layer for one input.
struct Trace {
    /// `pre[l]` = affine output of layer `l` (before its nonlinearity).
    pre: Vec<Vec<f64>>,
    /// `act[l]` = input to layer `l`; `act[0]` is the network input.
    act: Vec<Vec<f64>>,
}

fn forward_trace(params: &MlpParams, input: &[f64]) -> Result<Trace> {
    if input.len() != params.input_dim() {
        return Err(TriageError::DimensionMismatch {
            expected: params.input_dim(),
            got: input.len(),
        });
    }
    let layers = params.num_layers();
    let mut pre = Vec::with_capacity(layers);
    let mut act = Vec::with_capacity(layers + 1);
    act.push(input.to_vec());
    for l in 0..layers {
        let (rows, cols) = (params.layer_dims[l + 1], params.layer_dims[l]);
        let x = &act[l];
        let mut z = params.biases[l].clone();
        for r in 0..rows {
            let row = &params.weights[l][r * cols..(r + 1) * cols];
            let mut dot = 0.0;
            for c in 0..cols {
                dot += row[c] * x[c];
            }
            z[r] += dot;
        }
        let a = if l + 1 < layers {
            z.iter().map(|&v| v.max(0.0)).collect()
        } else {
            Vec::new() // output layer: head applied by the caller
        };
        pre.push(z);
        act.push(a);
    }
    Ok(Trace { pre, act })
}

/// Positive residual prediction for one feature vector.
pub fn predict_residual(params: &MlpParams, input: &[f64]) -> Result<f64> {
    let trace = forward_trace(params, input)?;
    let z_out = trace.pre.last().unwrap()[0];
    Ok(softplus(z_out) + params.output_epsilon)
}

/// Glorot-uniform initialization: weights `U(-a, a)` with
/// `a = sqrt(6 / (fan_in + fan_out))`, biases zero.
pub fn glorot_init(input_dim: usize, hidden_dims: &[usize], seed: u64) -> MlpParams {
    let mut layer_dims = Vec::with_capacity(hidden_dims.len() + 2);
    layer_dims.push(input_dim);
    layer_dims.extend_from_slice(hidden_dims);
    layer_dims.push(1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..layer_dims.len() - 1 {
        let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(
            (0..fan_in * fan_out)
                .map(|_| rng.random_range(-a..a))
                .collect(),
        );
        biases.push(vec![0.0; fan_out]);
    }
    MlpParams {
        layer_dims,
        weights,
        biases,
        output_epsilon: OUTPUT_EPSILON,
    }
}

/// Gradient-descent flavor for [`train_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Hyperparameters for residual training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Hidden-layer widths.
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dims: vec![64, 64],
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            optimizer: Optimizer::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TriageError::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TriageError::Config("batch_size must be positive".into()));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(TriageError::Config("zero-width hidden layer".into()));
        }
        Ok(())
    }
}

/// Output of [`train_residual`]: fitted parameters plus the full-data MSE
/// before training (`loss_history[0]`) and after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedResidual {
    pub params: MlpParams,
    pub loss_history: Vec<f64>,
}

/// Zero-filled gradient buffers with the same shape as `params`.
fn zero_grads(params: &MlpParams) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (
        params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
        params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
    )
}

/// MSE of the network on a full dataset.
fn mse(params: &MlpParams, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in inputs.iter().zip(targets) {
        let u = predict_residual(params, x)?;
        total += (u - y) * (u - y);
    }
    Ok(total / inputs.len() as f64)
}

/// MSE and its gradient (mean over the batch) via backpropagation through
/// the softplus head.
fn loss_and_gradients(
    params: &MlpParams,
    inputs: &[Vec<f64>],
    targets: &[f64],
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let layers = params.num_layers();
    let (mut gw, mut gb) = zero_grads(params);
    let scale = 1.0 / inputs.len() as f64;
    let mut loss = 0.0;

    for (x, &y) in inputs.iter().zip(targets) {
        let trace = forward_trace(params, x)?;
        let z_out = trace.pre[layers - 1][0];
        let u = softplus(z_out) + params.output_epsilon;
        loss += scale * (u - y) * (u - y);

        // delta = dLoss/d(pre-activation), starting at the scalar head.
        let mut delta = vec![2.0 * scale * (u - y) * sigmoid(z_out)];
        for l in (0..layers).rev() {
            let (rows, cols) = (params.layer_dims[l + 1], params.layer_dims[l]);
            let below = &trace.act[l];
            for r in 0..rows {
                gb[l][r] += delta[r];
                let grad_row = &mut gw[l][r * cols..(r + 1) * cols];
                for c in 0..cols {
                    grad_row[c] += delta[r] * below[c];
                }
            }
            if l == 0 {
                break;
            }
            // Push delta through W_l and the ReLU of layer l - 1.
            let mut next = vec![0.0; cols];
            for r in 0..rows {
                let row = &params.weights[l][r * cols..(r + 1) * cols];
                for c in 0..cols {
                    next[c] += row[c] * delta[r];
                }
            }
            for (c, d) in next.iter_mut().enumerate() {
                if trace.pre[l - 1][c] <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = next;
        }
    }
    Ok((loss, gw, gb))
}

/// Fits the residual MLP on `(inputs, targets)` pairs.
///
/// Returns the fitted parameters along with the per-epoch full-data MSE;
/// zero epochs returns the initialization unchanged. Fails with
/// [`TriageError::NumericalDivergence`] if the loss leaves the finite range.
pub fn train_residual(
    inputs: &[Vec<f64>],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainedResidual> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(TriageError::EmptyScores("no training units".into()));
    }
    if inputs.len() != targets.len() {
        return Err(TriageError::DimensionMismatch {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let input_dim = inputs[0].len();
    for x in inputs {
        if x.len() != input_dim {
            return Err(TriageError::DimensionMismatch {
                expected: input_dim,
                got: x.len(),
            });
        }
    }

    let mut params = glorot_init(input_dim, &cfg.hidden_dims, cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);

    // Adam moment buffers (unused for SGD).
    let (mut mw, mut mb) = zero_grads(&params);
    let (mut vw, mut vb) = zero_grads(&params);
    let mut step = 0u32;

    let initial_mse = mse(&params, inputs, targets)?;
    if !initial_mse.is_finite() {
        return Err(TriageError::NumericalDivergence {
            epoch: 0,
            message: format!("MSE is {initial_mse} before the first update"),
        });
    }
    let mut loss_history = vec![initial_mse];
    let mut order: Vec<usize> = (0..inputs.len()).collect();

    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch_x: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let batch_y: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (_, gw, gb) = loss_and_gradients(&params, &batch_x, &batch_y)?;

            step += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for l in 0..params.weights.len() {
                        for (w, g) in params.weights[l].iter_mut().zip(&gw[l]) {
                            *w -= cfg.learning_rate * g;
                        }
                        for (b, g) in params.biases[l].iter_mut().zip(&gb[l]) {
                            *b -= cfg.learning_rate * g;
                        }
                    }
                }
                Optimizer::Adam {
                    beta1,
                    beta2,
                    epsilon,
                } => {
                    let bc1 = 1.0 - beta1.powi(step as i32);
                    let bc2 = 1.0 - beta2.powi(step as i32);
                    let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
                        for i in 0..p.len() {
                            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                            let m_hat = m[i] / bc1;
                            let v_hat = v[i] / bc2;
                            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                        }
                    };
                    for l in 0..params.weights.len() {
                        update(&mut params.weights[l], &mut mw[l], &mut vw[l], &gw[l]);
                        update(&mut params.biases[l], &mut mb[l], &mut vb[l], &gb[l]);
                    }
                }
            }
        }
        let epoch_mse = mse(&params, inputs, targets)?;
        if !epoch_mse.is_finite() {
            return Err(TriageError::NumericalDivergence {
                epoch,
                message: format!("training MSE became {epoch_mse}"),
            });
        }
        loss_history.push(epoch_mse);
    }

    Ok(TrainedResidual {
        params,
        loss_history,
    })
}

/// Compares backprop gradients against central finite differences (step
/// 1e-5) for every parameter and returns the maximum relative error
/// `|analytic - numeric| / max(|analytic| + |numeric|, 1e-4)`.
///
/// Meaningful away from ReLU kinks: a pre-activation within the step of
/// zero makes the finite difference straddle the kink and measure a
/// different one-sided slope.
pub fn gradient_check(params: &MlpParams, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(TriageError::EmptyScores("gradient check needs a batch".into()));
    }
    let (_, gw, gb) = loss_and_gradients(params, inputs, targets)?;

    fn slot(p: &mut MlpParams, l: usize, i: usize, is_bias: bool) -> &mut f64 {
        if is_bias {
            &mut p.biases[l][i]
        } else {
            &mut p.weights[l][i]
        }
    }

    let mut work = params.clone();
    let mut worst: f64 = 0.0;
    let layers = params.num_layers();
    for l in 0..layers {
        for (is_bias, count) in [(false, params.weights[l].len()), (true, params.biases[l].len())] {
            for i in 0..count {
                let original = *slot(&mut work, l, i, is_bias);
                *slot(&mut work, l, i, is_bias) = original + FD_STEP;
                let up = mse(&work, inputs, targets)?;
                *slot(&mut work, l, i, is_bias) = original - FD_STEP;
                let down = mse(&work, inputs, targets)?;
                *slot(&mut work, l, i, is_bias) = original;

                let numeric = (up - down) / (2.0 * FD_STEP);
                let analytic = if is_bias { gb[l][i] } else { gw[l][i] };
                let rel = (analytic - numeric).abs()
                    / (analytic.abs() + numeric.abs()).max(GRAD_CHECK_FLOOR);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data(seed: u64, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        // Positive heteroscedastic-looking target driven by coordinate 0.
        let targets: Vec<f64> = inputs
            .iter()
            .map(|x| 0.05 + 0.2 * x[0].abs() + 0.01 * rng.random::<f64>())
            .collect();
        (inputs, targets)
    }

    #[test]
    fn zero_network_outputs_softplus_of_zero() {
        let mut params = glorot_init(4, &[8], 1);
        for w in &mut params.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        let out = predict_residual(&params, &[0.3, -0.1, 0.7, 0.0]).unwrap();
        let expected = 2.0f64.ln() + OUTPUT_EPSILON;
        assert!((out - expected).abs() < 1e-15, "got {out}, want {expected}");
    }

    #[test]
    fn output_is_strictly_positive() {
        let params = glorot_init(6, &[16, 16], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..500 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-50.0..50.0)).collect();
            assert!(predict_residual(&params, &x).unwrap() > 0.0);
        }
    }

    #[test]
    fn input_dimension_is_checked() {
        let params = glorot_init(4, &[8], 1);
        assert!(matches!(
            predict_residual(&params, &[1.0, 2.0]),
            Err(TriageError::DimensionMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn single_parameter_gradient_matches_hand_derivative() {
        // u = softplus(w * x) + eps, loss = (u - y)^2.
        // dLoss/dw = 2 (u - y) * sigmoid(w x) * x.
        let params = MlpParams {
            layer_dims: vec![1, 1],
            weights: vec![vec![0.3]],
            biases: vec![vec![0.1]],
            output_epsilon: OUTPUT_EPSILON,
        };
        let inputs = vec![vec![2.0]];
        let targets = vec![0.5];
        let (loss, gw, gb) = loss_and_gradients(&params, &inputs, &targets).unwrap();

        let z = 0.3 * 2.0 + 0.1;
        let u = softplus(z) + OUTPUT_EPSILON;
        assert!((loss - (u - 0.5) * (u - 0.5)).abs() < 1e-15);
        let dw = 2.0 * (u - 0.5) * sigmoid(z) * 2.0;
        let db = 2.0 * (u - 0.5) * sigmoid(z);
        assert!((gw[0][0] - dw).abs() < 1e-12, "{} vs {dw}", gw[0][0]);
        assert!((gb[0][0] - db).abs() < 1e-12, "{} vs {db}", gb[0][0]);
    }

    #[test]
    fn gradient_check_passes_on_random_network() {
        let params = glorot_init(4, &[8], 7);
        let (inputs, targets) = toy_data(8, 16, 4);
        let err = gradient_check(&params, &inputs, &targets).unwrap();
        assert!(err < 1e-4, "max relative gradient error {err}");
    }

    #[test]
    fn gradient_check_is_tight_in_the_linear_region() {
        // All-positive weights and biases with positive inputs keep every
        // ReLU active, far from any kink.
        let mut params = glorot_init(3, &[5], 11);
        for w in &mut params.weights {
            w.iter_mut().for_each(|v| *v = v.abs() + 0.05);
        }
        for b in &mut params.biases {
            b.iter_mut().for_each(|v| *v = 0.5);
        }
        let inputs: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..3).map(|j| 0.2 + 0.1 * (i + j) as f64).collect())
            .collect();
        let targets: Vec<f64> = (0..8).map(|i| 0.1 + 0.05 * i as f64).collect();
        let err = gradient_check(&params, &inputs, &targets).unwrap();
        assert!(err < 1e-7, "max relative gradient error {err}");
    }

    #[test]
    fn training_reduces_loss_and_records_history() {
        let (inputs, targets) = toy_data(3, 256, 3);
        let cfg = TrainConfig {
            hidden_dims: vec![16, 16],
            epochs: 60,
            seed: 4,
            ..TrainConfig::default()
        };
        let fit = train_residual(&inputs, &targets, &cfg).unwrap();
        assert_eq!(fit.loss_history.len(), 61);
        let initial = fit.loss_history[0];
        let last = *fit.loss_history.last().unwrap();
        assert!(
            last < initial,
            "expected loss to drop, got {initial} -> {last}"
        );
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let (inputs, targets) = toy_data(5, 128, 3);
        let cfg = TrainConfig {
            hidden_dims: vec![8],
            epochs: 5,
            seed: 17,
            ..TrainConfig::default()
        };
        let a = train_residual(&inputs, &targets, &cfg).unwrap();
        let b = train_residual(&inputs, &targets, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (inputs, targets) = toy_data(6, 32, 3);
        let cfg = TrainConfig {
            hidden_dims: vec![8],
            epochs: 0,
            seed: 9,
            ..TrainConfig::default()
        };
        let fit = train_residual(&inputs, &targets, &cfg).unwrap();
        assert_eq!(fit.params, glorot_init(3, &[8], 9));
        assert_eq!(fit.loss_history.len(), 1);
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        // Targets beyond 1e154 overflow the squared error in the very first
        // loss evaluation.
        let (inputs, _) = toy_data(7, 32, 3);
        let targets = vec![1e200; 32];
        let cfg = TrainConfig {
            hidden_dims: vec![8],
            epochs: 5,
            optimizer: Optimizer::Sgd,
            seed: 2,
            ..TrainConfig::default()
        };
        match train_residual(&inputs, &targets, &cfg) {
            Err(TriageError::NumericalDivergence { epoch, .. }) => assert_eq!(epoch, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn runaway_learning_rate_saturates_instead_of_diverging() {
        // An absurd SGD step drives the output pre-activation far negative;
        // the softplus head then saturates near its epsilon floor and the
        // output sigmoid gates every gradient to zero. Training freezes at a
        // finite (bad) loss rather than producing NaN, so the run completes.
        let (inputs, targets) = toy_data(7, 64, 3);
        let cfg = TrainConfig {
            hidden_dims: vec![8],
            epochs: 10,
            learning_rate: 1e12,
            optimizer: Optimizer::Sgd,
            seed: 2,
            ..TrainConfig::default()
        };
        let fit = train_residual(&inputs, &targets, &cfg).unwrap();
        assert!(fit.loss_history.iter().all(|l| l.is_finite()));
        assert!(fit.params.weights.iter().flatten().all(|w| w.is_finite()));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let cfg = TrainConfig::default();
        assert!(train_residual(&[], &[], &cfg).is_err());
        assert!(train_residual(&[vec![1.0]], &[1.0, 2.0], &cfg).is_err());
        assert!(train_residual(&[vec![1.0], vec![1.0, 2.0]], &[1.0, 2.0], &cfg).is_err());
    }

    #[test]
    fn params_serialize_round_trip() {
        let params = glorot_init(4, &[8, 8], 13);
        let json = serde_json::to_string(&params).unwrap();
        let back: MlpParams = serde_json::from_str(&json).unwrap();
        assert_eq!(params, back);
        back.validate().unwrap();
    }
}
