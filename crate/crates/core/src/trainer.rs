//! Kernel SVM training by mini-batch Nesterov accelerated gradient.
//!
//! By the representer theorem the decision function is
//! `f(x) = sum_j beta_j K(x_j, x)` over the training points, so the primal
//! problem becomes an unconstrained problem in `beta`:
//!
//! ```text
//! f(beta) = 1/2 beta' K beta + C/n sum_k L(xi_k),   xi_k = 1 - y_k (K beta)_k
//! ```
//!
//! Each NAG iteration draws `s` samples without replacement, takes the
//! gradient at the look-ahead point `beta + r v` (full regularizer, batch
//! loss term scaled by `C/s`), updates the velocity and coefficients, and
//! decays the learning rate by `exp(-eta t)`. There is no intercept.

use log::debug;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::kernel::{self, gram_matrix, KernelMatrix, KernelSpec};
use crate::loss::LossSpec;
use crate::seed::{self, Stream};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    /// Regularization trade-off `C`.
    pub c: f64,
    pub loss: LossSpec,
    pub kernel: KernelSpec,
    /// Initial value of every coefficient.
    pub beta0: f64,
    /// Initial value of every velocity component.
    pub v0: f64,
    pub alpha0: f64,
    /// Learning-rate decay factor.
    pub eta: f64,
    /// Momentum `r`.
    pub momentum: f64,
    /// Mini-batch size; `None` picks 4 below 100 samples and 32 otherwise.
    pub batch_size: Option<usize>,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            c: 1.0,
            loss: LossSpec::RoBoSS {
                a: 1.0,
                lambda: 1.0,
            },
            kernel: KernelSpec::Gaussian { sigma: 1.0 },
            beta0: 0.01,
            v0: 0.01,
            alpha0: 0.1,
            eta: 0.1,
            momentum: 0.6,
            batch_size: None,
            max_iters: 1000,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::param("C", self.c, "must be finite and > 0"));
        }
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(Error::param("alpha0", self.alpha0, "must be finite and > 0"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::param("eta", self.eta, "must be finite and > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param("momentum", self.momentum, "must lie in [0, 1)"));
        }
        if !self.beta0.is_finite() {
            return Err(Error::param("beta0", self.beta0, "must be finite"));
        }
        if !self.v0.is_finite() {
            return Err(Error::param("v0", self.v0, "must be finite"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", 0.0, "must be >= 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::param("batch_size", 0.0, "must be >= 1"));
        }
        self.loss.validate()?;
        self.kernel.validate()
    }

    /// Batch size for `n` training samples.
    pub fn resolve_batch_size(&self, n: usize) -> Result<usize> {
        let s = self
            .batch_size
            .unwrap_or(if n < 100 { 4 } else { 32 });
        if s > n {
            return Err(Error::param(
                "batch_size",
                s as f64,
                "must not exceed the number of training samples",
            ));
        }
        Ok(s)
    }
}

/// Optimizer state of one NAG run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub beta: Vec<f64>,
    pub velocity: Vec<f64>,
    pub alpha: f64,
    /// Completed iterations.
    pub t: usize,
}

impl OptState {
    pub fn new(n: usize, config: &TrainerConfig) -> Self {
        OptState {
            beta: vec![config.beta0; n],
            velocity: vec![config.v0; n],
            alpha: config.alpha0,
            t: 0,
        }
    }

    /// Applies `alpha <- alpha * exp(-eta t)` and advances `t`.
    ///
    /// The first decay uses `t = 0`, so after `t` iterations
    /// `alpha_t = alpha0 * exp(-eta t (t - 1) / 2)`.
    pub fn finish_iteration(&mut self, eta: f64) {
        self.alpha *= (-eta * self.t as f64).exp();
        self.t += 1;
    }
}

/// Learning rates after `0, 1, ..., steps` iterations.
pub fn learning_rate_schedule(alpha0: f64, eta: f64, steps: usize) -> Vec<f64> {
    let config = TrainerConfig {
        alpha0,
        eta,
        ..TrainerConfig::default()
    };
    let mut state = OptState::new(0, &config);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state.alpha);
    for _ in 0..steps {
        state.finish_iteration(eta);
        out.push(state.alpha);
    }
    out
}

fn check_labels(y: &[f64]) -> Result<()> {
    match y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        Some(&bad) => Err(Error::param("y", bad, "labels must be -1 or +1")),
        None => Ok(()),
    }
}

fn check_problem(gram: &KernelMatrix, y: &[f64], beta: Option<&[f64]>) -> Result<()> {
    if y.len() != gram.len() {
        return Err(Error::Shape {
            expected: gram.len(),
            actual: y.len(),
        });
    }
    if let Some(beta) = beta {
        if beta.len() != gram.len() {
            return Err(Error::Shape {
                expected: gram.len(),
                actual: beta.len(),
            });
        }
    }
    check_labels(y)
}

/// `1/2 beta' K beta + C/n sum_k L(1 - y_k (K beta)_k)`.
pub fn objective(config: &TrainerConfig, gram: &KernelMatrix, y: &[f64], beta: &[f64]) -> Result<f64> {
    config.loss.validate()?;
    check_problem(gram, y, Some(beta))?;
    let kb = gram.mul_vec(beta);
    Ok(objective_from_kb(config, y, beta, &kb))
}

fn objective_from_kb(config: &TrainerConfig, y: &[f64], beta: &[f64], kb: &[f64]) -> f64 {
    let n = y.len() as f64;
    let quad = 0.5 * kernel::dot(beta, kb);
    let loss: f64 = y
        .iter()
        .zip(kb)
        .map(|(yk, f)| config.loss.value_unchecked(1.0 - yk * f))
        .sum();
    quad + config.c / n * loss
}

/// Gradient of [`objective`] over the full training set.
pub fn full_gradient(
    config: &TrainerConfig,
    gram: &KernelMatrix,
    y: &[f64],
    beta: &[f64],
) -> Result<Vec<f64>> {
    config.loss.validate()?;
    check_problem(gram, y, Some(beta))?;
    let all: Vec<usize> = (0..y.len()).collect();
    Ok(batch_gradient(config, gram, y, beta, &all))
}

/// `K beta - C/|batch| sum_{j in batch} L'(xi_j) y_j K_j`.
fn batch_gradient(
    config: &TrainerConfig,
    gram: &KernelMatrix,
    y: &[f64],
    beta: &[f64],
    batch: &[usize],
) -> Vec<f64> {
    let kb = gram.mul_vec(beta);
    let mut grad = kb.clone();
    let scale = config.c / batch.len() as f64;
    for &j in batch {
        let row = gram.row_unchecked(j);
        let xi = 1.0 - y[j] * kb[j];
        let slope = config.loss.derivative_unchecked(xi);
        if slope == 0.0 {
            continue;
        }
        let coef = scale * slope * y[j];
        for (g, k) in grad.iter_mut().zip(row) {
            *g -= coef * k;
        }
    }
    grad
}

/// Coefficients and bookkeeping of one NAG run on a precomputed Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NagOutcome {
    pub beta: Vec<f64>,
    pub iterations_run: usize,
    pub final_objective: f64,
    pub batch_size: usize,
}

/// Runs the NAG iterations on `gram` with labels `y`.
pub fn fit_precomputed(config: &TrainerConfig, gram: &KernelMatrix, y: &[f64]) -> Result<NagOutcome> {
    config.validate()?;
    check_problem(gram, y, None)?;
    let n = y.len();
    let s = config.resolve_batch_size(n)?;
    let r = config.momentum;
    let mut rng = seed::rng(config.seed, Stream::Batches, 0);

    let mut state = OptState::new(n, config);
    let mut look_ahead = vec![0.0; n];
    let mut announced_stall = false;

    while state.t < config.max_iters {
        for ((b, v), la) in state.beta.iter().zip(&state.velocity).zip(&mut look_ahead) {
            *la = b + r * v;
        }
        if state.alpha != 0.0 {
            let batch = sample(&mut rng, n, s).into_vec();
            let grad = batch_gradient(config, gram, y, &look_ahead, &batch);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    iteration: state.t + 1,
                });
            }
            for (v, g) in state.velocity.iter_mut().zip(&grad) {
                *v = r * *v - state.alpha * g;
            }
        } else {
            // alpha * grad vanishes identically; only momentum carries on.
            for v in state.velocity.iter_mut() {
                *v *= r;
            }
        }
        for ((b, la), v) in state.beta.iter_mut().zip(&look_ahead).zip(&state.velocity) {
            *b = la + v;
        }
        state.finish_iteration(config.eta);

        if !announced_stall && state.alpha < config.alpha0 * 1e-12 {
            debug!(
                "learning rate fell below 1e-12 * alpha0 after {} of {} iterations",
                state.t, config.max_iters
            );
            announced_stall = true;
        }
    }

    let kb = gram.mul_vec(&state.beta);
    let final_objective = objective_from_kb(config, y, &state.beta, &kb);
    if state.beta.iter().any(|b| !b.is_finite()) || !final_objective.is_finite() {
        return Err(Error::NonFiniteGradient {
            iteration: state.t,
        });
    }
    Ok(NagOutcome {
        beta: state.beta,
        iterations_run: state.t,
        final_objective,
        batch_size: s,
    })
}

/// A fitted kernel expansion `f(x) = sum_j beta_j K(x_j, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub beta: Vec<f64>,
    pub support_points: Vec<Vec<f64>>,
    pub kernel: KernelSpec,
    /// Configuration as run, with the batch size resolved.
    pub config: TrainerConfig,
    pub iterations_run: usize,
    pub final_objective: f64,
}

/// Trains on samples `x` (one row per sample) with labels `y` in `{-1, +1}`.
pub fn fit(config: &TrainerConfig, x: &[Vec<f64>], y: &[f64]) -> Result<TrainedModel> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            actual: y.len(),
        });
    }
    check_labels(y)?;
    config.resolve_batch_size(x.len())?;
    let gram = gram_matrix(config.kernel, x)?;
    let outcome = fit_precomputed(config, &gram, y)?;
    Ok(TrainedModel {
        beta: outcome.beta,
        support_points: x.to_vec(),
        kernel: config.kernel,
        config: TrainerConfig {
            batch_size: Some(outcome.batch_size),
            ..*config
        },
        iterations_run: outcome.iterations_run,
        final_objective: outcome.final_objective,
    })
}

/// Sign with the tie `sign(0) = +1`.
pub fn label_of(decision: f64) -> f64 {
    if decision >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        self.support_points.first().map_or(0, Vec::len)
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self
            .beta
            .iter()
            .zip(&self.support_points)
            .map(|(b, sp)| b * self.kernel.eval_unchecked(sp, x))
            .sum())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.decision_value(x).map(label_of)
    }
}

/// On-disk form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub model: TrainedModel,
    /// Feature scaling applied to inputs before training, if any.
    pub scaler: Option<Scaler>,
}

impl ModelDocument {
    pub fn new(model: TrainedModel, scaler: Option<Scaler>) -> Self {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model,
            scaler,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "model format version {} (expected {})",
                doc.format_version, MODEL_FORMAT_VERSION
            )));
        }
        if doc.model.beta.len() != doc.model.support_points.len() {
            return Err(Error::Shape {
                expected: doc.model.support_points.len(),
                actual: doc.model.beta.len(),
            });
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roboss_config() -> TrainerConfig {
        TrainerConfig::default()
    }

    #[test]
    fn objective_at_zero_beta() {
        let x = vec![vec![0.0], vec![1.0], vec![3.0]];
        let y = vec![1.0, -1.0, 1.0];
        let gram = gram_matrix(KernelSpec::gaussian(1.0), &x).unwrap();
        let f = objective(&roboss_config(), &gram, &y, &[0.0; 3]).unwrap();
        assert!((f - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-15);

        let tiny_c = TrainerConfig {
            c: 1e-300,
            ..roboss_config()
        };
        assert!(objective(&tiny_c, &gram, &y, &[0.0; 3]).unwrap() < 1e-299);
    }

    #[test]
    fn gradient_single_sample() {
        let gram = gram_matrix(KernelSpec::gaussian(1.0), &[vec![0.0]]).unwrap();
        let g = full_gradient(&roboss_config(), &gram, &[1.0], &[0.0]).unwrap();
        assert!((g[0] + (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gradient_inactive_loss_is_regularizer() {
        // Linear kernel on well-separated points with large coefficients:
        // every margin exceeds one.
        let x = vec![vec![2.0], vec![-2.0]];
        let y = vec![1.0, -1.0];
        let config = TrainerConfig {
            kernel: KernelSpec::Linear,
            ..roboss_config()
        };
        let gram = gram_matrix(config.kernel, &x).unwrap();
        let beta = [1.0, -1.0];
        let kb = gram.mul_vec(&beta);
        assert!(y.iter().zip(&kb).all(|(yk, f)| yk * f >= 1.0));
        assert_eq!(full_gradient(&config, &gram, &y, &beta).unwrap(), kb);
    }

    #[test]
    fn label_and_shape_errors() {
        let gram = gram_matrix(KernelSpec::Linear, &[vec![1.0], vec![2.0]]).unwrap();
        let c = roboss_config();
        assert!(objective(&c, &gram, &[1.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(objective(&c, &gram, &[1.0], &[0.0, 0.0]).is_err());
        assert!(full_gradient(&c, &gram, &[1.0, -1.0], &[0.0]).is_err());
    }

    #[test]
    fn rejects_zero_iterations_and_oversized_batch() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![1.0, -1.0];
        let zero = TrainerConfig {
            max_iters: 0,
            ..roboss_config()
        };
        assert!(matches!(
            fit(&zero, &x, &y),
            Err(Error::Param {
                name: "max_iters",
                ..
            })
        ));
        // default batch of 4 exceeds n = 2
        let err = fit(&roboss_config(), &x, &y).unwrap_err();
        assert!(err.to_string().contains("batch_size"));
    }

    #[test]
    fn default_batch_sizes() {
        let c = roboss_config();
        assert_eq!(c.resolve_batch_size(99).unwrap(), 4);
        assert_eq!(c.resolve_batch_size(100).unwrap(), 32);
    }

    #[test]
    fn learning_rate_closed_form() {
        let (alpha0, eta) = (0.1, 0.1);
        let rates = learning_rate_schedule(alpha0, eta, 40);
        for (t, &a) in rates.iter().enumerate() {
            let tf = t as f64;
            let closed = alpha0 * (-eta * tf * (tf - 1.0) / 2.0).exp();
            assert!((a - closed).abs() <= 1e-12, "t={t}: {a} vs {closed}");
            assert!(a <= alpha0);
        }
        assert!(rates.windows(2).all(|w| w[1] <= w[0]));
        assert!(rates[2..].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn predict_ties_and_positivity() {
        let mut model = TrainedModel {
            beta: vec![0.0, 0.0],
            support_points: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            kernel: KernelSpec::gaussian(1.0),
            config: roboss_config(),
            iterations_run: 0,
            final_objective: 0.0,
        };
        assert_eq!(model.decision_value(&[5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(model.predict(&[5.0, 5.0]).unwrap(), 1.0);
        model.beta = vec![2.5, 0.0];
        assert_eq!(model.decision_value(&[0.0, 1.0]).unwrap(), 2.5);
        assert_eq!(model.predict(&[-3.0, 2.0]).unwrap(), 1.0);
        assert!(model.predict(&[1.0]).is_err());
    }

    #[test]
    fn model_document_version_check() {
        let model = TrainedModel {
            beta: vec![0.1],
            support_points: vec![vec![1.0]],
            kernel: KernelSpec::Linear,
            config: roboss_config(),
            iterations_run: 1,
            final_objective: 0.5,
        };
        let doc = ModelDocument::new(model, None);
        let json = doc.to_json().unwrap();
        assert_eq!(ModelDocument::from_json(&json).unwrap(), doc);
        let bumped = json.replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            ModelDocument::from_json(&bumped),
            Err(Error::Unsupported(_))
        ));
    }
}
