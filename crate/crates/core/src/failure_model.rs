//! L2-regularized logistic regression over test vectors, producing
//! `P(fail | vector)`.
//!
//! Training is deterministic full-batch gradient descent. The loss is
//!
//! ```text
//! L(w, b) = mean_i [ softplus(s_i) - y_i * s_i ] + (lambda / 2) * |w|^2,   s_i = w.x_i + b
//! ```
//!
//! with `y = 1` for failing traces. The bias is not regularized.

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::TestVector;
use crate::seed::rng;
use crate::trace_model::Label;

/// Probabilities are kept this far away from exactly 0 and 1.
pub const PROBABILITY_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no training data")]
    EmptyData,
    #[error("training data contains a single class ({0:?}); both labels are required")]
    DegenerateLabels(Label),
    #[error("dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct LabeledVector {
    pub vector: TestVector,
    pub label: Label,
}

impl LabeledVector {
    pub fn new(vector: TestVector, label: Label) -> Self {
        Self { vector, label }
    }

    fn target(&self) -> f64 {
        if self.label.is_fail() {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub epochs: usize,
    /// Half-width of the uniform weight initialization.
    pub init_noise: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2_lambda: 1e-3,
            epochs: 500,
            init_noise: 1e-6,
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperparams(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be non-negative");
        }
        if !(self.init_noise.is_finite() && self.init_noise >= 0.0) {
            return bad("init_noise must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub seed: u64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    weights: Vec<f64>,
    bias: f64,
    meta: TrainingMeta,
}

impl FailureModel {
    /// A model with the given parameters and no training history.
    pub fn from_parameters(weights: Vec<f64>, bias: f64) -> Self {
        Self {
            weights,
            bias,
            meta: TrainingMeta {
                epochs: 0,
                learning_rate: 0.0,
                l2_lambda: 0.0,
                seed: 0,
                final_loss: 0.0,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Linear score `w.x + b`.
    pub fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.weights.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.score(x).map(sigmoid)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        let file = ModelFile {
            dim: self.dim(),
            weights: self.weights.clone(),
            bias: self.bias,
            meta: self.meta.clone(),
        };
        serde_json::to_writer(writer, &file).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_reader(reader).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.dim != file.weights.len() {
            return Err(ModelError::Format(format!(
                "declared dim {} but {} weights",
                file.dim,
                file.weights.len()
            )));
        }
        if file.weights.iter().chain([&file.bias]).any(|w| !w.is_finite()) {
            return Err(ModelError::Format("non-finite parameter".into()));
        }
        Ok(Self {
            weights: file.weights,
            bias: file.bias,
            meta: file.meta,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic function clamped to `[1e-12, 1 - 1e-12]`.
pub fn sigmoid(s: f64) -> f64 {
    let p = if s.is_nan() {
        0.5
    } else if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    };
    p.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn raw_sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Regularized loss at `(weights, bias)`.
pub fn loss(weights: &[f64], bias: f64, data: &[LabeledVector], l2_lambda: f64) -> f64 {
    let n = data.len() as f64;
    let data_term: f64 = data
        .iter()
        .map(|d| {
            let s = dot(weights, &d.vector.values) + bias;
            softplus(s) - d.target() * s
        })
        .sum::<f64>()
        / n;
    data_term + 0.5 * l2_lambda * dot(weights, weights)
}

/// Loss with its analytic gradient `(loss, d/dw, d/db)`.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    data: &[LabeledVector],
    l2_lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    let mut data_term = 0.0;
    for d in data {
        let s = dot(weights, &d.vector.values) + bias;
        let y = d.target();
        data_term += softplus(s) - y * s;
        let r = raw_sigmoid(s) - y;
        grad_b += r;
        for (g, x) in grad_w.iter_mut().zip(&d.vector.values) {
            *g += r * x;
        }
    }
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2_lambda * w;
    }
    let value = data_term / n + 0.5 * l2_lambda * dot(weights, weights);
    (value, grad_w, grad_b / n)
}

fn check_data(data: &[LabeledVector]) -> Result<usize, ModelError> {
    let first = data.first().ok_or(ModelError::EmptyData)?;
    let d = first.vector.dim();
    for x in data {
        if x.vector.dim() != d {
            return Err(ModelError::DimensionMismatch {
                expected: d,
                found: x.vector.dim(),
            });
        }
    }
    if data.iter().all(|x| x.label == first.label) {
        return Err(ModelError::DegenerateLabels(first.label));
    }
    Ok(d)
}

/// Seeded initial weights: uniform in `[-noise, noise]`, zero bias.
pub fn initial_weights(dim: usize, noise: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..dim)
        .map(|_| {
            if noise > 0.0 {
                r.gen_range(-noise..=noise)
            } else {
                0.0
            }
        })
        .collect()
}

/// Train and also return the loss before training and after every epoch.
pub fn train_with_history(
    data: &[LabeledVector],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<(FailureModel, Vec<f64>), ModelError> {
    hyper.validate()?;
    let dim = check_data(data)?;
    let mut w = initial_weights(dim, hyper.init_noise, seed);
    let mut b = 0.0;
    let (mut current, mut gw, mut gb) = loss_and_gradient(&w, b, data, hyper.l2_lambda);
    let mut history = Vec::with_capacity(hyper.epochs + 1);
    history.push(current);
    for _ in 0..hyper.epochs {
        // Halve the step until the loss does not increase; with the default
        // rate on normalized vectors the first try is accepted.
        let mut step = hyper.learning_rate;
        let mut accepted = false;
        for _ in 0..40 {
            let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(x, g)| x - step * g).collect();
            let cand_b = b - step * gb;
            let cand = loss(&cand_w, cand_b, data, hyper.l2_lambda);
            if cand <= current {
                w = cand_w;
                b = cand_b;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if accepted {
            let (l, g, h) = loss_and_gradient(&w, b, data, hyper.l2_lambda);
            current = l;
            gw = g;
            gb = h;
        }
        history.push(current);
    }
    let model = FailureModel {
        weights: w,
        bias: b,
        meta: TrainingMeta {
            epochs: hyper.epochs,
            learning_rate: hyper.learning_rate,
            l2_lambda: hyper.l2_lambda,
            seed,
            final_loss: current,
        },
    };
    Ok((model, history))
}

pub fn train_failure_model(
    data: &[LabeledVector],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<FailureModel, ModelError> {
    train_with_history(data, hyper, seed).map(|(m, _)| m)
}

pub fn predict_fail_probability(model: &FailureModel, v: &TestVector) -> Result<f64, ModelError> {
    model.predict(&v.values)
}
