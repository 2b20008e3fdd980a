//! L2-regularized logistic regression trained by full-batch gradient
//! descent with a backtracking step, so every recorded loss is no larger
//! than the one before it.
//!
//! Features are z-scored internally; the stored weights are folded back so
//! they apply to raw feature vectors. Layout is `d` feature weights followed
//! by the intercept.

use serde::{Deserialize, Serialize};

use super::oversample::oversample_with_jitter;
use super::{ModelError, Sample};

/// Probabilities are kept this far from 0 and 1.
pub const PROBA_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial step size of each line search.
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once one iteration improves the loss by less than this.
    pub tol: f64,
    pub l2: f64,
    /// Target minority-class share after oversampling. Values above 0.5 are
    /// treated as 0.5; values at or below the current share leave the data
    /// untouched.
    pub oversample_ratio: f64,
    /// Jitter added to oversampled copies, as a fraction of each feature's
    /// standard deviation.
    pub jitter_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            max_iters: 2000,
            tol: 1e-9,
            l2: 1e-4,
            oversample_ratio: 0.5,
            jitter_scale: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if !(self.oversample_ratio > 0.0 && self.oversample_ratio <= 1.0) {
            return bad("oversample_ratio must lie in (0, 1]");
        }
        if !(self.jitter_scale >= 0.0 && self.jitter_scale.is_finite()) {
            return bad("jitter_scale must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub iterations: usize,
    pub final_loss: f64,
    /// Objective value before the first step and after every accepted step.
    pub loss_history: Vec<f64>,
}

/// Binary logistic classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    weights: Vec<f64>,
    pub training_meta: Option<TrainingMeta>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    weights: Vec<f64>,
    feature_dim: usize,
    kind: String,
}

impl Classifier {
    /// Builds a classifier from `d` weights followed by the intercept.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::InvalidModel("weight vector is empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(ModelError::InvalidModel("weights must be finite".into()));
        }
        Ok(Classifier { weights, training_meta: None })
    }

    pub fn zeros(feature_dim: usize) -> Self {
        Classifier { weights: vec![0.0; feature_dim + 1], training_meta: None }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn intercept(&self) -> f64 {
        self.weights[self.weights.len() - 1]
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64, ModelError> {
        let d = self.feature_dim();
        if x.len() != d {
            return Err(ModelError::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(dot(&self.weights[..d], x) + self.weights[d])
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(sigmoid(self.decision(x)?).clamp(PROBA_EPS, 1.0 - PROBA_EPS))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            weights: self.weights.clone(),
            feature_dim: self.feature_dim(),
            kind: "logistic".into(),
        })
        .expect("model serialization cannot fail")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(ModelFile {
            weights: self.weights.clone(),
            feature_dim: self.feature_dim(),
            kind: "logistic".into(),
        })
        .expect("model serialization cannot fail")
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| ModelError::InvalidModel(e.to_string()))?;
        if file.kind != "logistic" {
            return Err(ModelError::InvalidModel(format!("unsupported model kind `{}`", file.kind)));
        }
        if file.weights.len() != file.feature_dim + 1 {
            return Err(ModelError::InvalidModel(format!(
                "{} weights do not match feature_dim {}",
                file.weights.len(),
                file.feature_dim
            )));
        }
        Classifier::from_weights(file.weights)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidModel(e.to_string()))?;
        Classifier::from_value(value)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standardized design matrix, row-major.
struct Design {
    z: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    d: usize,
}

impl Design {
    fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    fn objective(&self, w: &[f64], l2: f64) -> f64 {
        let d = self.d;
        let mut total = 0.0;
        for i in 0..self.n {
            let s = dot(&w[..d], self.row(i)) + w[d];
            total += if self.y[i] > 0.5 { softplus(-s) } else { softplus(s) };
        }
        total / self.n as f64 + 0.5 * l2 * dot(&w[..d], &w[..d])
    }

    fn gradient(&self, w: &[f64], l2: f64) -> Vec<f64> {
        let d = self.d;
        let mut g = vec![0.0; d + 1];
        for i in 0..self.n {
            let row = self.row(i);
            let r = sigmoid(dot(&w[..d], row) + w[d]) - self.y[i];
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += r * xj;
            }
            g[d] += r;
        }
        let inv = 1.0 / self.n as f64;
        for j in 0..d {
            g[j] = g[j] * inv + l2 * w[j];
        }
        g[d] *= inv;
        g
    }
}

/// Trains a classifier on `rows` after minority oversampling.
pub fn train_logistic(rows: &[Sample], cfg: &TrainConfig) -> Result<Classifier, ModelError> {
    cfg.validate()?;
    if rows.len() < 2 {
        return Err(ModelError::TooFewRows(rows.len()));
    }
    let d = rows[0].features.len();
    for row in rows {
        if row.features.len() != d {
            return Err(ModelError::DimensionMismatch { expected: d, got: row.features.len() });
        }
        if row.features.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteFeature);
        }
    }
    let rows = oversample_with_jitter(rows, cfg.oversample_ratio, cfg.jitter_scale, cfg.seed)?;
    let n = rows.len();

    let mut mean = vec![0.0; d];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(&row.features) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for row in &rows {
        for j in 0..d {
            let c = row.features[j] - mean[j];
            scale[j] += c * c;
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let mut z = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for row in &rows {
        z.extend(row.features.iter().enumerate().map(|(j, v)| (v - mean[j]) / scale[j]));
        y.push(if row.label { 1.0 } else { 0.0 });
    }
    let design = Design { z, y, n, d };

    let mut w = vec![0.0; d + 1];
    let mut loss = design.objective(&w, cfg.l2);
    let mut history = vec![loss];
    let mut step = cfg.learning_rate;
    let max_step = cfg.learning_rate * 1024.0;
    let mut iterations = 0;
    'outer: while iterations < cfg.max_iters {
        let g = design.gradient(&w, cfg.l2);
        let gnorm2 = dot(&g, &g);
        if gnorm2 == 0.0 {
            break;
        }
        let (candidate, candidate_loss) = loop {
            let c: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let l = design.objective(&c, cfg.l2);
            if l <= loss - 1e-4 * step * gnorm2 {
                break (c, l);
            }
            step *= 0.5;
            if step < 1e-14 {
                break 'outer;
            }
        };
        let improvement = loss - candidate_loss;
        w = candidate;
        loss = candidate_loss;
        history.push(loss);
        iterations += 1;
        step = (step * 2.0).min(max_step);
        if improvement < cfg.tol {
            break;
        }
    }

    let mut weights = vec![0.0; d + 1];
    let mut intercept = w[d];
    for j in 0..d {
        weights[j] = w[j] / scale[j];
        intercept -= w[j] * mean[j] / scale[j];
    }
    weights[d] = intercept;
    let mut model = Classifier::from_weights(weights)?;
    model.training_meta =
        Some(TrainingMeta { seed: cfg.seed, iterations, final_loss: loss, loss_history: history });
    Ok(model)
}
