//! Linear two-class SVM trained by stochastic sub-gradient descent on the
//! regularised hinge loss.
//!
//! The bias is carried as an extra always-one feature and regularised together
//! with the weights, so the training objective is
//!
//! ```text
//! lambda/2 * (|w|^2 + b^2) + 1/n * sum_i max(0, 1 - y_i (w.x_i + b))
//! ```

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::HogConfig;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: Label,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Decision cutoff on the raw score; positives need `score > threshold`.
    pub threshold: f64,
    pub dim: usize,
    pub trained_on: usize,
    pub lambda: f64,
    pub seed: u64,
    /// HOG parameters the features were extracted with, when known.
    pub hog: Option<HogConfig>,
}

impl LinearSvmModel {
    /// Model from explicit parameters, mostly useful for tests and tooling.
    pub fn from_parts(weights: Vec<f64>, bias: f64, threshold: f64) -> Result<Self> {
        let model = Self {
            dim: weights.len(),
            weights,
            bias,
            threshold,
            trained_on: 0,
            lambda: 0.0,
            seed: 0,
            hog: None,
        };
        model.check_finite()?;
        Ok(model)
    }

    fn check_finite(&self) -> Result<()> {
        if self.weights.len() != self.dim {
            return Err(Error::Shape(format!(
                "model has {} weights but declares dim {}",
                self.weights.len(),
                self.dim
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Data("model weights or bias are not finite".into()));
        }
        if self.threshold.is_nan() {
            return Err(Error::Data("model threshold is NaN".into()));
        }
        Ok(())
    }

    /// Raw margin `w.x + b`.
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.dim {
            return Err(Error::Shape(format!(
                "feature vector has length {}, model expects {}",
                features.len(),
                self.dim
            )));
        }
        Ok(dot(&self.weights, features) + self.bias)
    }

    /// `score > threshold`; ties are negative.
    pub fn classify(&self, features: &[f64]) -> Result<bool> {
        Ok(self.score(features)? > self.threshold)
    }

    /// Value of the training objective for this model on `samples`.
    pub fn objective(&self, samples: &[LabeledSample]) -> Result<f64> {
        let mut w = self.weights.clone();
        w.push(self.bias);
        check_samples(samples, self.dim)?;
        Ok(objective(&w, samples, self.lambda))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let doc = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            dim: self.dim,
            lambda: self.lambda,
            seed: self.seed,
            threshold: self.threshold,
            bias: self.bias,
            trained_on: self.trained_on,
            hog: self.hog,
            weights: self.weights.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("model serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("model file: {e}"),
        })?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported model format_version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let model = Self {
            weights: doc.weights,
            bias: doc.bias,
            threshold: doc.threshold,
            dim: doc.dim,
            trained_on: doc.trained_on,
            lambda: doc.lambda,
            seed: doc.seed,
            hog: doc.hog,
        };
        model.check_finite()?;
        if let Some(hog) = &model.hog {
            hog.validate()?;
            if hog.descriptor_len() != model.dim {
                return Err(Error::Shape(format!(
                    "model dim {} does not match its HOG descriptor length {}",
                    model.dim,
                    hog.descriptor_len()
                )));
            }
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    dim: usize,
    lambda: f64,
    seed: u64,
    threshold: f64,
    bias: f64,
    #[serde(default)]
    trained_on: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hog: Option<HogConfig>,
    weights: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Augmented margin `y * (w[..d].x + w[d])`.
#[inline]
fn margin(w: &[f64], sample: &LabeledSample) -> f64 {
    let d = sample.features.len();
    sample.label.sign() * (dot(&w[..d], &sample.features) + w[d])
}

fn objective(w: &[f64], samples: &[LabeledSample], lambda: f64) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>();
    let hinge: f64 = samples
        .iter()
        .map(|s| (1.0 - margin(w, s)).max(0.0))
        .sum();
    reg + hinge / samples.len() as f64
}

fn check_samples(samples: &[LabeledSample], dim: usize) -> Result<()> {
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.features.len() != dim) {
        return Err(Error::Shape(format!(
            "sample {i} has {} features, expected {dim}",
            s.features.len()
        )));
    }
    if samples.iter().any(|s| s.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data("training features contain NaN or infinity".into()));
    }
    Ok(())
}

/// Trains with step size `1 / (lambda * t)`, reshuffling the sample order each
/// epoch from a generator seeded with `params.seed`. After every step the
/// iterate is projected back onto the ball of radius `1/sqrt(lambda)`.
///
/// The objective is evaluated after every epoch and the best iterate is
/// returned. The all-zero starting point counts as a checkpoint, so the result
/// never scores worse than the zero model.
pub fn train(samples: &[LabeledSample], params: &TrainParams) -> Result<LinearSvmModel> {
    params.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| Error::Training("no training samples".into()))?;
    let dim = first.features.len();
    check_samples(samples, dim)?;
    for label in [Label::Positive, Label::Negative] {
        if !samples.iter().any(|s| s.label == label) {
            return Err(Error::Training(format!("no {label:?} samples")));
        }
    }

    let lambda = params.lambda;
    let mut w = vec![0.0; dim + 1];
    let mut best_w = w.clone();
    let mut best_obj = objective(&w, samples, lambda);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let sample = &samples[i];
            let eta = 1.0 / (lambda * t as f64);
            let violated = margin(&w, sample) < 1.0;
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|x| *x *= shrink);
            if violated {
                let step = eta * sample.label.sign();
                for (wj, xj) in w.iter_mut().zip(&sample.features) {
                    *wj += step * xj;
                }
                w[dim] += step;
            }
            // the optimum lies in the ball |w| <= 1/sqrt(lambda)
            let sq: f64 = w.iter().map(|x| x * x).sum();
            if sq * lambda > 1.0 {
                let scale = (1.0 / (lambda * sq)).sqrt();
                w.iter_mut().for_each(|x| *x *= scale);
            }
        }
        let obj = objective(&w, samples, lambda);
        if obj < best_obj {
            best_obj = obj;
            best_w.copy_from_slice(&w);
        }
    }

    let bias = best_w.pop().expect("augmented weight vector");
    Ok(LinearSvmModel {
        weights: best_w,
        bias,
        threshold: 0.0,
        dim,
        trained_on: samples.len(),
        lambda,
        seed: params.seed,
        hog: None,
    })
}

/// Fraction of samples whose classification agrees with their label.
pub fn training_accuracy(model: &LinearSvmModel, samples: &[LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Input("accuracy of an empty sample set is undefined".into()));
    }
    let mut correct = 0usize;
    for s in samples {
        if model.classify(&s.features)? == (s.label == Label::Positive) {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
