//! Multinomial logistic regression trained by (mini-)batch gradient descent.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{document_fingerprint, AnyModel, ScoreModel, Standardizer};
use crate::data::{Dataset, LabelSet};
use crate::error::{Error, Result};
use crate::linalg::softmax_in_place;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Rows per gradient step; values ≥ the training size mean full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid("l2 must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub(crate) label_set: LabelSet,
    pub(crate) feature_names: Vec<String>,
    /// K×d, row-major, acting on standardized features.
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) standardizer: Standardizer,
    pub(crate) config: TrainConfig,
    fingerprint: String,
}

impl LogisticModel {
    pub(crate) fn from_parts(
        label_set: LabelSet,
        feature_names: Vec<String>,
        weights: Vec<f64>,
        bias: Vec<f64>,
        standardizer: Standardizer,
        config: TrainConfig,
    ) -> Result<Self> {
        let k = label_set.len();
        let d = feature_names.len();
        if weights.len() != k * d || bias.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k * d + k,
                found: weights.len() + bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite())
            || standardizer.stds.iter().any(|s| !(*s > 0.0))
        {
            return Err(Error::invalid(
                "logistic parameters must be finite with positive scales",
            ));
        }
        let mut m = Self {
            label_set,
            feature_names,
            weights,
            bias,
            standardizer,
            config,
            fingerprint: String::new(),
        };
        m.fingerprint = document_fingerprint(&AnyModel::Logistic(m.clone()));
        Ok(m)
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn logits(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len();
        (0..self.bias.len())
            .map(|c| {
                self.bias[c]
                    + self.weights[c * d..(c + 1) * d]
                        .iter()
                        .zip(z)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }
}

impl ScoreModel for LogisticModel {
    fn n_classes(&self) -> usize {
        self.label_set.len()
    }

    fn dim(&self) -> usize {
        self.feature_names.len()
    }

    fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        let mut p = self.logits(&self.standardizer.apply(features));
        softmax_in_place(&mut p);
        p
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

/// Mean softmax cross-entropy plus `l2/2·‖W‖²`, and its gradient.
///
/// `params` holds the K×d weights row-major followed by the K biases; the bias
/// is not regularised.
pub fn loss_and_gradient(
    params: &[f64],
    rows: &[&[f64]],
    labels: &[usize],
    k: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    let n = rows.len();
    let d = (params.len() - k) / k;
    let (w, b) = params.split_at(k * d);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut p = vec![0.0; k];
    for (z, &y) in rows.iter().zip(labels) {
        for c in 0..k {
            p[c] = b[c]
                + w[c * d..(c + 1) * d]
                    .iter()
                    .zip(z.iter())
                    .map(|(a, v)| a * v)
                    .sum::<f64>();
        }
        let m = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + p.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - p[y];
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        for c in 0..k {
            let g = p[c];
            for j in 0..d {
                grad[c * d + j] += g * z[j];
            }
            grad[k * d + c] += g;
        }
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    grad.iter_mut().for_each(|g| *g *= inv);
    for i in 0..k * d {
        loss += 0.5 * l2 * w[i] * w[i];
        grad[i] += l2 * w[i];
    }
    (loss, grad)
}

/// Fits the model and returns it with the full-data loss before training and after each epoch.
pub fn fit_logistic_traced(
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<(LogisticModel, Vec<f64>)> {
    cfg.validate()?;
    let missing: Vec<String> = train
        .class_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(k, _)| train.label_set().name(k).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let k = train.n_classes();
    let d = train.dim();
    let standardizer = Standardizer::fit(train);
    let z: Vec<Vec<f64>> = train
        .instances()
        .iter()
        .map(|x| standardizer.apply(&x.features))
        .collect();
    let rows: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    let labels = train.labels();
    let n = rows.len();
    let batch = cfg.batch_size.min(n);

    let mut params = vec![0.0; k * d + k];
    let mut rng = RngStream::new(cfg.seed, 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = vec![loss_and_gradient(&params, &rows, labels, k, cfg.l2).0];
    for epoch in 1..=cfg.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let br: Vec<&[f64]> = chunk.iter().map(|&i| rows[i]).collect();
            let bl: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (_, g) = loss_and_gradient(&params, &br, &bl, k, cfg.l2);
            for (p, gi) in params.iter_mut().zip(&g) {
                *p -= cfg.learning_rate * gi;
            }
        }
        let loss = loss_and_gradient(&params, &rows, labels, k, cfg.l2).0;
        if !loss.is_finite() || params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        losses.push(loss);
    }
    let bias = params.split_off(k * d);
    let model = LogisticModel::from_parts(
        train.label_set().clone(),
        train.feature_names().to_vec(),
        params,
        bias,
        standardizer,
        *cfg,
    )?;
    Ok((model, losses))
}

pub fn fit_logistic(train: &Dataset, cfg: &TrainConfig) -> Result<LogisticModel> {
    fit_logistic_traced(train, cfg).map(|(m, _)| m)
}
