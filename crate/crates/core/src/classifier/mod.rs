//! The probabilistic-classifier contract and its built-in implementations.
//!
//! Everything downstream (calibration, set predictors, explanations) talks to
//! a model only through [`ScoreModel::predict_proba`], which is what makes the
//! conformal wrapper independent of the learning algorithm.

mod bagged;
mod knn;
mod logistic;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, LabelSet};
use crate::error::{Error, Result};
use crate::linalg::argmax;

pub use bagged::{fit_bagged, BaggedModel};
pub use knn::{fit_knn, KnnModel};
pub use logistic::{fit_logistic, loss_and_gradient, LogisticModel, TrainConfig};

/// A fitted classifier producing a probability vector over its label set.
///
/// Implementations must be immutable after fitting; `predict_proba` is called
/// concurrently from batch prediction.
pub trait ScoreModel: Send + Sync {
    fn n_classes(&self) -> usize;

    fn dim(&self) -> usize;

    /// Probabilities over the label set: nonnegative, summing to one.
    fn predict_proba(&self, features: &[f64]) -> Vec<f64>;

    /// Stable identity of the fitted parameters; calibration tables record it.
    fn fingerprint(&self) -> String;
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        (**self).predict_proba(features)
    }
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

/// Per-feature affine standardisation estimated on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Zero-variance features get a unit scale.
    pub fn fit(ds: &Dataset) -> Self {
        let (means, stds) = ds.feature_moments();
        let stds = stds
            .into_iter()
            .map(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 })
            .collect();
        Self { means, stds }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            means: vec![0.0; d],
            stds: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Hex SHA-256 of a byte payload.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Any of the built-in models, serialisable to a single JSON document.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Logistic(LogisticModel),
    Knn(KnnModel),
    Bagged(BaggedModel),
}

impl AnyModel {
    pub fn label_set(&self) -> &LabelSet {
        match self {
            AnyModel::Logistic(m) => &m.label_set,
            AnyModel::Knn(m) => &m.label_set,
            AnyModel::Bagged(m) => m.members[0].label_set_ref(),
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            AnyModel::Logistic(m) => &m.feature_names,
            AnyModel::Knn(m) => &m.feature_names,
            AnyModel::Bagged(m) => &m.members[0].feature_names,
        }
    }

    fn inner(&self) -> &dyn ScoreModel {
        match self {
            AnyModel::Logistic(m) => m,
            AnyModel::Knn(m) => m,
            AnyModel::Bagged(m) => m,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl ScoreModel for AnyModel {
    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        self.inner().predict_proba(features)
    }
    fn fingerprint(&self) -> String {
        self.inner().fingerprint()
    }
}

impl From<LogisticModel> for AnyModel {
    fn from(m: LogisticModel) -> Self {
        AnyModel::Logistic(m)
    }
}

impl From<KnnModel> for AnyModel {
    fn from(m: KnnModel) -> Self {
        AnyModel::Knn(m)
    }
}

impl From<BaggedModel> for AnyModel {
    fn from(m: BaggedModel) -> Self {
        AnyModel::Bagged(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Metadata {
    #[serde(rename = "type")]
    kind: String,
    seed: u64,
    config: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KnnSection {
    k: usize,
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MemberSection {
    weights: Vec<f64>,
    bias: Vec<f64>,
    standardizer: Standardizer,
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    schema_version: String,
    label_set: LabelSet,
    feature_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
    standardizer: Standardizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    knn: Option<KnnSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    members: Option<Vec<MemberSection>>,
    metadata: Metadata,
}

impl From<&AnyModel> for ModelFile {
    fn from(m: &AnyModel) -> Self {
        let base = |kind: &str,
                    seed: u64,
                    config: serde_json::Value,
                    standardizer: Standardizer| ModelFile {
            schema_version: crate::SCHEMA_VERSION.to_string(),
            label_set: m.label_set().clone(),
            feature_names: m.feature_names().to_vec(),
            weights: None,
            bias: None,
            standardizer,
            knn: None,
            members: None,
            metadata: Metadata {
                kind: kind.to_string(),
                seed,
                config,
            },
        };
        match m {
            AnyModel::Logistic(lm) => ModelFile {
                weights: Some(lm.weights.clone()),
                bias: Some(lm.bias.clone()),
                ..base(
                    "logistic",
                    lm.config.seed,
                    serde_json::to_value(lm.config).unwrap_or_default(),
                    lm.standardizer.clone(),
                )
            },
            AnyModel::Knn(km) => ModelFile {
                knn: Some(KnnSection {
                    k: km.k,
                    points: km.points.clone(),
                    labels: km.labels.clone(),
                }),
                ..base(
                    "knn",
                    0,
                    serde_json::json!({ "k": km.k }),
                    km.standardizer.clone(),
                )
            },
            AnyModel::Bagged(bm) => ModelFile {
                members: Some(
                    bm.members
                        .iter()
                        .map(|lm| MemberSection {
                            weights: lm.weights.clone(),
                            bias: lm.bias.clone(),
                            standardizer: lm.standardizer.clone(),
                        })
                        .collect(),
                ),
                ..base(
                    "bagged-logistic",
                    bm.seed,
                    serde_json::json!({ "members": bm.members.len(), "base": bm.members[0].config }),
                    bm.members[0].standardizer.clone(),
                )
            },
        }
    }
}

impl TryFrom<ModelFile> for AnyModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let missing = |what: &str| Error::invalid(format!("model file lacks '{what}'"));
        let k = f.label_set.len();
        let d = f.feature_names.len();
        let check_std = |s: &Standardizer| -> Result<()> {
            if s.means.len() != d || s.stds.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.means.len(),
                });
            }
            Ok(())
        };
        check_std(&f.standardizer)?;
        match f.metadata.kind.as_str() {
            "logistic" => {
                let config: TrainConfig = serde_json::from_value(f.metadata.config)?;
                let weights = f.weights.ok_or_else(|| missing("weights"))?;
                let bias = f.bias.ok_or_else(|| missing("bias"))?;
                LogisticModel::from_parts(
                    f.label_set,
                    f.feature_names,
                    weights,
                    bias,
                    f.standardizer,
                    config,
                )
                .map(AnyModel::Logistic)
            }
            "knn" => {
                let knn = f.knn.ok_or_else(|| missing("knn"))?;
                if knn.labels.iter().any(|&y| y >= k) || knn.points.iter().any(|p| p.len() != d) {
                    return Err(Error::invalid("knn section inconsistent with schema"));
                }
                Ok(AnyModel::Knn(KnnModel {
                    label_set: f.label_set,
                    feature_names: f.feature_names,
                    k: knn.k,
                    standardizer: f.standardizer,
                    points: knn.points,
                    labels: knn.labels,
                }))
            }
            "bagged-logistic" => {
                let base: TrainConfig = serde_json::from_value(
                    f.metadata
                        .config
                        .get("base")
                        .cloned()
                        .ok_or_else(|| missing("metadata.config.base"))?,
                )?;
                let members = f.members.ok_or_else(|| missing("members"))?;
                if members.is_empty() {
                    return Err(missing("members"));
                }
                let members = members
                    .into_iter()
                    .map(|m| {
                        check_std(&m.standardizer)?;
                        LogisticModel::from_parts(
                            f.label_set.clone(),
                            f.feature_names.clone(),
                            m.weights,
                            m.bias,
                            m.standardizer,
                            base,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(AnyModel::Bagged(BaggedModel {
                    members,
                    seed: f.metadata.seed,
                }))
            }
            other => Err(Error::invalid(format!("unknown model type '{other}'"))),
        }
    }
}

/// Fingerprint shared by the built-ins: hash of the compact model document.
pub(crate) fn document_fingerprint(m: &AnyModel) -> String {
    let json = serde_json::to_vec(&ModelFile::from(m)).expect("model document serialises");
    sha256_hex(&json)
}

/// Fraction of rows whose argmax probability equals the label (ties to the lower index).
pub fn accuracy<M: ScoreModel + ?Sized>(model: &M, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = ds
        .iter()
        .filter(|(x, y)| argmax(&model.predict_proba(&x.features)) == *y)
        .count();
    Ok(correct as f64 / ds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub center: f64,
    /// Mean max-probability in the bin (0 when empty).
    pub mean_confidence: f64,
    /// Fraction of correct argmax predictions in the bin (0 when empty).
    pub accuracy: f64,
    pub count: usize,
}

/// Equal-width reliability diagram over the max-probability.
pub fn reliability_diagram<M: ScoreModel + ?Sized>(
    model: &M,
    ds: &Dataset,
    bins: usize,
) -> Result<Vec<ReliabilityBin>> {
    if bins == 0 {
        return Err(Error::invalid("bins must be at least 1"));
    }
    let mut conf_sum = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    let mut counts = vec![0usize; bins];
    for (x, y) in ds.iter() {
        let p = model.predict_proba(&x.features);
        let top = argmax(&p);
        let c = p[top];
        let b = ((c * bins as f64).floor() as usize).min(bins - 1);
        conf_sum[b] += c;
        counts[b] += 1;
        if top == y {
            hits[b] += 1;
        }
    }
    Ok((0..bins)
        .map(|b| {
            let n = counts[b];
            ReliabilityBin {
                center: (b as f64 + 0.5) / bins as f64,
                mean_confidence: if n > 0 { conf_sum[b] / n as f64 } else { 0.0 },
                accuracy: if n > 0 {
                    hits[b] as f64 / n as f64
                } else {
                    0.0
                },
                count: n,
            }
        })
        .collect())
}

/// Checks the contract on one input. Used by tests and by model loading.
pub fn is_valid_distribution(p: &[f64], k: usize) -> bool {
    p.len() == k
        && p.iter().all(|v| (0.0..=1.0).contains(v))
        && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}
