//! Mondrian (label-conditional) inductive conformal prediction.
//!
//! Calibration scores are partitioned by true class. The p-value of a test
//! object under the hypothesis `y = k` is computed only against the class-`k`
//! calibration scores:
//!
//! ```text
//! p_k = |{i : y_i = k, α_i ≥ α_test}| / |{i : y_i = k}|             (unsmoothed)
//! p_k = (|{i : y_i = k, α_i ≥ α_test}| + 1) / (|{i : y_i = k}| + 1)   (smoothed)
//! ```
//!
//! Ties count as conforming. A label enters the prediction set when its
//! p-value strictly exceeds the significance level, so an empty set means the
//! model declines to decide. Only the smoothed form carries the finite-sample
//! `1 − α` coverage guarantee; the unsmoothed form is the default because it
//! reproduces published p-value tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ScoreModel;
use crate::data::{Dataset, Instance, LabelSet};
use crate::error::{Error, Result};
use crate::linalg::argmax;

/// Nonconformity measure: larger means stranger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonconformity {
    /// `1 − p(y | x)`.
    #[default]
    InverseProbability,
    /// `(max_{j≠y} p_j − p_y + 1) / 2`, in `[0, 1]`.
    Margin,
}

impl Nonconformity {
    pub fn score(self, probs: &[f64], y: usize) -> Result<f64> {
        if y >= probs.len() {
            return Err(Error::LabelOutOfRange {
                index: y,
                count: probs.len(),
            });
        }
        Ok(self.score_unchecked(probs, y))
    }

    fn score_unchecked(self, probs: &[f64], y: usize) -> f64 {
        match self {
            Nonconformity::InverseProbability => 1.0 - probs[y],
            Nonconformity::Margin => {
                let other = probs
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != y)
                    .map(|(_, &p)| p)
                    .fold(f64::NEG_INFINITY, f64::max);
                (other - probs[y] + 1.0) / 2.0
            }
        }
    }
}

/// `1 − probs[y]`.
pub fn nonconformity_inverse_prob(probs: &[f64], y: usize) -> Result<f64> {
    Nonconformity::InverseProbability.score(probs, y)
}

/// Per-class sorted calibration scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub schema_version: String,
    pub label_set: LabelSet,
    pub nonconformity: Nonconformity,
    pub model_fingerprint: String,
    /// One ascending list per class.
    scores: Vec<Vec<f64>>,
}

impl CalibrationTable {
    /// Builds a table from raw per-class scores (sorted here).
    pub fn from_scores(
        label_set: LabelSet,
        nonconformity: Nonconformity,
        model_fingerprint: impl Into<String>,
        mut scores: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if scores.len() != label_set.len() {
            return Err(Error::LengthMismatch {
                left: scores.len(),
                right: label_set.len(),
            });
        }
        let empty: Vec<String> = scores
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_empty())
            .map(|(k, _)| label_set.name(k).to_string())
            .collect();
        if !empty.is_empty() {
            return Err(Error::MissingClasses(empty));
        }
        if scores.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::invalid("calibration scores must be finite"));
        }
        for s in &mut scores {
            s.sort_by(f64::total_cmp);
        }
        Ok(Self {
            schema_version: crate::SCHEMA_VERSION.to_string(),
            label_set,
            nonconformity,
            model_fingerprint: model_fingerprint.into(),
            scores,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.scores.len()
    }

    pub fn class_scores(&self, k: usize) -> &[f64] {
        &self.scores[k]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.scores.iter().map(Vec::len).collect()
    }

    /// Number of class-`k` calibration scores `≥ score`.
    pub fn count_at_least(&self, k: usize, score: f64) -> usize {
        let s = &self.scores[k];
        s.len() - s.partition_point(|&a| a < score)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Structural check after deserialisation.
    pub fn validate(&self) -> Result<()> {
        if self.scores.len() != self.label_set.len() {
            return Err(Error::LengthMismatch {
                left: self.scores.len(),
                right: self.label_set.len(),
            });
        }
        for (k, s) in self.scores.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::MissingClasses(vec![self
                    .label_set
                    .name(k)
                    .to_string()]));
            }
            if s.windows(2).any(|w| w[0] > w[1]) || s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "calibration scores must be finite and sorted",
                ));
            }
        }
        Ok(())
    }
}

/// Scores every calibration example against its true class.
pub fn calibrate<M: ScoreModel + ?Sized>(
    model: &M,
    cal: &Dataset,
    nonconformity: Nonconformity,
) -> Result<CalibrationTable> {
    if model.n_classes() != cal.n_classes() {
        return Err(Error::LengthMismatch {
            left: model.n_classes(),
            right: cal.n_classes(),
        });
    }
    if model.dim() != cal.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: cal.dim(),
        });
    }
    let mut scores = vec![Vec::new(); cal.n_classes()];
    for (x, y) in cal.iter() {
        let p = model.predict_proba(&x.features);
        scores[y].push(nonconformity.score_unchecked(&p, y));
    }
    CalibrationTable::from_scores(
        cal.label_set().clone(),
        nonconformity,
        model.fingerprint(),
        scores,
    )
}

/// Class-conditional p-value of `score` under the hypothesis `y = k`.
pub fn p_value(table: &CalibrationTable, score: f64, k: usize, smoothed: bool) -> Result<f64> {
    if k >= table.n_classes() {
        return Err(Error::LabelOutOfRange {
            index: k,
            count: table.n_classes(),
        });
    }
    Ok(p_value_unchecked(table, score, k, smoothed))
}

fn p_value_unchecked(table: &CalibrationTable, score: f64, k: usize, smoothed: bool) -> f64 {
    let n = table.scores[k].len() as f64;
    let c = table.count_at_least(k, score) as f64;
    if smoothed {
        (c + 1.0) / (n + 1.0)
    } else {
        c / n
    }
}

/// Per-label p-values of one feature vector.
pub fn p_values<M: ScoreModel + ?Sized>(
    model: &M,
    table: &CalibrationTable,
    features: &[f64],
    smoothed: bool,
) -> Vec<f64> {
    let probs = model.predict_proba(features);
    (0..table.n_classes())
        .map(|k| {
            let s = table.nonconformity.score_unchecked(&probs, k);
            p_value_unchecked(table, s, k, smoothed)
        })
        .collect()
}

/// One conformal decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub p_values: Vec<f64>,
    /// Ascending label indices with `p > alpha`.
    pub prediction_set: Vec<usize>,
    pub point_prediction: usize,
    pub confidence: f64,
    pub credibility: f64,
    pub rejected: bool,
    pub alpha: f64,
}

impl PredictionRecord {
    pub fn contains(&self, label: usize) -> bool {
        self.prediction_set.binary_search(&label).is_ok()
    }

    /// Checks every documented invariant of the record.
    pub fn is_coherent(&self) -> bool {
        let k = self.p_values.len();
        if k < 2 || self.p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return false;
        }
        let Ok((conf, cred, point)) = confidence_from_pvalues(&self.p_values) else {
            return false;
        };
        let membership = (0..k).all(|j| self.contains(j) == (self.p_values[j] > self.alpha));
        self.rejected == self.prediction_set.is_empty()
            && membership
            && self.prediction_set.windows(2).all(|w| w[0] < w[1])
            && self.point_prediction == point
            && self.confidence == conf
            && self.credibility == cred
    }
}

/// `(confidence, credibility, point)` = `(1 − second-largest p, largest p, argmax)`.
///
/// With membership `p > ε`, `1 − second-largest p` equals
/// `sup{1 − ε : |Γ_ε| ≤ 1}`.
pub fn confidence_from_pvalues(p: &[f64]) -> Result<(f64, f64, usize)> {
    if p.len() < 2 {
        return Err(Error::TooFewLabels(p.len()));
    }
    let point = argmax(p);
    let second = p
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != point)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((1.0 - second, p[point], point))
}

/// Builds a record directly from p-values (bypassing model and table).
pub fn record_from_pvalues(
    id: impl Into<String>,
    p_values: Vec<f64>,
    alpha: f64,
) -> Result<PredictionRecord> {
    check_alpha(alpha)?;
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("p-values must lie in [0, 1]"));
    }
    let (confidence, credibility, point_prediction) = confidence_from_pvalues(&p_values)?;
    let prediction_set: Vec<usize> = (0..p_values.len())
        .filter(|&k| p_values[k] > alpha)
        .collect();
    Ok(PredictionRecord {
        id: id.into(),
        rejected: prediction_set.is_empty(),
        prediction_set,
        point_prediction,
        confidence,
        credibility,
        p_values,
        alpha,
    })
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "significance level must be in (0, 1), got {alpha}"
        )))
    }
}

pub(crate) fn check_fingerprint<M: ScoreModel + ?Sized>(
    model: &M,
    table: &CalibrationTable,
) -> Result<()> {
    let fp = model.fingerprint();
    if fp != table.model_fingerprint {
        return Err(Error::FingerprintMismatch {
            model: fp,
            table: table.model_fingerprint.clone(),
        });
    }
    if model.n_classes() != table.n_classes() {
        return Err(Error::LengthMismatch {
            left: model.n_classes(),
            right: table.n_classes(),
        });
    }
    Ok(())
}

pub fn predict<M: ScoreModel + ?Sized>(
    model: &M,
    table: &CalibrationTable,
    x: &Instance,
    alpha: f64,
    smoothed: bool,
) -> Result<PredictionRecord> {
    check_fingerprint(model, table)?;
    if x.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x.dim(),
        });
    }
    record_from_pvalues(
        x.id.clone(),
        p_values(model, table, &x.features, smoothed),
        alpha,
    )
}

/// Element-wise [`predict`]; runs on the current rayon pool and preserves order.
pub fn predict_batch<M: ScoreModel + ?Sized>(
    model: &M,
    table: &CalibrationTable,
    ds: &Dataset,
    alpha: f64,
    smoothed: bool,
) -> Result<Vec<PredictionRecord>> {
    check_alpha(alpha)?;
    if ds.is_empty() {
        return Ok(Vec::new());
    }
    check_fingerprint(model, table)?;
    if ds.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: ds.dim(),
        });
    }
    ds.instances()
        .par_iter()
        .map(|x| {
            record_from_pvalues(
                x.id.clone(),
                p_values(model, table, &x.features, smoothed),
                alpha,
            )
        })
        .collect()
}

/// P-values for every row, computed once; sweeps reuse them across α.
pub fn p_value_matrix<M: ScoreModel + ?Sized>(
    model: &M,
    table: &CalibrationTable,
    ds: &Dataset,
    smoothed: bool,
) -> Result<Vec<Vec<f64>>> {
    check_fingerprint(model, table)?;
    Ok(ds
        .instances()
        .par_iter()
        .map(|x| p_values(model, table, &x.features, smoothed))
        .collect())
}
