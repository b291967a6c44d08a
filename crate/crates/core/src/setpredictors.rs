//! Comparison set predictors: naive, top-k, RAPS, and a Mondrian adapter,
//! all split-conformal over a calibration set.

use serde::{Deserialize, Serialize};

use crate::classifier::ScoreModel;
use crate::conformal::{check_alpha, check_fingerprint, p_values, CalibrationTable};
use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};

/// Conformal quantile: the ⌈(n+1)(1−α)⌉-th smallest score, or `+∞` if that
/// rank exceeds `n`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_alpha(alpha)?;
    let rank = conformal_rank(scores.len(), alpha);
    if rank > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s[rank - 1])
}

/// ⌈(n+1)(1−α)⌉, clamped to at least 1. A 1e-9 slack absorbs products such
/// as `10 × 0.9` landing a hair above an integer.
pub(crate) fn conformal_rank(n: usize, alpha: f64) -> usize {
    let r = ((n as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil();
    (r.max(1.0)) as usize
}

/// Labels ordered by descending probability, ties toward the lower index.
pub fn descending_order(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mondrian,
    Naive,
    TopK,
    Raps,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mondrian => "mondrian",
            Method::Naive => "naive",
            Method::TopK => "top_k",
            Method::Raps => "raps",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mondrian" => Ok(Method::Mondrian),
            "naive" => Ok(Method::Naive),
            "topk" | "top_k" | "top-k" => Ok(Method::TopK),
            "raps" => Ok(Method::Raps),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Fitted threshold state shared by the quantile-based predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileState {
    pub method: Method,
    pub alpha: f64,
    /// Score threshold (naive, RAPS) or set size k* (top-k). May be `+∞`.
    pub threshold: f64,
}

/// A calibrated set-valued classifier.
pub trait SetPredictor: Send + Sync {
    fn method(&self) -> Method;

    fn alpha(&self) -> f64;

    /// Ascending label indices.
    fn predict_set(&self, x: &Instance) -> Vec<usize>;
}

fn check_cal<M: ScoreModel + ?Sized>(model: &M, cal: &Dataset) -> Result<()> {
    if cal.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cal.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: cal.dim(),
        });
    }
    Ok(())
}

/// Thresholds `1 − p(k|x)` at the conformal quantile of calibration scores.
pub struct NaivePredictor<'m, M: ?Sized> {
    model: &'m M,
    pub state: QuantileState,
}

pub fn naive_predictor<'m, M: ScoreModel + ?Sized>(
    model: &'m M,
    cal: &Dataset,
    alpha: f64,
) -> Result<NaivePredictor<'m, M>> {
    check_cal(model, cal)?;
    let scores: Vec<f64> = cal
        .iter()
        .map(|(x, y)| 1.0 - model.predict_proba(&x.features)[y])
        .collect();
    Ok(NaivePredictor {
        model,
        state: QuantileState {
            method: Method::Naive,
            alpha,
            threshold: conformal_quantile(&scores, alpha)?,
        },
    })
}

impl<M: ScoreModel + ?Sized> SetPredictor for NaivePredictor<'_, M> {
    fn method(&self) -> Method {
        Method::Naive
    }

    fn alpha(&self) -> f64 {
        self.state.alpha
    }

    fn predict_set(&self, x: &Instance) -> Vec<usize> {
        let p = self.model.predict_proba(&x.features);
        (0..p.len())
            .filter(|&k| 1.0 - p[k] <= self.state.threshold)
            .collect()
    }
}

/// Returns the `k*` most probable labels, where `k*` is the conformal
/// quantile of the true label's 1-based rank on calibration data.
pub struct TopKPredictor<'m, M: ?Sized> {
    model: &'m M,
    pub state: QuantileState,
}

impl<M: ?Sized> TopKPredictor<'_, M> {
    pub fn k_star(&self) -> usize {
        if self.state.threshold.is_finite() {
            self.state.threshold as usize
        } else {
            usize::MAX
        }
    }
}

/// 1-based position of `y` in [`descending_order`].
pub fn true_label_rank(probs: &[f64], y: usize) -> usize {
    descending_order(probs)
        .iter()
        .position(|&k| k == y)
        .unwrap()
        + 1
}

pub fn topk_predictor<'m, M: ScoreModel + ?Sized>(
    model: &'m M,
    cal: &Dataset,
    alpha: f64,
) -> Result<TopKPredictor<'m, M>> {
    check_cal(model, cal)?;
    let ranks: Vec<f64> = cal
        .iter()
        .map(|(x, y)| true_label_rank(&model.predict_proba(&x.features), y) as f64)
        .collect();
    Ok(TopKPredictor {
        model,
        state: QuantileState {
            method: Method::TopK,
            alpha,
            threshold: conformal_quantile(&ranks, alpha)?,
        },
    })
}

impl<M: ScoreModel + ?Sized> SetPredictor for TopKPredictor<'_, M> {
    fn method(&self) -> Method {
        Method::TopK
    }

    fn alpha(&self) -> f64 {
        self.state.alpha
    }

    fn predict_set(&self, x: &Instance) -> Vec<usize> {
        let p = self.model.predict_proba(&x.features);
        let mut set: Vec<usize> = descending_order(&p)
            .into_iter()
            .take(self.k_star())
            .collect();
        set.sort_unstable();
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RapsConfig {
    pub lambda: f64,
    pub k_reg: usize,
    /// Randomised tie-breaking at the boundary label.
    pub randomized: bool,
    /// Seed for the randomised variant.
    pub seed: u64,
}

impl Default for RapsConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            k_reg: 1,
            randomized: false,
            seed: 0,
        }
    }
}

/// Regularised adaptive prediction sets.
pub struct RapsPredictor<'m, M: ?Sized> {
    model: &'m M,
    pub config: RapsConfig,
    pub state: QuantileState,
}

/// RAPS score of each position in descending order: cumulative mass up to and
/// including that label plus `λ·max(0, rank − k_reg)`.
fn raps_path(probs: &[f64], cfg: &RapsConfig) -> (Vec<usize>, Vec<f64>) {
    let order = descending_order(probs);
    let mut cum = 0.0;
    let scores = order
        .iter()
        .enumerate()
        .map(|(pos, &k)| {
            cum += probs[k];
            cum + cfg.lambda * (pos + 1).saturating_sub(cfg.k_reg) as f64
        })
        .collect();
    (order, scores)
}

/// RAPS calibration score of `(probs, y)`.
pub fn raps_score(probs: &[f64], y: usize, cfg: &RapsConfig) -> f64 {
    let (order, scores) = raps_path(probs, cfg);
    scores[order.iter().position(|&k| k == y).unwrap()]
}

/// Deterministic unit draw for the randomised variant, keyed by instance id.
fn id_uniform(seed: u64, id: &str) -> f64 {
    // FNV-1a then a SplitMix64 finaliser
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn raps_predictor<'m, M: ScoreModel + ?Sized>(
    model: &'m M,
    cal: &Dataset,
    alpha: f64,
    config: RapsConfig,
) -> Result<RapsPredictor<'m, M>> {
    check_cal(model, cal)?;
    if !(config.lambda >= 0.0) || config.k_reg == 0 {
        return Err(Error::invalid("raps needs lambda ≥ 0 and k_reg ≥ 1"));
    }
    let scores: Vec<f64> = cal
        .iter()
        .map(|(x, y)| {
            let p = model.predict_proba(&x.features);
            let s = raps_score(&p, y, &config);
            if config.randomized {
                s - id_uniform(config.seed, &x.id) * p[y]
            } else {
                s
            }
        })
        .collect();
    Ok(RapsPredictor {
        model,
        config,
        state: QuantileState {
            method: Method::Raps,
            alpha,
            threshold: conformal_quantile(&scores, alpha)?,
        },
    })
}

impl<M: ScoreModel + ?Sized> SetPredictor for RapsPredictor<'_, M> {
    fn method(&self) -> Method {
        Method::Raps
    }

    fn alpha(&self) -> f64 {
        self.state.alpha
    }

    fn predict_set(&self, x: &Instance) -> Vec<usize> {
        let p = self.model.predict_proba(&x.features);
        let (order, scores) = raps_path(&p, &self.config);
        let u = if self.config.randomized {
            id_uniform(self.config.seed, &x.id)
        } else {
            0.0
        };
        let mut set: Vec<usize> = order
            .iter()
            .zip(&scores)
            .enumerate()
            .filter(|&(pos, (&k, &s))| pos == 0 || s - u * p[k] <= self.state.threshold)
            .map(|(_, (&k, _))| k)
            .collect();
        set.sort_unstable();
        set
    }
}

/// Mondrian conformal sets behind the common interface.
pub struct MondrianPredictor<'m, M: ?Sized> {
    model: &'m M,
    table: &'m CalibrationTable,
    alpha: f64,
    smoothed: bool,
}

pub fn mondrian_predictor<'m, M: ScoreModel + ?Sized>(
    model: &'m M,
    table: &'m CalibrationTable,
    alpha: f64,
    smoothed: bool,
) -> Result<MondrianPredictor<'m, M>> {
    check_alpha(alpha)?;
    check_fingerprint(model, table)?;
    Ok(MondrianPredictor {
        model,
        table,
        alpha,
        smoothed,
    })
}

impl<M: ScoreModel + ?Sized> SetPredictor for MondrianPredictor<'_, M> {
    fn method(&self) -> Method {
        Method::Mondrian
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn predict_set(&self, x: &Instance) -> Vec<usize> {
        let p = p_values(self.model, self.table, &x.features, self.smoothed);
        (0..p.len()).filter(|&k| p[k] > self.alpha).collect()
    }
}

/// Builds any method as a boxed predictor.
pub fn build_predictor<'m, M: ScoreModel + ?Sized>(
    method: Method,
    model: &'m M,
    table: &'m CalibrationTable,
    cal: &Dataset,
    alpha: f64,
    smoothed: bool,
    raps: RapsConfig,
) -> Result<Box<dyn SetPredictor + 'm>> {
    check_alpha(alpha)?;
    Ok(match method {
        Method::Mondrian => Box::new(mondrian_predictor(model, table, alpha, smoothed)?),
        Method::Naive => Box::new(naive_predictor(model, cal, alpha)?),
        Method::TopK => Box::new(topk_predictor(model, cal, alpha)?),
        Method::Raps => Box::new(raps_predictor(model, cal, alpha, raps)?),
    })
}

/// True when `set` is nonempty and every member is a target label.
pub fn is_decisive(set: &[usize], targets: &[usize]) -> bool {
    !set.is_empty() && set.iter().all(|k| targets.contains(k))
}

/// Number of rows whose set is a nonempty subset of `targets`.
pub fn count_detected<P: SetPredictor + ?Sized>(
    pred: &P,
    ds: &Dataset,
    targets: &[usize],
) -> usize {
    ds.instances()
        .iter()
        .filter(|x| is_decisive(&pred.predict_set(x), targets))
        .count()
}

/// One row of the detector-comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub alpha: f64,
    pub mondrian: usize,
    pub raps: usize,
    pub naive: usize,
    pub top_k: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn comparison_table<M: ScoreModel + ?Sized>(
    model: &M,
    table: &CalibrationTable,
    cal: &Dataset,
    test: &Dataset,
    alphas: &[f64],
    targets: &[usize],
    smoothed: bool,
    raps: RapsConfig,
) -> Result<Vec<ComparisonRow>> {
    alphas
        .iter()
        .map(|&alpha| {
            let count = |m: Method| -> Result<usize> {
                let p = build_predictor(m, model, table, cal, alpha, smoothed, raps)?;
                Ok(count_detected(p.as_ref(), test, targets))
            };
            Ok(ComparisonRow {
                alpha,
                mondrian: count(Method::Mondrian)?,
                raps: count(Method::Raps)?,
                naive: count(Method::Naive)?,
                top_k: count(Method::TopK)?,
            })
        })
        .collect()
}
